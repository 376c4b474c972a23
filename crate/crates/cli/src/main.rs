fn main() {
    std::process::exit(earsim_cli::main_with_args(std::env::args_os()));
}
