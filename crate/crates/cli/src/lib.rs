//! The `earsim` command line: single runs, matched-seed AODV/EAR
//! comparisons, parameter sweeps and the Friis power table.

pub mod overrides;
pub mod plot;

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use earsim_core::engine::trace::write_run_dir;
use earsim_core::engine::{run_traced, RunOutput, TraceOptions};
use earsim_core::radio::{power_table, TABLE_DISTANCES};
use earsim_core::scenario::{default_connection_count, ConfigError};
use earsim_core::{MetricsReport, Protocol, ScenarioConfig};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use overrides::{BaseScenario, ConfigOverrides};
use plot::{Series, SeriesPoint};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// 1 for configuration or usage problems, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Csv { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Parser, Debug)]
#[command(name = "earsim", version, about = "Energy-aware AODV (EAR) vs AODV MANET simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one scenario and write its traces and summary.
    Run(RunArgs),
    /// Run AODV and EAR on matched seeds and tabulate the differences.
    Compare(CompareArgs),
    /// Sweep one scenario parameter for both protocols.
    Sweep(SweepArgs),
    /// Print the Friis transmit power needed per distance.
    PowerTable(PowerTableArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario JSON file; defaults apply when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "earsim-out")]
    pub out: PathBuf,
    /// Trace sampling period in seconds for mobility and energy.
    #[arg(long, default_value_t = 1.0)]
    pub sample_interval: f64,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct BatchArgs {
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed_count")]
    pub seeds: Option<Vec<u64>>,
    /// Use seeds 1..=N.
    #[arg(long)]
    pub seed_count: Option<u64>,
    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write per-run trace CSVs.
    #[arg(long)]
    pub trace: bool,
}

impl BatchArgs {
    fn seeds(&self, default_count: u64) -> Result<Vec<u64>, CliError> {
        let seeds = match (&self.seeds, self.seed_count) {
            (Some(s), _) => s.clone(),
            (None, Some(n)) => (1..=n).collect(),
            (None, None) => (1..=default_count).collect(),
        };
        if seeds.is_empty() {
            return Err(CliError::Usage("at least one seed is required".into()));
        }
        Ok(seeds)
    }
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub batch: BatchArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Nodes,
    Connections,
    Speed,
    Pause,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Nodes => "nodes",
            Axis::Connections => "connections",
            Axis::Speed => "speed",
            Axis::Pause => "pause",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Axis::Nodes => "number of nodes",
            Axis::Connections => "number of connections",
            Axis::Speed => "node speed (m/s)",
            Axis::Pause => "pause time (s)",
        }
    }

    /// Sets the swept field. Sweeping nodes keeps ⌈n/2⌉ connections unless
    /// the connection count is pinned.
    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64, connections_pinned: bool) -> Result<(), CliError> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(CliError::Usage(format!("{} must be a whole number, got {value}", self.name())))
            }
        };
        match self {
            Axis::Nodes => {
                cfg.node_count = count()?;
                if !connections_pinned {
                    cfg.connection_count = default_connection_count(cfg.node_count);
                }
            }
            Axis::Connections => cfg.connection_count = count()?,
            Axis::Speed => {
                cfg.speed_min = value;
                cfg.speed_max = value;
            }
            Axis::Pause => cfg.pause_time = value,
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Write CSV only.
    #[arg(long)]
    pub no_plots: bool,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub batch: BatchArgs,
}

#[derive(Args, Debug)]
pub struct PowerTableArgs {
    /// Comma-separated distances in meters.
    #[arg(long, value_delimiter = ',')]
    pub distances: Option<Vec<f64>>,
    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

/// Parses `args` and executes the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Run(a) => cmd_run(a).map(|r| {
            println!("{}", summary_line(&r));
        }),
        Command::Compare(a) => cmd_compare(a).map(|rows| {
            if let Some(mean) = rows.last() {
                println!(
                    "mean over {} seeds: AODV {:.3} J, EAR {:.3} J, reduction {:.2}%",
                    rows.len() - 1,
                    mean.aodv_total_energy,
                    mean.ear_total_energy,
                    mean.energy_reduction_pct
                );
            }
        }),
        Command::Sweep(a) => cmd_sweep(a).map(|rows| println!("{} runs written", rows.len())),
        Command::PowerTable(a) => cmd_power_table(a),
    }
}

fn summary_line(r: &MetricsReport) -> String {
    format!(
        "{} seed {}: total_energy {:.4} J, lifetime {}{} s, alive_nodes {}/{}, delivered {}/{}",
        r.protocol,
        r.rng_seed,
        r.total_energy,
        if r.lifetime_censored { ">=" } else { "" },
        r.network_lifetime,
        r.alive_nodes,
        r.node_count,
        r.packets_delivered,
        r.packets_emitted
    )
}

fn trace_opts(common: &Common) -> Result<TraceOptions, CliError> {
    if !(common.sample_interval > 0.0) {
        return Err(CliError::Usage("--sample-interval must be positive".into()));
    }
    Ok(TraceOptions {
        sample_interval: common.sample_interval,
    })
}

fn run_one(cfg: &ScenarioConfig, traces: Option<TraceOptions>) -> Result<RunOutput, CliError> {
    Ok(match traces {
        Some(opts) => run_traced(cfg, opts)?,
        None => earsim_core::run(cfg)?,
    })
}

/// Runs every config, in parallel up to `jobs`, returning outputs in input
/// order.
pub fn run_batch(
    cfgs: &[ScenarioConfig],
    jobs: Option<usize>,
    traces: Option<TraceOptions>,
) -> Result<Vec<RunOutput>, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cfgs.par_iter().map(|c| run_one(c, traces)).collect())
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_output(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    write_run_dir(dir, &out.report, out.traces.as_ref()).map_err(io_err(dir))
}

pub fn cmd_run(args: &RunArgs) -> Result<MetricsReport, CliError> {
    let cfg = BaseScenario::load(args.common.scenario.as_deref())?.with(&args.common.overrides)?;
    let out = run_one(&cfg, Some(trace_opts(&args.common)?))?;
    write_output(&args.common.out, &out)?;
    std::fs::write(args.common.out.join("scenario.json"), cfg.to_json()).map_err(io_err(&args.common.out))?;
    Ok(out.report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    /// Seed number, or `mean` for the averaged row.
    pub seed: String,
    pub aodv_total_energy: f64,
    pub ear_total_energy: f64,
    /// (AODV − EAR) / AODV × 100.
    pub energy_reduction_pct: f64,
    pub aodv_lifetime: f64,
    pub ear_lifetime: f64,
    pub lifetime_delta: f64,
    /// 1/0 per seed; fraction of censored runs on the mean row.
    pub aodv_lifetime_censored: f64,
    pub ear_lifetime_censored: f64,
    pub aodv_alive_nodes: f64,
    pub ear_alive_nodes: f64,
    pub alive_delta: f64,
}

pub fn reduction_pct(aodv: f64, ear: f64) -> f64 {
    if aodv == 0.0 {
        0.0
    } else {
        (aodv - ear) / aodv * 100.0
    }
}

impl ComparisonRow {
    pub fn paired(seed: u64, aodv: &MetricsReport, ear: &MetricsReport) -> Self {
        ComparisonRow {
            seed: seed.to_string(),
            aodv_total_energy: aodv.total_energy,
            ear_total_energy: ear.total_energy,
            energy_reduction_pct: reduction_pct(aodv.total_energy, ear.total_energy),
            aodv_lifetime: aodv.network_lifetime,
            ear_lifetime: ear.network_lifetime,
            lifetime_delta: ear.network_lifetime - aodv.network_lifetime,
            aodv_lifetime_censored: f64::from(u8::from(aodv.lifetime_censored)),
            ear_lifetime_censored: f64::from(u8::from(ear.lifetime_censored)),
            aodv_alive_nodes: aodv.alive_nodes as f64,
            ear_alive_nodes: ear.alive_nodes as f64,
            alive_delta: ear.alive_nodes as f64 - aodv.alive_nodes as f64,
        }
    }

    /// Column means; the reduction is taken between the mean energies.
    pub fn mean(rows: &[ComparisonRow]) -> Self {
        let m = |f: fn(&ComparisonRow) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>()).0;
        let (aodv_e, ear_e) = (m(|r| r.aodv_total_energy), m(|r| r.ear_total_energy));
        let (aodv_l, ear_l) = (m(|r| r.aodv_lifetime), m(|r| r.ear_lifetime));
        let (aodv_a, ear_a) = (m(|r| r.aodv_alive_nodes), m(|r| r.ear_alive_nodes));
        ComparisonRow {
            seed: "mean".into(),
            aodv_total_energy: aodv_e,
            ear_total_energy: ear_e,
            energy_reduction_pct: reduction_pct(aodv_e, ear_e),
            aodv_lifetime: aodv_l,
            ear_lifetime: ear_l,
            lifetime_delta: ear_l - aodv_l,
            aodv_lifetime_censored: m(|r| r.aodv_lifetime_censored),
            ear_lifetime_censored: m(|r| r.ear_lifetime_censored),
            aodv_alive_nodes: aodv_a,
            ear_alive_nodes: ear_a,
            alive_delta: ear_a - aodv_a,
        }
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn with_protocol(cfg: &ScenarioConfig, protocol: Protocol, seed: u64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.protocol = protocol;
    c.rng_seed = seed;
    c
}

const PROTOCOLS: [Protocol; 2] = [Protocol::Aodv, Protocol::Ear];

/// Paired AODV/EAR runs per seed; the last row holds the means.
pub fn cmd_compare(args: &CompareArgs) -> Result<Vec<ComparisonRow>, CliError> {
    let base = BaseScenario::load(args.common.scenario.as_deref())?.with(&args.common.overrides)?;
    let seeds = args.batch.seeds(10)?;
    let traces = if args.batch.trace { Some(trace_opts(&args.common)?) } else { None };
    let cfgs: Vec<ScenarioConfig> = seeds
        .iter()
        .flat_map(|&s| PROTOCOLS.map(|p| with_protocol(&base, p, s)))
        .collect();
    let outputs = run_batch(&cfgs, args.batch.jobs, traces)?;

    let out = &args.common.out;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut rows = Vec::with_capacity(seeds.len() + 1);
    for (&seed, pair) in seeds.iter().zip(outputs.chunks(2)) {
        for o in pair {
            write_output(&out.join(format!("seed-{seed}")).join(o.report.protocol.to_ascii_lowercase()), o)?;
        }
        rows.push(ComparisonRow::paired(seed, &pair[0].report, &pair[1].report));
    }
    rows.push(ComparisonRow::mean(&rows));
    write_csv(&out.join("comparison.csv"), &rows)?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub protocol: &'static str,
    pub seed: u64,
    pub total_energy: f64,
    pub lifetime: f64,
    pub lifetime_censored: bool,
    pub alive_nodes: usize,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    if args.values.is_empty() {
        return Err(CliError::Usage("--values must not be empty".into()));
    }
    let loaded = BaseScenario::load(args.common.scenario.as_deref())?;
    let base = loaded.with(&args.common.overrides)?;
    let pinned = loaded.connections_pinned || args.common.overrides.pins_connections();
    let seeds = args.batch.seeds(5)?;
    let traces = if args.batch.trace { Some(trace_opts(&args.common)?) } else { None };

    let mut cfgs = Vec::new();
    let mut keys = Vec::new();
    for &value in &args.values {
        let mut at = base.clone();
        args.axis.apply(&mut at, value, pinned)?;
        at.validate()?;
        for p in PROTOCOLS {
            for &s in &seeds {
                cfgs.push(with_protocol(&at, p, s));
                keys.push((value, p, s));
            }
        }
    }
    let outputs = run_batch(&cfgs, args.batch.jobs, traces)?;

    let out = &args.common.out;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut rows = Vec::with_capacity(outputs.len());
    for (&(value, p, seed), o) in keys.iter().zip(&outputs) {
        let dir = out
            .join("runs")
            .join(format!("{}-{value}", args.axis.name()))
            .join(p.as_str().to_ascii_lowercase())
            .join(format!("seed-{seed}"));
        write_output(&dir, o)?;
        let r = &o.report;
        rows.push(SweepRow {
            axis: args.axis.name(),
            value,
            protocol: p.as_str(),
            seed,
            total_energy: r.total_energy,
            lifetime: r.network_lifetime,
            lifetime_censored: r.lifetime_censored,
            alive_nodes: r.alive_nodes,
        });
    }
    write_csv(&out.join("sweep.csv"), &rows)?;
    if !args.no_plots {
        write_plots(out, args.axis, &args.values, &rows)?;
    }
    Ok(rows)
}

/// Mean ± stddev per axis value per protocol for one metric.
pub fn sweep_series(values: &[f64], rows: &[SweepRow], metric: fn(&SweepRow) -> f64) -> Vec<Series> {
    PROTOCOLS
        .iter()
        .map(|p| Series {
            label: p.as_str().to_owned(),
            points: values
                .iter()
                .map(|&v| {
                    let xs: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.value == v && r.protocol == p.as_str())
                        .map(metric)
                        .collect();
                    let (mean, stddev) = mean_std(&xs);
                    SeriesPoint { x: v, mean, stddev, n: xs.len() }
                })
                .collect(),
        })
        .collect()
}

/// File stem, axis label and extractor of one plotted metric.
type Metric = (&'static str, &'static str, fn(&SweepRow) -> f64);

fn write_plots(out: &Path, axis: Axis, values: &[f64], rows: &[SweepRow]) -> Result<(), CliError> {
    let metrics: [Metric; 3] = [
        ("total_energy", "total energy (J)", |r| r.total_energy),
        ("lifetime", "network lifetime (s)", |r| r.lifetime),
        ("alive_nodes", "alive nodes", |r| r.alive_nodes as f64),
    ];
    for (name, y_label, metric) in metrics {
        let svg = plot::render(
            &format!("{y_label} vs {}", axis.label()),
            axis.label(),
            y_label,
            &sweep_series(values, rows, metric),
        );
        let path = out.join(format!("{name}_vs_{}.svg", axis.name()));
        std::fs::write(&path, svg).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn cmd_power_table(args: &PowerTableArgs) -> Result<(), CliError> {
    let cfg = BaseScenario::load(args.scenario.as_deref())?.with(&args.overrides)?;
    let distances = args.distances.clone().unwrap_or_else(|| TABLE_DISTANCES.to_vec());
    let rows = power_table(&distances, &cfg.radio_params()).map_err(|e| CliError::Usage(e.to_string()))?;
    match &args.out {
        Some(path) => write_csv(path, &rows),
        None => {
            let mut w = csv::Writer::from_writer(io::stdout());
            for r in &rows {
                w.serialize(r).map_err(|source| CliError::Csv {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
            }
            w.flush().map_err(io_err(Path::new("<stdout>")))
        }
    }
}
