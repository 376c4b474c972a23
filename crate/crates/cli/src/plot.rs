//! Minimal SVG line charts with error bars.
//!
//! The plotted numbers are repeated in XML comments at the top of each file
//! so a chart can be checked or re-plotted without the CSV next to it.

use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<SeriesPoint>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Pads a degenerate range so the chart still has an extent.
fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

pub fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let (x_lo, x_hi) = span(
        pts().map(|p| p.x).fold(f64::INFINITY, f64::min),
        pts().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
    );
    let y_min = pts().map(|p| p.mean - p.stddev).fold(f64::INFINITY, f64::min).min(0.0);
    let y_max = pts().map(|p| p.mean + p.stddev).fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = if y_max.is_finite() { span(y_min, y_max * 1.05) } else { (0.0, 1.0) };
    let (x_lo, x_hi) = if x_lo.is_finite() { (x_lo, x_hi) } else { (0.0, 1.0) };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, "<!-- data: series,x,mean,stddev,n -->");
    for s in series {
        for p in &s.points {
            let _ = writeln!(out, "<!-- data: {},{},{},{},{} -->", escape(&s.label), p.x, p.mean, p.stddev, p.n);
        }
    }
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));

    // Axes and ticks.
    let (x0, y0, x1, y1) = (MARGIN_LEFT, MARGIN_TOP + plot_h, MARGIN_LEFT + plot_w, MARGIN_TOP);
    let _ = writeln!(out, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#);
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x_lo + f * (x_hi - x_lo), y_lo + f * (y_hi - y_lo));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(out, r#"<line x1="{px}" y1="{y0}" x2="{px}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(out, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(xv));
        let _ = writeln!(out, r#"<line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(out, r##"<line x1="{x0}" y1="{py}" x2="{x1}" y2="{py}" stroke="#dddddd"/>"##);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 15.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{cy}" text-anchor="middle" transform="rotate(-90 18 {cy})">{}</text>"#,
        escape(y_label),
        cy = MARGIN_TOP + plot_h / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|p| format!("{},{}", sx(p.x), sy(p.mean))).collect();
        if !path.is_empty() {
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        }
        for p in &s.points {
            let (px, lo, hi) = (sx(p.x), sy(p.mean - p.stddev), sy(p.mean + p.stddev));
            let _ = writeln!(out, r#"<line x1="{px}" y1="{lo}" x2="{px}" y2="{hi}" stroke="{color}"/>"#);
            let _ = writeln!(out, r#"<line x1="{}" y1="{lo}" x2="{}" y2="{lo}" stroke="{color}"/>"#, px - 4.0, px + 4.0);
            let _ = writeln!(out, r#"<line x1="{}" y1="{hi}" x2="{}" y2="{hi}" stroke="{color}"/>"#, px - 4.0, px + 4.0);
            let _ = writeln!(out, r#"<circle cx="{px}" cy="{}" r="3" fill="{color}"/>"#, sy(p.mean));
        }
        let ly = MARGIN_TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 15.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeds_data_and_is_deterministic() {
        let series = vec![Series {
            label: "EAR".into(),
            points: vec![
                SeriesPoint { x: 0.0, mean: 10.0, stddev: 1.0, n: 3 },
                SeriesPoint { x: 30.0, mean: 12.5, stddev: 0.0, n: 3 },
            ],
        }];
        let a = render("t", "x", "y", &series);
        assert!(a.contains("<!-- data: EAR,30,12.5,0,3 -->"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a, render("t", "x", "y", &series));
    }

    #[test]
    fn empty_and_flat_inputs_render() {
        assert!(render("t", "x", "y", &[]).contains("<svg"));
        let flat = vec![Series {
            label: "A".into(),
            points: vec![SeriesPoint { x: 5.0, mean: 0.0, stddev: 0.0, n: 1 }],
        }];
        assert!(!render("t", "x", "y", &flat).contains("NaN"));
    }

    #[test]
    fn tick_labels() {
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(12.5), "12.5");
        assert_eq!(tick(200.0), "200");
        assert_eq!(tick(0.001), "1.00e-3");
    }
}
