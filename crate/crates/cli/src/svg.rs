//! Minimal standalone SVG line plots: one polyline per series, a legend and
//! labeled axes.

use std::fmt::Write;

use parastab::experiments::{Plot, Series};
use parastab::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Roughly five "nice" tick positions covering `[lo, hi]`.
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    // Clean up representation noise such as 0.30000000000000004.
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// Renders `plot` to SVG text. Fails on empty input, on non-finite points, and
/// on non-positive values when the y axis is logarithmic.
pub fn render(plot: &Plot) -> Result<String> {
    if plot.series.is_empty() || plot.series.iter().all(|s| s.x.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "plot `{}` has no data",
            plot.name
        )));
    }
    for s in &plot.series {
        if s.x.len() != s.y.len() {
            return Err(Error::InvalidArgument(format!(
                "series `{}` has mismatched lengths",
                s.label
            )));
        }
        for (&x, &y) in s.x.iter().zip(&s.y) {
            if plot.log_y && !(y > 0.0) {
                return Err(Error::NonPositiveLogValue(y));
            }
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "series `{}` has a non-finite point",
                    s.label
                )));
            }
        }
    }
    let ymap = |y: f64| if plot.log_y { y.log10() } else { y };
    let (x0, x1) = bounds(plot.series.iter().flat_map(|s| s.x.iter().copied()));
    let (mut y0, mut y1) = bounds(
        plot.series
            .iter()
            .flat_map(|s| s.y.iter().map(|&y| ymap(y))),
    );
    if plot.log_y {
        y0 = y0.floor();
        y1 = y1.ceil().max(y0 + 1.0);
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    for t in linear_ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{b2}" stroke="black"/><text x="{x:.2}" y="{ty}" text-anchor="middle">{}</text>"#,
            tick_label(t),
            b = TOP + ph,
            b2 = TOP + ph + 5.0,
            ty = TOP + ph + 19.0
        );
    }
    let yticks: Vec<f64> = if plot.log_y {
        let step = ((y1 - y0) / 8.0).ceil().max(1.0);
        let mut v = vec![];
        let mut e = y0;
        while e <= y1 + 1e-9 {
            v.push(e);
            e += step;
        }
        v
    } else {
        linear_ticks(y0, y1)
    };
    for t in yticks {
        let y = py(t);
        let label = if plot.log_y {
            format!("1e{}", t as i64)
        } else {
            tick_label(t)
        };
        let _ = writeln!(
            out,
            r#"<line x1="{l2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{label}</text>"#,
            l2 = LEFT - 5.0,
            tx = LEFT - 8.0,
            ty = y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{c}" text-anchor="middle" transform="rotate(-90 18 {c})">{}</text>"#,
        escape(&plot.y_label),
        c = TOP + ph / 2.0
    );

    let drawn: Vec<&Series> = plot.series.iter().filter(|s| !s.x.is_empty()).collect();
    for (i, s) in drawn.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> =
            s.x.iter()
                .zip(&s.y)
                .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(ymap(y))))
                .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Convenience wrapper for a one-off plot of `(label, t, value)` series.
pub fn emit_svg(series: Vec<Series>, log_y: bool, path: &std::path::Path) -> Result<()> {
    let plot = Plot {
        name: path
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        title: String::new(),
        x_label: "t".into(),
        y_label: String::new(),
        log_y,
        series,
    };
    let text = render(&plot)?;
    std::fs::write(path, text).map_err(|e| Error::Io(e.to_string()))
}
