//! Hand-written SVG line chart of joint-angle series.

use std::fmt::Write as _;

use jointsync_core::model::AngleSample;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlotError {
    #[error("no defined angle samples to plot")]
    NoData,
}

pub const ESTIMATE_COLOR: &str = "#000000";
pub const REFERENCE_COLOR: &str = "#d62728";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;

/// A tick step from {1, 2, 5} × 10^k giving about `target` intervals.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn ticks(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the estimate in black and the optional reference in red. Each
/// contiguous run of defined samples becomes one polyline.
pub fn render_svg(
    estimate: &[AngleSample],
    reference: Option<&[AngleSample]>,
    title: &str,
) -> Result<String, PlotError> {
    let defined = |s: &[AngleSample]| {
        s.iter()
            .filter_map(|x| x.angle_deg.map(|a| (x.timestamp_ms, a)))
            .collect::<Vec<_>>()
    };
    let est = defined(estimate);
    if est.is_empty() {
        return Err(PlotError::NoData);
    }
    let refs = reference.map(defined).unwrap_or_default();
    let all = || est.iter().chain(&refs);

    let t0 = all().map(|p| p.0).min().expect("non-empty");
    let t1 = all().map(|p| p.0).max().expect("non-empty");
    let (mut y0, mut y1) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.1), hi.max(p.1))
    });
    if y1 - y0 < 1.0 {
        let mid = 0.5 * (y0 + y1);
        (y0, y1) = (mid - 1.0, mid + 1.0);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let x_span_s = ((t1 - t0) as f64 / 1000.0).max(1e-3);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |t: i64| LEFT + (t - t0) as f64 / 1000.0 / x_span_s * plot_w;
    let sy = |a: f64| TOP + (y1 - a) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        w,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        w,
        r#"<text x="{LEFT:.2}" y="20" font-size="14">{}</text>"#,
        escape(title)
    );

    let _ = writeln!(w, r##"<g stroke="#cccccc" stroke-width="1">"##);
    let x_step = nice_step(x_span_s, 8.0);
    let y_step = nice_step(y1 - y0, 8.0);
    let xt = ticks(0.0, x_span_s, x_step);
    let yt = ticks(y0, y1, y_step);
    for &s in &xt {
        let x = LEFT + s / x_span_s * plot_w;
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}"/>"#,
            TOP + plot_h
        );
    }
    for &a in &yt {
        let y = sy(a);
        let _ = writeln!(
            w,
            r#"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#,
            LEFT + plot_w
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#000000" stroke-width="1"/>"##
    );
    for &s in &xt {
        let x = LEFT + s / x_span_s * plot_w;
        let _ = writeln!(
            w,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 16.0,
            fmt_tick(s, x_step)
        );
    }
    for &a in &yt {
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(a) + 4.0,
            fmt_tick(a, y_step)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        w,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">angle (deg)</text>"#,
        TOP + plot_h / 2.0
    );

    let mut series = Vec::new();
    if let Some(r) = reference {
        series.push((r, REFERENCE_COLOR, "reference"));
    }
    series.push((estimate, ESTIMATE_COLOR, "estimate"));
    for (samples, color, label) in series {
        let mut runs: Vec<Vec<(i64, f64)>> = vec![Vec::new()];
        for s in samples {
            match s.angle_deg {
                Some(a) => runs.last_mut().expect("non-empty").push((s.timestamp_ms, a)),
                None if !runs.last().expect("non-empty").is_empty() => runs.push(Vec::new()),
                None => {}
            }
        }
        let _ = writeln!(w, r#"<g class="{label}">"#);
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let points: Vec<String> = run.iter().map(|&(t, a)| format!("{:.2},{:.2}", sx(t), sy(a))).collect();
            let _ = writeln!(
                w,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                points.join(" ")
            );
        }
        let _ = writeln!(w, "</g>");
    }

    let mut entries = vec![(ESTIMATE_COLOR, "estimate")];
    if reference.is_some() {
        entries.push((REFERENCE_COLOR, "reference"));
    }
    // legend in the header row, right-aligned
    let mut x = WIDTH - RIGHT - 100.0 * entries.len() as f64;
    for (color, label) in entries {
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="16.00" x2="{:.2}" y2="16.00" stroke="{color}" stroke-width="2"/>"#,
            x + 24.0
        );
        let _ = writeln!(w, r#"<text x="{:.2}" y="20.00">{label}</text>"#, x + 30.0);
        x += 100.0;
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}
