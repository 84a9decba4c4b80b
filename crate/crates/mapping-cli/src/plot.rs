//! Learning-curve plots as self-contained SVG: the raw per-episode series in
//! light gray with a Gaussian-smoothed overlay, plus axes and tick labels.
//! No plotting library; the markup is assembled directly.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mapping_core::train::{smooth_curve, LearningCurve};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// Data-to-pixel mapping for the plot area. The y axis is inverted because
/// SVG y grows downward.
struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let (x_min, mut x_max) = span(xs);
        let (mut y_min, mut y_max) = span(ys);
        if x_max == x_min {
            x_max = x_min + 1.0;
        }
        if y_max == y_min {
            y_min -= 1.0;
            y_max += 1.0;
        } else {
            let pad = 0.05 * (y_max - y_min);
            y_min -= pad;
            y_max += pad;
        }
        Frame {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn x_pix(&self, x: f64) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * w
    }

    fn y_pix(&self, y: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        MARGIN_TOP + (self.y_max - y) / (self.y_max - self.y_min) * h
    }
}

fn span(values: &[f64]) -> (f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Largest of 1/2/5 x 10^k not exceeding the ideal spacing for about
/// `target` ticks.
fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target.max(1) as f64;
    let magnitude = 10f64.powf(raw.log10().floor());
    let normalized = raw / magnitude;
    let factor = if normalized <= 1.0 {
        1.0
    } else if normalized <= 2.0 {
        2.0
    } else if normalized <= 5.0 {
        5.0
    } else {
        10.0
    };
    factor * magnitude
}

fn ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    let step = nice_step(max - min, target);
    let first = (min / step).ceil() * step;
    (0..)
        .map(|i| first + step * i as f64)
        .take_while(|&t| t <= max + 1e-9 * step)
        .take(100)
        .collect()
}

fn tick_label(value: f64, step: f64) -> String {
    if step >= 1.0 {
        format!("{value:.0}")
    } else {
        let decimals = (-step.log10().floor()) as usize;
        format!("{value:.decimals$}")
    }
}

fn polyline_points(frame: &Frame, xs: &[f64], ys: &[f64]) -> String {
    let mut points = String::new();
    for (x, y) in xs.iter().zip(ys) {
        if !points.is_empty() {
            points.push(' ');
        }
        let _ = write!(points, "{:.2},{:.2}", frame.x_pix(*x), frame.y_pix(*y));
    }
    points
}

/// Renders the curve to SVG markup. Fails on an empty curve.
pub fn render_curve_svg(curve: &LearningCurve, smoothing_width: f64) -> Result<String> {
    if curve.entries.is_empty() {
        bail!("cannot plot an empty learning curve");
    }
    let xs: Vec<f64> = curve.entries.iter().map(|e| e.episode as f64).collect();
    let ys = curve.rewards();
    let smoothed = smooth_curve(&ys, smoothing_width);
    let frame = Frame::new(&xs, &ys);

    let plot_right = WIDTH - MARGIN_RIGHT;
    let plot_bottom = HEIGHT - MARGIN_BOTTOM;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(
        svg,
        r#"  <rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    let x_step = nice_step(frame.x_max - frame.x_min, 8);
    for t in ticks(frame.x_min, frame.x_max, 8) {
        let x = frame.x_pix(t);
        let _ = writeln!(
            svg,
            r##"  <line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{plot_bottom}" stroke="#eeeeee"/>"##
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            plot_bottom + 20.0,
            tick_label(t, x_step)
        );
    }
    let y_step = nice_step(frame.y_max - frame.y_min, 6);
    for t in ticks(frame.y_min, frame.y_max, 6) {
        let y = frame.y_pix(t);
        let _ = writeln!(
            svg,
            r##"  <line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{plot_right}" y2="{y:.2}" stroke="#eeeeee"/>"##
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            tick_label(t, y_step)
        );
    }

    let _ = writeln!(
        svg,
        r#"  <line x1="{MARGIN_LEFT}" y1="{plot_bottom}" x2="{plot_right}" y2="{plot_bottom}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{plot_bottom}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{:.2}" y="{:.2}" text-anchor="middle">episode</text>"#,
        (MARGIN_LEFT + plot_right) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"  <text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">episode reward (nats)</text>"#,
        (MARGIN_TOP + plot_bottom) / 2.0,
        (MARGIN_TOP + plot_bottom) / 2.0
    );

    let _ = writeln!(
        svg,
        r##"  <polyline fill="none" stroke="#c0c0c0" stroke-width="1" points="{}"/>"##,
        polyline_points(&frame, &xs, &ys)
    );
    let _ = writeln!(
        svg,
        r##"  <polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        polyline_points(&frame, &xs, &smoothed)
    );

    let legend_x = MARGIN_LEFT + 12.0;
    let _ = writeln!(
        svg,
        r##"  <line x1="{legend_x}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c0c0c0"/>"##,
        MARGIN_TOP + 12.0,
        legend_x + 28.0,
        MARGIN_TOP + 12.0
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{:.2}" y="{:.2}">raw</text>"#,
        legend_x + 36.0,
        MARGIN_TOP + 16.0
    );
    let _ = writeln!(
        svg,
        r##"  <line x1="{legend_x}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#1f77b4" stroke-width="2"/>"##,
        MARGIN_TOP + 32.0,
        legend_x + 28.0,
        MARGIN_TOP + 32.0
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{:.2}" y="{:.2}">smoothed (width {smoothing_width})</text>"#,
        legend_x + 36.0,
        MARGIN_TOP + 36.0
    );
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Reads a learning-curve JSON file and writes the SVG. An invalid or empty
/// curve fails before the output file is created.
pub fn plot_curve_file(curve_path: &Path, out_path: &Path, smoothing_width: f64) -> Result<()> {
    let text = std::fs::read_to_string(curve_path)
        .with_context(|| format!("reading curve {}", curve_path.display()))?;
    let curve: LearningCurve = serde_json::from_str(&text)
        .with_context(|| format!("parsing curve {}", curve_path.display()))?;
    let svg = render_curve_svg(&curve, smoothing_width)?;
    std::fs::write(out_path, svg)
        .with_context(|| format!("writing plot {}", out_path.display()))?;
    Ok(())
}
