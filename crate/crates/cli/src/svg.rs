//! Static SVG line charts and toy scatter plots.

use std::fmt::Write as _;

use anyhow::{bail, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    /// Tick labels shown under each x position.
    pub x_ticks: Vec<String>,
    pub series: Vec<Series>,
}

impl PlotSpec {
    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            bail!("plot '{}' has no x values", self.title);
        }
        if self.x.windows(2).any(|w| w[0] >= w[1]) {
            bail!("plot '{}' x values are not strictly increasing", self.title);
        }
        if self.x_ticks.len() != self.x.len() {
            bail!("plot '{}' has {} tick labels for {} x values", self.title, self.x_ticks.len(), self.x.len());
        }
        for s in &self.series {
            if s.mean.len() != self.x.len() || s.std.len() != self.x.len() {
                bail!("series '{}' length differs from the x axis", s.name);
            }
        }
        Ok(())
    }
}

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(out: &mut String, title: &str, desc: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, "<desc>{}</desc>", escape(desc));
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        MARGIN_LEFT + (x - self.x0) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 { self.y1 - self.y0 } else { 1.0 };
        HEIGHT - MARGIN_BOTTOM - (y - self.y0) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Line chart with one polyline and a translucent +-std band per series.
/// `desc` is embedded verbatim (escaped) as the document description.
pub fn line_chart(spec: &PlotSpec, desc: &str) -> Result<String> {
    spec.validate()?;
    let lo = spec
        .series
        .iter()
        .flat_map(|s| s.mean.iter().zip(&s.std).map(|(m, d)| m - d))
        .fold(f64::INFINITY, f64::min);
    let hi = spec
        .series
        .iter()
        .flat_map(|s| s.mean.iter().zip(&s.std).map(|(m, d)| m + d))
        .fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = if lo.is_finite() { ((lo - 0.02).max(0.0), (hi + 0.02).min(1.0)) } else { (0.0, 1.0) };
    let frame = Frame { x0: spec.x[0], x1: *spec.x.last().expect("validated"), y0, y1: y1.max(y0 + 0.01) };

    let mut out = String::new();
    open(&mut out, &spec.title, desc);
    let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(out, r#"<g stroke="black" stroke-width="1">"#);
    let _ = writeln!(out, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>"#);
    let _ = writeln!(out, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/>"#);
    let _ = writeln!(out, "</g>");
    for (x, tick) in spec.x.iter().zip(&spec.x_ticks) {
        let px = frame.px(*x);
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            bottom + 18.0,
            escape(tick)
        );
    }
    for k in 0..=4 {
        let y = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 4.0;
        let py = frame.py(y);
        let _ = writeln!(out, r##"<line x1="{left}" y1="{py:.1}" x2="{right}" y2="{py:.1}" stroke="#ddd"/>"##);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.3}</text>"#, left - 6.0, py + 4.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 15.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(&spec.y_label)
    );
    for (i, s) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = spec.x.iter().zip(&s.mean).zip(&s.std).map(|((x, m), d)| (frame.px(*x), frame.py(m + d)));
        let lower = spec.x.iter().zip(&s.mean).zip(&s.std).map(|((x, m), d)| (frame.px(*x), frame.py(m - d)));
        let band: Vec<String> =
            upper.chain(lower.collect::<Vec<_>>().into_iter().rev()).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> =
            spec.x.iter().zip(&s.mean).map(|(x, m)| format!("{:.1},{:.1}", frame.px(*x), frame.py(*m))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = top + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>"#,
            right + 15.0,
            right + 35.0
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, right + 40.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Normal,
    Outlier,
    TestNormal,
    TestAnomaly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSpec {
    pub title: String,
    /// `(x, y, kind)`; test points are filled by their score.
    pub points: Vec<(f64, f64, PointKind)>,
    pub point_scores: Vec<f64>,
    /// Square domain `[-extent, extent]^2` of the score grid.
    pub extent: f64,
    /// Row-major `n x n` grid of scores, row 0 at the top.
    pub grid: Vec<f64>,
    pub grid_size: usize,
}

fn heat(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t) as u8;
    let b = (255.0 * (1.0 - t)) as u8;
    format!("#{r:02x}{:02x}{b:02x}", 60)
}

/// Score levels (ranks normalized to `[0, 1]`) for a set of raw scores.
fn levels(values: &[f64], reference: &[f64]) -> Vec<f64> {
    let mut sorted = reference.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len().max(1) as f64;
    values.iter().map(|v| sorted.partition_point(|s| s < v) as f64 / n).collect()
}

/// Scatter plot over a score-level grid: cells are colored by the quantile of
/// their score among all grid scores, so the color bands trace score contours.
pub fn scatter(spec: &ScatterSpec, desc: &str) -> Result<String> {
    if spec.grid.len() != spec.grid_size * spec.grid_size || spec.grid_size == 0 {
        bail!("score grid must hold grid_size^2 values");
    }
    if spec.points.len() != spec.point_scores.len() {
        bail!("one score per point is required");
    }
    let side = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM).min(WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let (ox, oy) = (MARGIN_LEFT, MARGIN_TOP);
    let to_px = |x: f64, y: f64| {
        let u = (x + spec.extent) / (2.0 * spec.extent);
        let v = (spec.extent - y) / (2.0 * spec.extent);
        (ox + u * side, oy + v * side)
    };
    let mut out = String::new();
    open(&mut out, &spec.title, desc);
    let cell = side / spec.grid_size as f64;
    let grid_levels = levels(&spec.grid, &spec.grid);
    let _ = writeln!(out, r#"<g stroke="none" fill-opacity="0.55">"#);
    for r in 0..spec.grid_size {
        for c in 0..spec.grid_size {
            let t = grid_levels[r * spec.grid_size + c];
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                ox + c as f64 * cell,
                oy + r as f64 * cell,
                cell + 0.05,
                cell + 0.05,
                heat(t)
            );
        }
    }
    let _ = writeln!(out, "</g>");
    let point_levels = levels(&spec.point_scores, &spec.grid);
    for ((x, y, kind), t) in spec.points.iter().zip(point_levels) {
        if x.abs() > spec.extent || y.abs() > spec.extent {
            continue;
        }
        let (px, py) = to_px(*x, *y);
        let shape = match kind {
            PointKind::Normal => format!(r#"<circle cx="{px:.1}" cy="{py:.1}" r="2" fill="black"/>"#),
            PointKind::Outlier => format!(r#"<circle cx="{px:.1}" cy="{py:.1}" r="2" fill="white" stroke="black"/>"#),
            PointKind::TestNormal => format!(
                r#"<rect x="{:.1}" y="{:.1}" width="4" height="4" fill="{}" stroke="black" stroke-width="0.3"/>"#,
                px - 2.0,
                py - 2.0,
                heat(t)
            ),
            PointKind::TestAnomaly => format!(
                r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="{}" stroke="black" stroke-width="0.3"/>"#,
                px,
                py - 3.0,
                px - 3.0,
                py + 2.0,
                px + 3.0,
                py + 2.0,
                heat(t)
            ),
        };
        out.push_str(&shape);
        out.push('\n');
    }
    let lx = ox + side + 20.0;
    let legend = [("train normal", "black"), ("train OE", "white"), ("test (square normal, triangle anomaly)", "none")];
    for (i, (label, fill)) in legend.iter().enumerate() {
        let ly = oy + 10.0 + 20.0 * i as f64;
        if *fill != "none" {
            let _ = writeln!(out, r#"<circle cx="{lx:.1}" cy="{ly:.1}" r="4" fill="{fill}" stroke="black"/>"#);
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 10.0, ly + 4.0, escape(label));
    }
    let _ = writeln!(
        out,
        r#"<text x="{lx:.1}" y="{:.1}">blue = low score, red = high score</text>"#,
        oy + 80.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}
