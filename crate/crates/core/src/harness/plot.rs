//! Standalone SVG charts: line plots with error bars, scatter plots and
//! heatmaps. Output is a pure function of the input, so identical series
//! give identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Half-length of the error bar.
    pub err: Option<f64>,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y, err: None }
    }

    pub fn with_err(x: f64, y: f64, err: f64) -> Self {
        Point { x, y, err: Some(err) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<Point>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<Point>) -> Self {
        Series {
            label: label.into(),
            points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    #[default]
    Line,
    Scatter,
    /// Each series is a row; point `x` picks the column and `y` the value.
    Heatmap,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(PlotKind::Line),
            "scatter" => Ok(PlotKind::Scatter),
            "heatmap" => Ok(PlotKind::Heatmap),
            other => Err(Error::InvalidArgument(format!("unknown plot kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotStyle {
    pub kind: PlotKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            kind: PlotKind::Line,
            title: String::new(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            width: 640,
            height: 420,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Compact, deterministic number formatting for coordinates and labels.
fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let base: f64 = if hi / lo <= 4096.0 { 2.0 } else { 10.0 };
    let a = lo.log(base).ceil() as i32;
    let b = hi.log(base).floor() as i32;
    (a..=b).map(|e| base.powi(e)).collect()
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
    pixel_lo: f64,
    pixel_hi: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log {
            (v.ln(), self.lo.ln(), self.hi.ln())
        } else {
            (v, self.lo, self.hi)
        };
        self.pixel_lo + (v - lo) / (hi - lo) * (self.pixel_hi - self.pixel_lo)
    }
}

fn padded(lo: f64, hi: f64, log: bool) -> (f64, f64) {
    if log {
        if lo == hi {
            (lo / 2.0, hi * 2.0)
        } else {
            let r = (hi / lo).powf(0.05);
            (lo / r, hi * r)
        }
    } else if lo == hi {
        let d = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        (lo - d, hi + d)
    } else {
        let d = (hi - lo) * 0.05;
        (lo - d, hi + d)
    }
}

fn validate(series: &[Series], style: &PlotStyle) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    for s in series {
        for p in &s.points {
            if !p.x.is_finite() || !p.y.is_finite() || p.err.is_some_and(|e| !e.is_finite() || e < 0.0) {
                return Err(Error::NonFinite(format!("point ({}, {}) of {}", p.x, p.y, s.label)));
            }
            if style.log_x && p.x <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "log-scale x needs positive values, found {}",
                    p.x
                )));
            }
        }
    }
    Ok(())
}

pub fn render_plot(series: &[Series], style: &PlotStyle) -> Result<String> {
    validate(series, style)?;
    let w = style.width as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        style.width, style.height, style.width, style.height
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    if !style.title.is_empty() {
        writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            num(w / 2.0),
            esc(&style.title)
        )
        .unwrap();
    }
    match style.kind {
        PlotKind::Heatmap => heatmap(&mut svg, series, style),
        _ => xy(&mut svg, series, style),
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn axis_labels(svg: &mut String, style: &PlotStyle) {
    let (w, h) = (style.width as f64, style.height as f64);
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(LEFT + (w - LEFT - RIGHT) / 2.0),
        num(h - 12.0),
        esc(&style.x_label)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        num(TOP + (h - TOP - BOTTOM) / 2.0),
        num(TOP + (h - TOP - BOTTOM) / 2.0),
        esc(&style.y_label)
    )
    .unwrap();
}

fn xy(svg: &mut String, series: &[Series], style: &PlotStyle) {
    let (w, h) = (style.width as f64, style.height as f64);
    let pts = || series.iter().flat_map(|s| &s.points);
    let xmin = pts().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let xmax = pts().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let ymin = pts().map(|p| p.y - p.err.unwrap_or(0.0)).fold(f64::INFINITY, f64::min);
    let ymax = pts().map(|p| p.y + p.err.unwrap_or(0.0)).fold(f64::NEG_INFINITY, f64::max);
    let (xlo, xhi) = padded(xmin, xmax, style.log_x);
    let (ylo, yhi) = padded(ymin, ymax, false);
    let xa = Axis { lo: xlo, hi: xhi, log: style.log_x, pixel_lo: LEFT, pixel_hi: w - RIGHT };
    let ya = Axis { lo: ylo, hi: yhi, log: false, pixel_lo: h - BOTTOM, pixel_hi: TOP };

    writeln!(
        svg,
        r#"<line class="axis" x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        l = num(LEFT),
        r = num(w - RIGHT),
        b = num(h - BOTTOM)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<line class="axis" x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#,
        l = num(LEFT),
        t = num(TOP),
        b = num(h - BOTTOM)
    )
    .unwrap();
    let xt = if style.log_x { log_ticks(xlo, xhi) } else { nice_ticks(xlo, xhi) };
    for t in xt {
        let x = num(xa.map(t));
        writeln!(
            svg,
            r#"<line x1="{x}" y1="{b}" x2="{x}" y2="{b5}" stroke="black"/><text x="{x}" y="{ty}" text-anchor="middle">{}</text>"#,
            tick_label(t),
            b = num(h - BOTTOM),
            b5 = num(h - BOTTOM + 5.0),
            ty = num(h - BOTTOM + 18.0)
        )
        .unwrap();
    }
    for t in nice_ticks(ylo, yhi) {
        let y = num(ya.map(t));
        writeln!(
            svg,
            r#"<line x1="{l5}" y1="{y}" x2="{l}" y2="{y}" stroke="black"/><text x="{tx}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            tick_label(t),
            l = num(LEFT),
            l5 = num(LEFT - 5.0),
            tx = num(LEFT - 8.0)
        )
        .unwrap();
    }
    axis_labels(svg, style);

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        writeln!(svg, r#"<g class="series" data-label="{}">"#, esc(&s.label)).unwrap();
        if style.kind == PlotKind::Line && s.points.len() > 1 {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("{},{}", num(xa.map(p.x)), num(ya.map(p.y))))
                .collect();
            writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            )
            .unwrap();
        }
        for p in &s.points {
            let (x, y) = (xa.map(p.x), ya.map(p.y));
            if let Some(e) = p.err.filter(|&e| e > 0.0) {
                let (y0, y1) = (ya.map(p.y - e), ya.map(p.y + e));
                writeln!(
                    svg,
                    r#"<path class="errorbar" d="M{x} {y0}V{y1}M{xl} {y0}H{xr}M{xl} {y1}H{xr}" stroke="{color}"/>"#,
                    x = num(x),
                    y0 = num(y0),
                    y1 = num(y1),
                    xl = num(x - 3.0),
                    xr = num(x + 3.0)
                )
                .unwrap();
            }
            writeln!(
                svg,
                r#"<circle class="marker" cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                num(x),
                num(y)
            )
            .unwrap();
        }
        svg.push_str("</g>\n");
    }
    legend(svg, series, style);
}

fn legend(svg: &mut String, series: &[Series], style: &PlotStyle) {
    let x = style.width as f64 - RIGHT + 12.0;
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 8.0 + 18.0 * i as f64;
        writeln!(
            svg,
            r#"<g class="legend"><rect x="{}" y="{}" width="12" height="4" fill="{}"/><text x="{}" y="{}" dominant-baseline="middle">{}</text></g>"#,
            num(x),
            num(y - 2.0),
            PALETTE[i % PALETTE.len()],
            num(x + 18.0),
            num(y),
            esc(&s.label)
        )
        .unwrap();
    }
}

fn heat_color(t: f64) -> String {
    // white to dark blue
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * (1.0 - t) + 8.0 * t).round() as u8;
    let g = (255.0 * (1.0 - t) + 48.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t) + 107.0 * t).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn heatmap(svg: &mut String, series: &[Series], style: &PlotStyle) {
    let (w, h) = (style.width as f64, style.height as f64);
    let mut cols: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.x)).collect();
    cols.sort_by(f64::total_cmp);
    cols.dedup();
    let vmin = series.iter().flat_map(|s| &s.points).map(|p| p.y).fold(f64::INFINITY, f64::min);
    let vmax = series.iter().flat_map(|s| &s.points).map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let cw = (w - LEFT - RIGHT) / cols.len() as f64;
    let ch = (h - TOP - BOTTOM) / series.len() as f64;

    writeln!(
        svg,
        r#"<line class="axis" x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        l = num(LEFT),
        r = num(w - RIGHT),
        b = num(h - BOTTOM)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<line class="axis" x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#,
        l = num(LEFT),
        t = num(TOP),
        b = num(h - BOTTOM)
    )
    .unwrap();
    for (j, c) in cols.iter().enumerate() {
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(LEFT + cw * (j as f64 + 0.5)),
            num(h - BOTTOM + 18.0),
            tick_label(*c)
        )
        .unwrap();
    }
    for (i, s) in series.iter().enumerate() {
        let y = TOP + ch * i as f64;
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            num(LEFT - 8.0),
            num(y + ch / 2.0),
            esc(&s.label)
        )
        .unwrap();
        for p in &s.points {
            let j = cols.partition_point(|c| *c < p.x);
            writeln!(
                svg,
                r#"<rect class="marker" x="{}" y="{}" width="{}" height="{}" fill="{}"><title>{}</title></rect>"#,
                num(LEFT + cw * j as f64),
                num(y),
                num(cw),
                num(ch),
                heat_color((p.y - vmin) / span),
                tick_label(p.y)
            )
            .unwrap();
        }
    }
    axis_labels(svg, style);
    let x = w - RIGHT + 20.0;
    for (i, (label, t)) in [(vmax, 1.0), (vmin, 0.0)].iter().enumerate() {
        let y = TOP + 30.0 * i as f64;
        writeln!(
            svg,
            r#"<g class="legend"><rect x="{}" y="{}" width="14" height="14" fill="{}" stroke="black"/><text x="{}" y="{}" dominant-baseline="middle">{}</text></g>"#,
            num(x),
            num(y),
            heat_color(*t),
            num(x + 20.0),
            num(y + 7.0),
            tick_label(*label)
        )
        .unwrap();
    }
}
