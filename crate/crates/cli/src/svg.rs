//! Minimal deterministic SVG line/scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Dashed,
    Scatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Self { label: label.into(), points, style }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub width: f64,
    pub height: f64,
}

impl PlotSpec {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), log_y: false, width: 640.0, height: 420.0 }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Data range padded so that a single point or a flat series still gets a
/// nonempty axis.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

pub fn render_svg(series: &[Series], plot: &PlotSpec) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        bail!("nothing to plot: all series are empty");
    }
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                bail!("series '{}' has a non-finite point ({x}, {y})", s.label);
            }
            if plot.log_y && y <= 0.0 {
                bail!("series '{}' has y = {y}, not allowed on a log axis", s.label);
            }
        }
    }
    let ty = |y: f64| if plot.log_y { y.log10() } else { y };
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    let (w, h) = (plot.width, plot.height);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (ty(y) - y0) / (y1 - y0) * (h - top - bottom);
    let py_t = |t: f64| h - bottom - (t - y0) / (y1 - y0) * (h - top - bottom);

    let mut o = String::new();
    writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#)?;
    writeln!(o, r#"<rect width="{w}" height="{h}" fill="white"/>"#)?;
    writeln!(o, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(&plot.title))?;
    writeln!(o, r#"<line x1="{left}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, h - bottom, w - right, h - bottom)?;
    writeln!(o, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#, h - bottom)?;
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let tv = y0 + (y1 - y0) * k as f64 / 4.0;
        let yv = if plot.log_y { 10f64.powf(tv) } else { tv };
        writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(xv), h - bottom + 18.0, tick_label(xv))?;
        writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, py_t(tv) + 4.0, tick_label(yv))?;
    }
    writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (left + w - right) / 2.0, h - 12.0, escape(&plot.x_label))?;
    let y_title = if plot.log_y { format!("{} (log scale)", plot.y_label) } else { plot.y_label.clone() };
    writeln!(o, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#, h / 2.0, h / 2.0, escape(&y_title))?;

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match s.style {
            Style::Scatter => {
                for &(x, y) in &s.points {
                    writeln!(o, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, px(x), py(y))?;
                }
            }
            Style::Line | Style::Dashed => {
                let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let dash = if s.style == Style::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                writeln!(o, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, path.join(" "))?;
            }
        }
        let ly = top + 16.0 * i as f64;
        writeln!(o, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/>"#, w - right + 12.0, ly)?;
        writeln!(o, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, w - right + 26.0, ly + 9.0, escape(&s.label))?;
    }
    o.push_str("</svg>\n");
    Ok(o)
}

pub fn emit_svg(path: &Path, series: &[Series], plot: &PlotSpec) -> Result<()> {
    std::fs::write(path, render_svg(series, plot)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PlotSpec {
        PlotSpec::new("t", "x", "y")
    }

    #[test]
    fn single_point_is_valid() {
        let svg = render_svg(&[Series::new("a", vec![(1.0, 2.0)], Style::Scatter)], &spec()).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(render_svg(&[], &spec()).is_err());
        assert!(render_svg(&[Series::new("a", vec![], Style::Line)], &spec()).is_err());
        assert!(render_svg(&[Series::new("a", vec![(0.0, f64::NAN)], Style::Line)], &spec()).is_err());
        assert!(render_svg(&[Series::new("a", vec![(0.0, 0.0)], Style::Line)], &spec().log_y()).is_err());
    }

    #[test]
    fn output_is_deterministic_and_escaped() {
        let s = vec![
            Series::new("data <n>", vec![(1.0, 10.0), (2.0, 50.0), (3.0, 250.0)], Style::Scatter),
            Series::new("fit", vec![(1.0, 10.0), (3.0, 250.0)], Style::Line),
            Series::new("predicted", vec![(1.0, 11.0), (3.0, 240.0)], Style::Dashed),
        ];
        let a = render_svg(&s, &spec().log_y()).unwrap();
        assert_eq!(a, render_svg(&s, &spec().log_y()).unwrap());
        assert!(a.contains("data &lt;n&gt;") && a.contains("stroke-dasharray"));
    }
}
