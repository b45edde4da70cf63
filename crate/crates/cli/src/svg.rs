//! Minimal line plots written as standalone SVG.
//!
//! Every plot is built from a [`Figure`], whose series are also written as CSV
//! next to the SVG; the CSV carries the exact plotted numbers.

use epictrl_core::export::columns_csv;
use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub series: Vec<Series>,
    /// Draw dashed vertical guides at these abscissae (week boundaries).
    pub guides: Vec<f64>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: Vec<f64>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x,
            series: Vec::new(),
            guides: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.x.len());
        self.series.push(Series {
            label: label.into(),
            values,
        });
    }

    pub fn csv(&self) -> String {
        let mut headers = vec![sanitize(&self.x_label)];
        headers.extend(self.series.iter().map(|s| sanitize(&s.label)));
        let mut cols = vec![self.x.clone()];
        cols.extend(self.series.iter().map(|s| s.values.clone()));
        columns_csv(&headers, &cols)
    }

    pub fn svg(&self) -> String {
        let (x0, x1) = range(self.x.iter().copied());
        let (y0, y1) = range(self.series.iter().flat_map(|s| s.values.iter().copied()));
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for g in &self.guides {
            if *g > x0 && *g < x1 {
                let gx = sx(*g);
                let _ = writeln!(
                    out,
                    r##"<line x1="{gx:.2}" y1="{TOP}" x2="{gx:.2}" y2="{}" stroke="#bbbbbb" stroke-dasharray="4 3"/>"##,
                    TOP + ph
                );
            }
        }
        for t in ticks(x0, x1) {
            let tx = sx(t);
            let _ = writeln!(
                out,
                r#"<line x1="{tx:.2}" y1="{}" x2="{tx:.2}" y2="{}" stroke="black"/><text x="{tx:.2}" y="{}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                tick_label(t)
            );
        }
        for t in ticks(y0, y1) {
            let ty = sy(t);
            let _ = writeln!(
                out,
                r#"<line x1="{}" y1="{ty:.2}" x2="{LEFT}" y2="{ty:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                ty + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (c, s) in self.series.iter().enumerate() {
            let colour = PALETTE[c % PALETTE.len()];
            let mut path = String::new();
            for (&x, &y) in self.x.iter().zip(&s.values).filter(|(_, y)| y.is_finite()) {
                let cmd = if path.is_empty() { "M" } else { " L" };
                let _ = write!(path, "{cmd}{:.2},{:.2}", sx(x), sy(y));
            }
            let _ = writeln!(
                out,
                r#"<path d="{path}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#
            );
            let ly = TOP + 10.0 + 18.0 * c as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 22.0,
                lx + 28.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-300_f64.max(1e-12 * lo.abs()) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// At most about six round ticks inside `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// CSV headers must not contain separators.
fn sanitize(s: &str) -> String {
    s.replace([',', '\n'], " ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(0.0, 28.0);
        assert_eq!(t, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0]);
        let t = ticks(-0.013, 0.002);
        assert!(t.iter().all(|v| *v >= -0.013 && *v <= 0.002));
    }

    #[test]
    fn svg_and_csv_carry_every_series() {
        let mut f = Figure::new("t", "time", "y", vec![0.0, 1.0, 2.0]);
        f.push("a, first", vec![1.0, 2.0, 3.0]);
        f.push("b", vec![0.0, 0.0, 0.0]);
        let svg = f.svg();
        assert_eq!(svg.matches("<path").count(), 2);
        let csv = f.csv();
        assert!(csv.starts_with("time,a  first,b\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
