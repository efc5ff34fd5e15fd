//! CSV rows and minimal SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "seed",
    "replica_or_index",
    "param_name",
    "param_value",
    "horizon_or_n",
    "value",
    "stderr",
    "flag",
];

/// One output row; empty strings stand for "not applicable".
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub experiment: String,
    pub seed: u64,
    pub index: usize,
    pub param_name: String,
    pub param_value: String,
    pub horizon_or_n: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub flag: String,
}

impl CsvRow {
    pub fn new(experiment: &str, seed: u64, index: usize) -> Self {
        Self {
            experiment: experiment.to_owned(),
            seed,
            index,
            param_name: String::new(),
            param_value: String::new(),
            horizon_or_n: String::new(),
            value: f64::NAN,
            stderr: None,
            flag: String::new(),
        }
    }

    pub fn param(mut self, name: &str, value: impl ToString) -> Self {
        self.param_name = name.to_owned();
        self.param_value = value.to_string();
        self
    }

    pub fn at(mut self, horizon_or_n: impl ToString) -> Self {
        self.horizon_or_n = horizon_or_n.to_string();
        self
    }

    pub fn value(mut self, value: f64, stderr: Option<f64>) -> Self {
        self.value = value;
        self.stderr = stderr;
        self
    }

    pub fn flag(mut self, flag: impl ToString) -> Self {
        self.flag = flag.to_string();
        self
    }
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.seed.to_string(),
            r.index.to_string(),
            r.param_name.clone(),
            r.param_value.clone(),
            r.horizon_or_n.clone(),
            r.value.to_string(),
            r.stderr.map(|s| s.to_string()).unwrap_or_default(),
            r.flag.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart with linear axes fitted to the data.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for (v, anchor, x, y) in [(x0, "start", m, h - m + 18.0), (x1, "end", w - m, h - m + 18.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{v:.4}</text>"#
        );
    }
    for (v, y) in [(y0, h - m), (y1, m)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.4}</text>"#,
            m - 6.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        w / 2.0,
        h - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            d.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            w - m + 4.0,
            m + 16.0 * i as f64,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
