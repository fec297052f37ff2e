//! CSV/JSON tables and dependency-free SVG charts.
//!
//! Numbers in CSV files are written with six decimals so reruns on the same
//! inputs produce byte-identical files. Missing values are empty cells.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::factors::{EigenSpectrum, FactorScores, FactorSolution};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error on {path}: {detail}")]
    Csv { path: PathBuf, detail: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        let s = format!("{v:.6}");
        if s == "-0.000000" {
            "0.000000".into()
        } else {
            s
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

/// Writes rows of strings as CSV with a header.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), ReportError> {
    let csv_err = |e: csv::Error| ReportError::Csv { path: path.to_path_buf(), detail: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ReportError::Io { path: path.to_path_buf(), source: e })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|e| ReportError::Io { path: path.to_path_buf(), source: e })
}

fn factor_headers(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("F{j}")).collect()
}

/// `component,eigenvalue,explained_variance_pct,cumulative_pct`
pub fn write_scree_csv(path: &Path, spectrum: &EigenSpectrum) -> Result<(), ReportError> {
    let pct = spectrum.explained_variance_pct();
    let mut cumulative = 0.0;
    let rows = spectrum.eigenvalues.iter().zip(&pct).enumerate().map(|(i, (l, p))| {
        cumulative += p;
        vec![(i + 1).to_string(), fmt_num(*l), fmt_num(*p), fmt_num(cumulative)]
    });
    write_rows(path, &["component", "eigenvalue", "explained_variance_pct", "cumulative_pct"], rows.collect::<Vec<_>>())
}

/// `item_id,F1..Fk`
pub fn write_loadings_csv(path: &Path, solution: &FactorSolution) -> Result<(), ReportError> {
    let headers = factor_headers(solution.k());
    let mut header: Vec<&str> = vec!["item_id"];
    header.extend(headers.iter().map(String::as_str));
    let rows = solution.item_ids.iter().enumerate().map(|(i, item)| {
        let mut row = vec![item.clone()];
        row.extend(solution.pattern.row(i).iter().map(|v| fmt_num(*v)));
        row
    });
    write_rows(path, &header, rows.collect::<Vec<_>>())
}

/// `factor,F1..Fk`
pub fn write_factor_correlation_csv(path: &Path, solution: &FactorSolution) -> Result<(), ReportError> {
    let headers = factor_headers(solution.k());
    let mut header: Vec<&str> = vec!["factor"];
    header.extend(headers.iter().map(String::as_str));
    let rows = (0..solution.k()).map(|a| {
        let mut row = vec![headers[a].clone()];
        row.extend(solution.factor_correlation.row(a).iter().map(|v| fmt_num(*v)));
        row
    });
    write_rows(path, &header, rows.collect::<Vec<_>>())
}

/// `factor,rank,item_id,loading`: the `top_n` strongest items per factor.
pub fn write_top_items_csv(path: &Path, solution: &FactorSolution, top_n: usize) -> Result<(), ReportError> {
    let mut rows = Vec::new();
    for j in 0..solution.k() {
        let scale = crate::psychometrics::scale_items_for_factor(solution, j, top_n);
        for (rank, (item, loading)) in scale.item_ids.iter().zip(&scale.loadings).enumerate() {
            rows.push(vec![format!("F{}", j + 1), (rank + 1).to_string(), item.clone(), fmt_num(*loading)]);
        }
    }
    write_rows(path, &["factor", "rank", "item_id", "loading"], rows)
}

/// `agent_id,F1..Fk` with standardized scores.
pub fn write_scores_csv(path: &Path, scores: &FactorScores) -> Result<(), ReportError> {
    let headers = factor_headers(scores.standardized.ncols());
    let mut header: Vec<&str> = vec!["agent_id"];
    header.extend(headers.iter().map(String::as_str));
    let rows = scores.agent_ids.iter().enumerate().map(|(r, id)| {
        let mut row = vec![id.to_string()];
        row.extend(scores.standardized.row(r).iter().map(|v| fmt_num(*v)));
        row
    });
    write_rows(path, &header, rows.collect::<Vec<_>>())
}

/// A labelled grid, first column holding the row label.
pub fn write_grid_csv(
    path: &Path,
    corner: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<Option<f64>>],
) -> Result<(), ReportError> {
    let mut header: Vec<&str> = vec![corner];
    header.extend(col_labels.iter().map(String::as_str));
    let rows = row_labels.iter().zip(values).map(|(label, vals)| {
        let mut row = vec![label.clone()];
        row.extend(vals.iter().map(|v| fmt_opt(*v)));
        row
    });
    write_rows(path, &header, rows.collect::<Vec<_>>())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn svg_open(title: &str, width: f64, height: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", width / 2.0, escape(title));
    s
}

fn axes(s: &mut String, x_label: &str, y_label: &str, y_min: f64, y_max: f64) {
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - 20.0, 36.0);
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 16.0, escape(x_label));
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    for t in 0..=4 {
        let v = y_min + (y_max - y_min) * t as f64 / 4.0;
        let y = y0 - (y0 - y1) * t as f64 / 4.0;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", x0 - 4.0, y + 4.0, format_tick(v));
    }
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Line-and-marker scree plot of the first `max_components` eigenvalues.
pub fn scree_svg(spectrum: &EigenSpectrum, max_components: usize) -> String {
    let values: Vec<f64> = spectrum.eigenvalues.iter().take(max_components.max(1)).copied().collect();
    let y_max = values.iter().copied().fold(1.0f64, f64::max) * 1.05;
    let mut s = svg_open("Scree plot", W, H);
    axes(&mut s, "Component", "Eigenvalue", 0.0, y_max);
    let n = values.len().max(2) as f64;
    let px = |i: usize| MARGIN + (W - 20.0 - MARGIN) * i as f64 / (n - 1.0);
    let py = |v: f64| (H - MARGIN) - (H - MARGIN - 36.0) * v / y_max;
    let points: Vec<String> = values.iter().enumerate().map(|(i, v)| format!("{:.2},{:.2}", px(i), py(*v))).collect();
    let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"{}\"/>", points.join(" "));
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"steelblue\"><title>{}: {}</title></circle>", px(i), py(*v), i + 1, fmt_num(*v));
    }
    let one = py(1.0);
    let _ = writeln!(s, "<line x1=\"{MARGIN}\" y1=\"{one:.2}\" x2=\"{:.1}\" y2=\"{one:.2}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>", W - 20.0);
    s.push_str("</svg>\n");
    s
}

/// Diverging heatmap in [-1, 1]; missing cells are grey.
pub fn heatmap_svg(title: &str, row_labels: &[String], col_labels: &[String], values: &[Vec<Option<f64>>]) -> String {
    let cell = 36.0;
    let left = 12.0 + 7.0 * row_labels.iter().map(|l| l.chars().count()).max().unwrap_or(1) as f64;
    let top = 48.0 + 7.0 * col_labels.iter().map(|l| l.chars().count()).max().unwrap_or(1) as f64 * 0.7;
    let width = left + cell * col_labels.len() as f64 + 20.0;
    let height = top + cell * row_labels.len() as f64 + 20.0;
    let mut s = svg_open(title, width.max(200.0), height);
    for (c, label) in col_labels.iter().enumerate() {
        let x = left + cell * (c as f64 + 0.5);
        let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{:.1}\" transform=\"rotate(-45 {x:.1} {:.1})\">{}</text>", top - 6.0, top - 6.0, escape(label));
    }
    for (r, label) in row_labels.iter().enumerate() {
        let y = top + cell * r as f64;
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", left - 6.0, y + cell * 0.6, escape(label));
        for (c, v) in values[r].iter().enumerate() {
            let x = left + cell * c as f64;
            let fill = v.map(diverging).unwrap_or_else(|| "#cccccc".into());
            let text = v.map(|v| format!("{v:.2}")).unwrap_or_default();
            let _ = writeln!(s, "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"white\"/>");
            let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{text}</text>", x + cell / 2.0, y + cell * 0.6);
        }
    }
    s.push_str("</svg>\n");
    s
}

fn diverging(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0 - 200.0 * t, 255.0 - 150.0 * t, 255.0)
    } else {
        (255.0, 255.0 + 150.0 * t, 255.0 + 200.0 * t)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Scatter plot of `(x, y)` points with axis labels.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x_min, x_max) = bounds(|p| p.0);
    let (y_min, y_max) = bounds(|p| p.1);
    let mut s = svg_open(title, W, H);
    axes(&mut s, x_label, y_label, y_min, y_max);
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", H - MARGIN + 16.0, format_tick(x_min));
    let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", W - 20.0, H - MARGIN + 16.0, format_tick(x_max));
    for (x, y) in points {
        let px = MARGIN + (W - 20.0 - MARGIN) * (x - x_min) / (x_max - x_min);
        let py = (H - MARGIN) - (H - MARGIN - 36.0) * (y - y_min) / (y_max - y_min);
        let _ = writeln!(s, "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"steelblue\" fill-opacity=\"0.7\"/>");
    }
    s.push_str("</svg>\n");
    s
}
