//! Deterministic writers: CSV with 17 significant digits, self-contained SVG and JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Shortest text that reads back to the same `f64` is not stable across formatters; a fixed
/// 17-significant-digit exponent form is.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        // keep the sign of negative zero out of the output
        "0.0000000000000000e0".into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn csv_string(headers: &[&str], columns: &[&[f64]]) -> Result<String, CliError> {
    let rows = columns.first().map_or(0, |c| c.len());
    if headers.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(CliError::Numerical("CSV columns are ragged".into()));
    }
    let mut out = headers.join(",");
    out.push('\n');
    for r in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| fmt_f64(c[r])).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_csv(path: &Path, headers: &[&str], columns: &[&[f64]]) -> Result<(), CliError> {
    write_text(path, &csv_string(headers, columns)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// One JSON document per line.
pub fn write_json_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| CliError::Numerical(e.to_string()))?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// A styled series for [`svg_plot`].
pub struct Series<'a> {
    pub points: &'a [(f64, f64)],
    pub stroke: &'a str,
    pub width: f64,
    pub closed: bool,
    pub dashed: bool,
}

/// Line plot with equal or independent axis scaling, inline styles only.
pub fn svg_plot(title: &str, series: &[Series], equal_axes: bool) -> String {
    let (w, h, pad) = (640.0, 480.0, 40.0);
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !(xmax > xmin) {
        xmax = xmin + 1.0;
    }
    if !(ymax > ymin) {
        ymax = ymin + 1.0;
    }
    let mut sx = (w - 2.0 * pad) / (xmax - xmin);
    let mut sy = (h - 2.0 * pad) / (ymax - ymin);
    if equal_axes {
        sx = sx.min(sy);
        sy = sx;
    }
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" style="fill:white"/>"#);
    let _ = writeln!(out, r#"<text x="{pad}" y="24" style="font-family:sans-serif;font-size:14px">{}</text>"#, escape(title));
    for s in series {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.3},{:.3}", pad + (x - xmin) * sx, h - pad - (y - ymin) * sy))
            .collect();
        let tag = if s.closed { "polygon" } else { "polyline" };
        let dash = if s.dashed { ";stroke-dasharray:4,3" } else { "" };
        let _ = writeln!(
            out,
            r#"<{tag} points="{}" style="fill:none;stroke:{};stroke-width:{}{dash}"/>"#,
            pts.join(" "),
            s.stroke,
            s.width
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
