//! Output writers: full-precision CSV, self-contained SVG polyline plots,
//! and the hashed run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

/// One CSV cell; counts stay integers, measurements print at full
/// round-trip precision (17 significant digits).
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(i64),
    Num(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format!("{v:.16e}"),
        }
    }
}

/// Writes a CSV file with a header row of `name (unit)` column labels.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "row width mismatch");
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// One plotted line.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

/// A polyline plot rendered to a self-contained SVG file.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 440.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Renders the plot as an SVG polyline chart with axes, ticks, and legend.
pub fn write_svg(path: &Path, plot: &Plot) -> Result<()> {
    let (x_lo, x_hi) = data_range(plot.series.iter().flat_map(|s| {
        s.points.iter().map(|p| p.0)
    }));
    let (y_lo, y_hi) = data_range(plot.series.iter().flat_map(|s| {
        s.points.iter().map(|p| p.1)
    }));
    let x_px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (SVG_W - MARGIN_L - MARGIN_R);
    let y_px = |y: f64| SVG_H - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (SVG_H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">\n\
         <rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n"
    );
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{}</text>\n",
        (MARGIN_L + SVG_W - MARGIN_R) / 2.0,
        xml_escape(&plot.title)
    );

    // Axes frame.
    let _ = write!(
        svg,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.1}\" height=\"{:.1}\" \
         fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n",
        SVG_W - MARGIN_L - MARGIN_R,
        SVG_H - MARGIN_T - MARGIN_B
    );

    // Ticks and grid.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let xp = x_px(xv);
        let yp = y_px(yv);
        let _ = write!(
            svg,
            "<line x1=\"{xp:.1}\" y1=\"{:.1}\" x2=\"{xp:.1}\" y2=\"{:.1}\" \
             stroke=\"#ccc\" stroke-width=\"0.5\"/>\n\
             <text x=\"{xp:.1}\" y=\"{:.1}\" text-anchor=\"middle\" \
             font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            MARGIN_T,
            SVG_H - MARGIN_B,
            SVG_H - MARGIN_B + 16.0,
            tick_label(xv)
        );
        let _ = write!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{yp:.1}\" x2=\"{:.1}\" y2=\"{yp:.1}\" \
             stroke=\"#ccc\" stroke-width=\"0.5\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" \
             font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            SVG_W - MARGIN_R,
            MARGIN_L - 6.0,
            yp + 4.0,
            tick_label(yv)
        );
    }

    // Axis labels.
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">{}</text>\n",
        (MARGIN_L + SVG_W - MARGIN_R) / 2.0,
        SVG_H - 14.0,
        xml_escape(&plot.x_label)
    );
    let _ = write!(
        svg,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        (MARGIN_T + SVG_H - MARGIN_B) / 2.0,
        (MARGIN_T + SVG_H - MARGIN_B) / 2.0,
        xml_escape(&plot.y_label)
    );

    // Series.
    for (i, series) in plot.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if series.dashed {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        };
        let mut points = String::new();
        for (x, y) in &series.points {
            let _ = write!(points, "{:.2},{:.2} ", x_px(*x), y_px(*y));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
             stroke-width=\"1.6\"{dash}/>\n",
            points.trim_end()
        );
        // Legend swatch + label, top-right corner, stacked.
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        let lx = SVG_W - MARGIN_R - 150.0;
        let _ = write!(
            svg,
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"1.6\"{dash}/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" \
             font-size=\"12\">{}</text>\n",
            lx + 26.0,
            lx + 32.0,
            ly + 4.0,
            xml_escape(&series.label)
        );
    }

    svg.push_str("</svg>\n");
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SHA-256 of a file, lowercase hex.
pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// A named pass/fail verdict; `label` already carries the measured value
/// and threshold.
#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub passed: bool,
}

impl Check {
    pub fn new(label: impl Into<String>, passed: bool) -> Self {
        Self {
            label: label.into(),
            passed,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "{}: {}",
            self.label,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Writes `manifest.txt`: `key: value` lines followed by one
/// `file <sha256> <name>` line per artifact.
pub fn write_manifest(
    out_dir: &Path,
    kv: &[(String, String)],
    files: &[PathBuf],
) -> Result<PathBuf> {
    let mut text = String::new();
    for (k, v) in kv {
        let _ = writeln!(text, "{k}: {v}");
    }
    let mut sorted: Vec<&PathBuf> = files.iter().collect();
    sorted.sort();
    for file in sorted {
        let hash = sha256_hex(file)?;
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        let _ = writeln!(text, "file {hash} {name}");
    }
    let path = out_dir.join("manifest.txt");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Re-reads a manifest and re-hashes every file it lists, failing on any
/// missing file or hash mismatch.
pub fn verify_manifest(manifest_path: &Path) -> Result<usize> {
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let text = fs::read_to_string(manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let mut checked = 0;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("file ") else {
            continue;
        };
        let Some((hash, name)) = rest.split_once(' ') else {
            bail!("malformed manifest line: '{line}'");
        };
        let actual = sha256_hex(&dir.join(name))?;
        if actual != hash {
            bail!("manifest hash mismatch for {name}: recorded {hash}, found {actual}");
        }
        checked += 1;
    }
    Ok(checked)
}
