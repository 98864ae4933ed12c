//! Sweep output: machine-readable CSV, a human-readable two-panel table,
//! an SVG accuracy plot, and a metadata echo of the configuration.
//!
//! Every emitter is a pure function of the sweep result — no timestamps,
//! hostnames, or other environment leakage — so identical sweeps produce
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::filters::{CovarianceForm, FilterSpec};
use crate::sde::Scheme;

use super::{CellOutcome, SweepResult};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("malformed results csv at line {line}: {reason}")]
    Malformed { line: usize, reason: &'static str },
}

/// One parsed `results.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub spec: FilterSpec,
    pub delta_ill: f64,
    /// `None` encodes a FAILED cell.
    pub armse_position: Option<f64>,
    pub failed_runs: usize,
    pub mean_condition: f64,
}

pub const RESULTS_HEADER: &str =
    "scheme,form,substeps,delta_ill,armse_pos,failed_runs,mean_condition";

/// Renders the sweep as CSV, one row per (filter, delta_ill) cell in sweep
/// order.  Values use scientific notation with five significant digits.
pub fn results_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for cell in &result.cells {
        let armse = match cell.armse_position {
            Some(v) => format!("{v:.4e}"),
            None => "FAILED".to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{:e},{},{},{:.4e}",
            cell.spec.scheme.label(),
            cell.spec.form.label(),
            cell.spec.substeps,
            cell.delta_ill,
            armse,
            cell.failed_runs,
            cell.mean_condition,
        );
    }
    out
}

/// Parses text produced by [`results_csv`].
pub fn parse_results_csv(text: &str) -> Result<Vec<CsvRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RESULTS_HEADER => {}
        _ => {
            return Err(ReportError::Malformed {
                line: 1,
                reason: "missing or unexpected header",
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(ReportError::Malformed {
                line: line_no,
                reason: "expected 7 fields",
            });
        }
        let scheme = Scheme::from_label(fields[0]).ok_or(ReportError::Malformed {
            line: line_no,
            reason: "unknown scheme label",
        })?;
        let form = CovarianceForm::from_label(fields[1]).ok_or(ReportError::Malformed {
            line: line_no,
            reason: "unknown form label",
        })?;
        let substeps = fields[2].parse().map_err(|_| ReportError::Malformed {
            line: line_no,
            reason: "bad substeps",
        })?;
        let delta_ill = fields[3].parse().map_err(|_| ReportError::Malformed {
            line: line_no,
            reason: "bad delta_ill",
        })?;
        let armse_position = if fields[4] == "FAILED" {
            None
        } else {
            Some(fields[4].parse().map_err(|_| ReportError::Malformed {
                line: line_no,
                reason: "bad armse",
            })?)
        };
        let failed_runs = fields[5].parse().map_err(|_| ReportError::Malformed {
            line: line_no,
            reason: "bad failed_runs",
        })?;
        let mean_condition = fields[6].parse().map_err(|_| ReportError::Malformed {
            line: line_no,
            reason: "bad mean_condition",
        })?;
        rows.push(CsvRow {
            spec: FilterSpec::new(scheme, form, substeps),
            delta_ill,
            armse_position,
            failed_runs,
            mean_condition,
        });
    }
    Ok(rows)
}

fn cell_text(cell: &CellOutcome) -> String {
    match cell.armse_position {
        Some(v) => format!("{v:.3e}"),
        None => format!("---({})", cell.failed_runs),
    }
}

/// Renders the sweep as one aligned text panel per scheme: rows are
/// `delta_ill` values, columns are filters, cells are position ARMSE or
/// `---(n)` when `n` runs diverged.
pub fn results_table(result: &SweepResult) -> String {
    const WIDTH: usize = 14;
    let deltas = &result.config.scenario.delta_ill;
    let mut out = String::new();
    let mut schemes: Vec<Scheme> = Vec::new();
    for spec in &result.config.filters {
        if !schemes.contains(&spec.scheme) {
            schemes.push(spec.scheme);
        }
    }
    for (pi, scheme) in schemes.iter().enumerate() {
        if pi > 0 {
            out.push('\n');
        }
        let specs: Vec<&FilterSpec> = result
            .config
            .filters
            .iter()
            .filter(|s| s.scheme == *scheme)
            .collect();
        let _ = writeln!(
            out,
            "Position ARMSE [m] — scheme {}, {} runs",
            scheme.label(),
            result.config.scenario.mc_runs
        );
        let _ = write!(out, "{:<WIDTH$}", "delta_ill");
        for spec in &specs {
            let _ = write!(out, "{:<WIDTH$}", format!("{}@{}", spec.form.label(), spec.substeps));
        }
        out.push('\n');
        for &delta in deltas {
            let _ = write!(out, "{:<WIDTH$}", format!("{delta:.0e}"));
            for spec in &specs {
                let text = result
                    .cell(spec, delta)
                    .map(cell_text)
                    .unwrap_or_else(|| "?".to_string());
                let _ = write!(out, "{:<WIDTH$}", text);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "---(n): diverged in n runs");
    }
    out
}

/// Echo of the configuration the sweep ran with, plus derived quantities,
/// as TOML.
pub fn metadata_toml(result: &SweepResult) -> String {
    let mut out = String::from("# Configuration echo of a completed sweep.\n");
    match toml::to_string_pretty(&result.config) {
        Ok(body) => out.push_str(&body),
        Err(_) => out.push_str("# (configuration could not be serialized)\n"),
    }
    out.push('\n');
    out.push_str("[computed]\n");
    let _ = writeln!(out, "steps = {}", result.config.scenario.steps());
    let _ = writeln!(out, "grid_cells = {}", result.cells.len());
    let total_failures: usize = result.cells.iter().map(|c| c.failed_runs).sum();
    let _ = writeln!(out, "total_failed_runs = {total_failures}");
    out
}

const FORM_COLORS: [(CovarianceForm, &str); 4] = [
    (CovarianceForm::SvdNode, "#1f77b4"),
    (CovarianceForm::CholeskyNode, "#d62728"),
    (CovarianceForm::SvdFactored, "#2ca02c"),
    (CovarianceForm::CholeskySquareRoot, "#9467bd"),
];

fn form_color(form: CovarianceForm) -> &'static str {
    FORM_COLORS
        .iter()
        .find(|(f, _)| *f == form)
        .map(|(_, c)| *c)
        .unwrap_or("#333333")
}

/// Renders the sweep as a self-contained SVG: position ARMSE against
/// `delta_ill`, both on log scales, ill-conditioning increasing to the
/// right.  Lines stop where a filter starts diverging.
pub fn accuracy_svg(result: &SweepResult) -> String {
    const W: f64 = 860.0;
    const H: f64 = 520.0;
    const LEFT: f64 = 80.0;
    const RIGHT: f64 = 230.0;
    const TOP: f64 = 50.0;
    const BOTTOM: f64 = 70.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;

    let deltas = &result.config.scenario.delta_ill;
    let x_hi = deltas.first().map(|d| d.log10()).unwrap_or(0.0);
    let x_lo = deltas.last().map(|d| d.log10()).unwrap_or(-1.0);
    let x_span = (x_hi - x_lo).max(1e-9);
    let x_of = |delta: f64| LEFT + (x_hi - delta.log10()) / x_span * plot_w;

    let mut y_min = f64::MAX;
    let mut y_max = f64::MIN;
    for cell in &result.cells {
        if let Some(v) = cell.armse_position {
            if v > 0.0 {
                y_min = y_min.min(v.log10());
                y_max = y_max.max(v.log10());
            }
        }
    }
    if y_min > y_max {
        y_min = 0.0;
        y_max = 1.0;
    }
    let pad = 0.25 * (y_max - y_min).max(0.5);
    let (y_lo, y_hi) = (y_min - pad, y_max + pad);
    let y_of = |v: f64| TOP + (y_hi - v.log10()) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">Position ARMSE vs measurement ill-conditioning</text>"#,
        LEFT + plot_w / 2.0
    );

    // Frame.
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );

    // X ticks at each grid decade.
    for &delta in deltas {
        let x = x_of(delta);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#ccc"/>"##,
            TOP,
            TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{}" text-anchor="middle">1e{}</text>"#,
            TOP + plot_h + 18.0,
            delta.log10().round() as i64
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">delta_ill</text>"#,
        LEFT + plot_w / 2.0,
        TOP + plot_h + 40.0
    );

    // Y ticks at integer decades.
    let tick_lo = y_lo.ceil() as i64;
    let tick_hi = y_hi.floor() as i64;
    for t in tick_lo..=tick_hi {
        let y = TOP + (y_hi - t as f64) / (y_hi - y_lo) * plot_h;
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ccc"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">1e{t}</text>"#,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" transform="rotate(-90 20 {})" text-anchor="middle">ARMSE [m]</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    // One polyline per filter, in config order; legend alongside.
    let mut legend_y = TOP + 10.0;
    for spec in &result.config.filters {
        let color = form_color(spec.form);
        let dash = match spec.scheme {
            Scheme::ItoTaylor15 => "",
            Scheme::EulerMaruyama05 => r#" stroke-dasharray="6 3""#,
        };
        let mut points = String::new();
        let mut markers = String::new();
        for &delta in deltas {
            if let Some(cell) = result.cell(spec, delta) {
                if let Some(v) = cell.armse_position {
                    let (x, y) = (x_of(delta), y_of(v));
                    let _ = write!(points, "{x:.1},{y:.1} ");
                    let _ = writeln!(
                        markers,
                        r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#
                    );
                }
            }
        }
        if !points.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                points.trim_end()
            );
            svg.push_str(&markers);
        }
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            lx + 28.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 34.0,
            legend_y + 4.0,
            spec.label()
        );
        legend_y += 20.0;
    }

    svg.push_str("</svg>\n");
    svg
}

/// Files produced by [`write_reports`].
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub results_csv: PathBuf,
    pub table_txt: PathBuf,
    pub metadata_toml: PathBuf,
    pub plot_svg: Option<PathBuf>,
}

/// Writes all report files into `dir`, creating it if needed.
pub fn write_reports(
    result: &SweepResult,
    dir: &Path,
    with_plot: bool,
) -> io::Result<ReportPaths> {
    fs::create_dir_all(dir)?;
    let results_path = dir.join("results.csv");
    fs::write(&results_path, results_csv(result))?;
    let table_path = dir.join("table.txt");
    fs::write(&table_path, results_table(result))?;
    let metadata_path = dir.join("run_metadata.toml");
    fs::write(&metadata_path, metadata_toml(result))?;
    let plot_path = if with_plot {
        let p = dir.join("armse_plot.svg");
        fs::write(&p, accuracy_svg(result))?;
        Some(p)
    } else {
        None
    };
    Ok(ReportPaths {
        results_csv: results_path,
        table_txt: table_path,
        metadata_toml: metadata_path,
        plot_svg: plot_path,
    })
}
