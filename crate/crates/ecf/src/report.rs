//! Report serialization: a byte-stable JSON report (fixed key order, floats
//! at 17 significant digits), a human-readable markdown rendering, and CSV
//! plot data (rho histogram or per-cluster Jaccard values).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::axioms::EvaluationReport;
use crate::core::AxiomVerdict;
use crate::error::{EcfError, Result};

/// serde_json formatter that pins finite floats to 17 significant digits
/// (`{:.16e}`), which both round-trips f64 exactly and keeps reports
/// byte-identical across runs.
struct Json17;

impl serde_json::ser::Formatter for Json17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.8e}")
    }
}

/// Serialize a report with stable key order and pinned float formatting.
pub fn report_json(report: &EvaluationReport) -> Result<String> {
    let mut buf = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut buf, Json17);
    report
        .serialize(&mut serializer)
        .map_err(|e| EcfError::InvalidInput(format!("report serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

/// Parse a report written by [`report_json`].
pub fn read_report(path: &Path) -> Result<EvaluationReport> {
    let text = fs::read_to_string(path).map_err(|source| EcfError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| EcfError::SchemaMismatch(format!("{}: {e}", path.display())))
}

fn verdict_row(label: &str, verdict: &AxiomVerdict) -> String {
    format!(
        "| {label} | {} | {} | {} | {:.4}% |\n",
        verdict.checks_total,
        verdict.violated,
        verdict.satisfied,
        verdict.satisfied_fraction * 100.0
    )
}

/// Human-readable rendering: the axiom count table plus the stability detail
/// table appropriate to the task.
pub fn report_markdown(report: &EvaluationReport) -> String {
    let mut md = String::new();
    md.push_str("# Explanation Consistency Report\n\n");
    md.push_str(&format!("- Method: {}\n", report.method_name));
    md.push_str(&format!("- Task: {}\n", report.task));
    md.push_str(&format!(
        "- Stability formulation: {}\n",
        report.stability_method
    ));
    if let Some(desc) = &report.explainer_description {
        md.push_str(&format!("- Explainer: {desc}\n"));
    }
    md.push('\n');

    md.push_str("| Axiom | #checks | #violated | #satisfied | % satisfied |\n");
    md.push_str("|-------|--------:|----------:|-----------:|------------:|\n");
    match &report.identity {
        Some(v) => md.push_str(&verdict_row("1. Identity", v)),
        None => md.push_str("| 1. Identity | not assessed (static explanation set) | - | - | - |\n"),
    }
    md.push_str(&verdict_row("2. Separability", &report.separability));
    md.push_str(&verdict_row("3. Stability", &report.stability));
    md.push('\n');

    if let Some(summary) = &report.rho_summary {
        md.push_str("## Stability: rank correlation summary\n\n");
        md.push_str("| Statistic | Value |\n|-----------|------:|\n");
        md.push_str(&format!("| Minimum | {:.4} |\n", summary.min));
        md.push_str(&format!("| Maximum | {:.4} |\n", summary.max));
        md.push_str(&format!("| Mean | {:.4} |\n", summary.mean));
        md.push_str(&format!("| Median | {:.4} |\n", summary.median));
        if !summary.degenerate_columns.is_empty() {
            md.push_str(&format!(
                "\n{} column(s) had constant distances; their correlation is undefined and counted as violated.\n",
                summary.degenerate_columns.len()
            ));
        }
        md.push('\n');
    }

    if let Some(table) = &report.cluster_table {
        md.push_str(&format!(
            "## Stability: cluster similarities ({})\n\n",
            table.algorithm
        ));
        md.push_str("| Cluster | Jaccard |\n|--------:|--------:|\n");
        for (label, jaccard) in &table.per_label_jaccard {
            md.push_str(&format!("| {label} | {jaccard:.4} |\n"));
        }
        md.push('\n');
    }

    md.push_str(&format!("> Note: {}.\n\n", report.separability_caveat));

    md.push_str("## Configuration\n\n```json\n");
    md.push_str(&serde_json::to_string_pretty(&report.config).expect("config serializes"));
    md.push_str("\n```\n");
    md
}

fn rho_histogram_csv(per_column: &[f64]) -> String {
    const BINS: usize = 20;
    let mut counts = [0u64; BINS];
    for &rho in per_column {
        if !rho.is_finite() {
            continue;
        }
        let idx = (((rho + 1.0) / 2.0 * BINS as f64).floor() as usize).min(BINS - 1);
        counts[idx] += 1;
    }
    let mut out = String::from("bin_start,bin_end,count\n");
    for (i, count) in counts.iter().enumerate() {
        let start = -1.0 + 2.0 * i as f64 / BINS as f64;
        let end = -1.0 + 2.0 * (i + 1) as f64 / BINS as f64;
        out.push_str(&format!("{start},{end},{count}\n"));
    }
    out
}

fn cluster_jaccard_csv(report: &EvaluationReport) -> Option<String> {
    let table = report.cluster_table.as_ref()?;
    let mut out = String::from("label,jaccard\n");
    for (label, jaccard) in &table.per_label_jaccard {
        out.push_str(&format!("{label},{jaccard}\n"));
    }
    Some(out)
}

/// Write report.json, report.md and the task's plot-data CSV into `dir`.
/// Returns the written paths.
pub fn write_report(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| EcfError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut emit = |name: &str, contents: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|source| EcfError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
        Ok(())
    };
    emit("report.json", report_json(report)?)?;
    emit("report.md", report_markdown(report))?;
    if let Some(summary) = &report.rho_summary {
        emit("rho_histogram.csv", rho_histogram_csv(&summary.per_column))?;
    }
    if let Some(csv) = cluster_jaccard_csv(report) {
        emit("cluster_jaccard.csv", csv)?;
    }
    Ok(written)
}

/// Canonical text lines for the `stats` view of a report. Floats keep the
/// 17-significant-digit formatting so a round trip through report.json
/// reproduces them bit-exactly.
pub fn stats_lines(report: &EvaluationReport) -> Vec<String> {
    let mut lines = Vec::new();
    lines.push(format!("method: {}", report.method_name));
    lines.push(format!("task: {}", report.task));
    let verdict = |name: &str, v: &AxiomVerdict| {
        format!(
            "{name}: checks={} violated={} satisfied={} fraction={:.16e}",
            v.checks_total, v.violated, v.satisfied, v.satisfied_fraction
        )
    };
    match &report.identity {
        Some(v) => lines.push(verdict("identity", v)),
        None => lines.push("identity: not assessed".to_string()),
    }
    lines.push(verdict("separability", &report.separability));
    lines.push(verdict("stability", &report.stability));
    lines.push(format!("stability_method: {}", report.stability_method));
    if let Some(s) = &report.rho_summary {
        lines.push(format!(
            "rho: min={:.16e} max={:.16e} mean={:.16e} median={:.16e} columns={} degenerate={}",
            s.min,
            s.max,
            s.mean,
            s.median,
            s.per_column.len(),
            s.degenerate_columns.len()
        ));
    }
    if let Some(t) = &report.cluster_table {
        for (label, jaccard) in &t.per_label_jaccard {
            lines.push(format!("jaccard[{label}]: {jaccard:.16e}"));
        }
    }
    lines
}
