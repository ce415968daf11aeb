//! Suite reports: accuracy tables, significance tests, active-set overlap
//! and accuracy-versus-labeled-fraction plots.
//!
//! Output bytes depend only on the input records, never on wall time or
//! directory iteration order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use albench_core::analysis::{
    active_set_overlap, aggregate, anova_tukey, Aggregate, AnovaOutcome, MethodGroup, Observation,
    OverlapMatrix, SignificanceReport,
};
use albench_core::config::{ExperimentConfig, NoiseMode};
use albench_core::index_set::read_index_set;
use albench_core::records::IterationRecord;

use crate::error::{Result, RunError};
use crate::experiment::load_config;
use crate::layout::{write_atomic, RunDir, RunManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(RunError::Report(format!(
                "unknown report format `{other}` (expected csv, text or svg)"
            ))),
        }
    }
}

/// Records of one run plus what is needed to label them.
#[derive(Debug, Clone)]
pub struct RunResults {
    pub method: String,
    pub config: ExperimentConfig,
    pub manifest: RunManifest,
    pub records: Vec<IterationRecord>,
    pub run_dir: RunDir,
}

/// Every run directory at or below `roots`, in path order.
pub fn collect_runs(roots: &[PathBuf]) -> Result<Vec<RunResults>> {
    let mut dirs = Vec::new();
    for root in roots {
        find_run_dirs(root, &mut dirs)?;
    }
    dirs.sort();
    dirs.dedup();
    let mut runs = Vec::with_capacity(dirs.len());
    for d in dirs {
        let run = RunDir::new(d);
        let manifest = run.read_manifest()?;
        let config = load_config(&run.config())?;
        let mut method = config.method_name();
        if let Some(src) = &manifest.source {
            method = format!("{method} (replay of {})", &src.config_hash[..8.min(src.config_hash.len())]);
        }
        runs.push(RunResults {
            method,
            config,
            records: run.read_records()?,
            manifest,
            run_dir: run,
        });
    }
    disambiguate(&mut runs);
    Ok(runs)
}

fn find_run_dirs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("run.json").is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    let entries = fs::read_dir(dir).map_err(|e| RunError::io(format!("listing {}", dir.display()), e))?;
    for e in entries.filter_map(|e| e.ok()) {
        if e.path().is_dir() {
            find_run_dirs(&e.path(), out)?;
        }
    }
    Ok(())
}

/// Two configs sharing a method name get their hash prefix appended.
fn disambiguate(runs: &mut [RunResults]) {
    let mut hashes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in runs.iter() {
        let h = hashes.entry(r.method.clone()).or_default();
        if !h.contains(&r.manifest.config_hash) {
            h.push(r.manifest.config_hash.clone());
        }
    }
    for r in runs.iter_mut() {
        if hashes[&r.method].len() > 1 {
            r.method = format!("{} [{}]", r.method, &r.manifest.config_hash[..8.min(r.manifest.config_hash.len())]);
        }
    }
}

/// Significance test among methods at one labeled fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionSignificance {
    pub labeled_fraction: f64,
    /// `Err` explains why no test was possible.
    pub outcome: std::result::Result<SignificanceReport, String>,
}

/// Mean overlap of the sets selected at one iteration, averaged over the
/// `(seed, fold)` cells that every method ran.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOverlap {
    pub iteration: usize,
    pub cells: usize,
    pub matrix: OverlapMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub aggregate: Aggregate,
    pub alpha: f64,
    pub significance: Vec<FractionSignificance>,
    pub overlap: Vec<IterationOverlap>,
    /// Settings that change how numbers should be read (label noise,
    /// imbalance), one line each.
    pub notes: Vec<String>,
}

/// Test accuracies in percent, one observation per record.
pub fn observations(runs: &[RunResults]) -> Vec<Observation> {
    runs.iter()
        .flat_map(|r| {
            r.records.iter().map(|rec| Observation {
                method: r.method.clone(),
                labeled_fraction: rec.labeled_fraction,
                accuracy: 100.0 * rec.test_accuracy,
            })
        })
        .collect()
}

pub fn summarize_runs(runs: &[RunResults], alpha: f64) -> Result<SuiteSummary> {
    let mut summary = summarize(&observations(runs), alpha)?;
    summary.overlap = overlaps(runs)?;
    let mut notes: Vec<String> = Vec::new();
    for r in runs {
        let c = &r.config;
        let mut parts = Vec::new();
        if c.oracle_noise_fraction > 0.0 {
            let mode = match c.noise_mode {
                NoiseMode::Reassign => "reassign",
                NoiseMode::Shuffle => "shuffle",
            };
            parts.push(format!("label noise {} ({mode} mode)", c.oracle_noise_fraction));
        }
        if c.imbalance_enabled {
            parts.push(format!("long-tailed pool ({:?} scope)", c.imbalance.scope));
        }
        if c.regularization.ra_enabled || c.regularization.swa_enabled {
            parts.push(format!(
                "regularization: RandAugment {}, SWA {}",
                on_off(c.regularization.ra_enabled),
                on_off(c.regularization.swa_enabled)
            ));
        }
        if !parts.is_empty() {
            let line = format!("{}: {}", r.method, parts.join("; "));
            if !notes.contains(&line) {
                notes.push(line);
            }
        }
    }
    notes.sort();
    summary.notes = notes;
    Ok(summary)
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Aggregates observations and tests every labeled fraction. An empty
/// suite is an error.
pub fn summarize(observations: &[Observation], alpha: f64) -> Result<SuiteSummary> {
    if observations.is_empty() {
        return Err(RunError::Report("the suite has no results".into()));
    }
    let agg = aggregate(observations)?;
    let mut significance = Vec::with_capacity(agg.fractions.len());
    for &f in &agg.fractions {
        let groups: Vec<MethodGroup> = agg
            .methods
            .iter()
            .filter_map(|m| {
                let mut values: Vec<f64> = observations
                    .iter()
                    .filter(|o| &o.method == m && same_fraction(o.labeled_fraction, f))
                    .map(|o| o.accuracy)
                    .collect();
                // Sorted so the test does not depend on observation order.
                values.sort_by(f64::total_cmp);
                (values.len() >= 2).then(|| MethodGroup::new(m.clone(), values))
            })
            .collect();
        let outcome = if groups.len() < 2 {
            Err("fewer than two methods with at least two runs".to_string())
        } else {
            anova_tukey(&groups, alpha).map_err(|e| e.to_string())
        };
        significance.push(FractionSignificance {
            labeled_fraction: f,
            outcome,
        });
    }
    Ok(SuiteSummary {
        aggregate: agg,
        alpha,
        significance,
        overlap: Vec::new(),
        notes: Vec::new(),
    })
}

fn same_fraction(a: f64, b: f64) -> bool {
    (a * 1e9).round() == (b * 1e9).round()
}

fn overlaps(runs: &[RunResults]) -> Result<Vec<IterationOverlap>> {
    // (iteration, seed, fold) -> method -> selected set
    let mut sets: BTreeMap<(usize, u64, usize), BTreeMap<String, Vec<usize>>> = BTreeMap::new();
    for r in runs {
        for rec in r.records.iter().filter(|rec| rec.iteration > 0) {
            let path = r.run_dir.root.join(&rec.selected_indices);
            if let Ok(loaded) = read_index_set(&path) {
                sets.entry((rec.iteration, r.manifest.seed, r.manifest.fold))
                    .or_default()
                    .insert(r.method.clone(), loaded.set.indices);
            }
        }
    }
    let methods: Vec<String> = {
        let mut m: Vec<String> = runs.iter().map(|r| r.method.clone()).collect();
        m.sort();
        m.dedup();
        m
    };
    if methods.len() < 2 {
        return Ok(Vec::new());
    }
    let mut sums: BTreeMap<usize, (usize, Vec<Vec<f64>>)> = BTreeMap::new();
    for ((iteration, _, _), by_method) in &sets {
        if by_method.len() != methods.len() {
            continue;
        }
        let input: Vec<(String, Vec<usize>)> = by_method.iter().map(|(m, s)| (m.clone(), s.clone())).collect();
        let Ok(matrix) = active_set_overlap(&input) else {
            continue;
        };
        let entry = sums
            .entry(*iteration)
            .or_insert_with(|| (0, vec![vec![0.0; methods.len()]; methods.len()]));
        entry.0 += 1;
        for (row, mrow) in entry.1.iter_mut().zip(&matrix.values) {
            for (v, m) in row.iter_mut().zip(mrow) {
                *v += m;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(iteration, (cells, total))| IterationOverlap {
            iteration,
            cells,
            matrix: OverlapMatrix {
                methods: methods.clone(),
                values: total
                    .into_iter()
                    .map(|row| row.into_iter().map(|v| v / cells as f64).collect())
                    .collect(),
            },
        })
        .collect())
}

fn percent(f: f64) -> String {
    format!("{:.1}%", 100.0 * f)
}

fn mean_std_cell(summary: &SuiteSummary, method: &str, fraction: f64) -> String {
    match summary.aggregate.cell(method, fraction) {
        Some(c) => match c.std {
            Some(s) => format!("{:.2} ± {:.2}", c.mean, s),
            None => format!("{:.2} ± n/a", c.mean),
        },
        None => String::new(),
    }
}

/// Header plus one row per method; cells read "mean ± std" and gaps are
/// empty.
pub fn accuracy_table(summary: &SuiteSummary) -> Vec<Vec<String>> {
    let agg = &summary.aggregate;
    let mut rows = Vec::with_capacity(agg.methods.len() + 1);
    let mut header = vec!["method".to_string()];
    header.extend(agg.fractions.iter().map(|&f| percent(f)));
    rows.push(header);
    for m in &agg.methods {
        let mut row = vec![m.clone()];
        row.extend(agg.fractions.iter().map(|&f| mean_std_cell(summary, m, f)));
        rows.push(row);
    }
    rows
}

/// Writes the report files for `format` into `out_dir` and returns their
/// paths.
pub fn emit_report(summary: &SuiteSummary, format: ReportFormat, out_dir: &Path) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Csv => {
            let table = out_dir.join("accuracy.csv");
            write_atomic(&table, &csv_bytes(&accuracy_table(summary))?)?;
            let sig = out_dir.join("significance.csv");
            write_atomic(&sig, &csv_bytes(&significance_rows(summary))?)?;
            let mut out = vec![table, sig];
            if !summary.overlap.is_empty() {
                let ov = out_dir.join("overlap.csv");
                write_atomic(&ov, &csv_bytes(&overlap_rows(summary))?)?;
                out.push(ov);
            }
            Ok(out)
        }
        ReportFormat::Text => {
            let path = out_dir.join("report.txt");
            write_atomic(&path, text_report(summary).as_bytes())?;
            Ok(vec![path])
        }
        ReportFormat::Svg => {
            let path = out_dir.join("accuracy.svg");
            write_atomic(&path, svg_plot(summary).as_bytes())?;
            Ok(vec![path])
        }
    }
}

fn csv_bytes(rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r).map_err(|e| RunError::Report(e.to_string()))?;
    }
    w.into_inner().map_err(|e| RunError::Report(e.to_string()))
}

fn significance_rows(summary: &SuiteSummary) -> Vec<Vec<String>> {
    let mut rows = vec![[
        "labeled_fraction",
        "method_a",
        "method_b",
        "mean_difference",
        "p_adjusted",
        "significant",
        "anova_f",
        "anova_p",
    ]
    .map(String::from)
    .to_vec()];
    for fs in &summary.significance {
        let Ok(rep) = &fs.outcome else { continue };
        let (f, p) = match rep.anova {
            AnovaOutcome::Tested { f, p, .. } => (format!("{f:.6}"), format!("{p:.6}")),
            AnovaOutcome::NoVariance => ("no variance".into(), String::new()),
        };
        for pair in &rep.pairs {
            rows.push(vec![
                format!("{:.6}", fs.labeled_fraction),
                rep.methods[pair.a].clone(),
                rep.methods[pair.b].clone(),
                format!("{:.4}", pair.mean_difference),
                format!("{:.6}", pair.p_adjusted),
                pair.significant.to_string(),
                f.clone(),
                p.clone(),
            ]);
        }
    }
    rows
}

fn overlap_rows(summary: &SuiteSummary) -> Vec<Vec<String>> {
    let mut rows = vec![["iteration", "cells", "method_a", "method_b", "overlap"].map(String::from).to_vec()];
    for ov in &summary.overlap {
        for (a, ma) in ov.matrix.methods.iter().enumerate() {
            for (b, mb) in ov.matrix.methods.iter().enumerate() {
                rows.push(vec![
                    ov.iteration.to_string(),
                    ov.cells.to_string(),
                    ma.clone(),
                    mb.clone(),
                    format!("{:.4}", ov.matrix.values[a][b]),
                ]);
            }
        }
    }
    rows
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let pad = widths[c] - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Human-readable table followed by the significance report.
pub fn text_report(summary: &SuiteSummary) -> String {
    let mut out = String::from("Test accuracy (%) by labeled fraction, mean ± sample std over runs\n\n");
    out.push_str(&aligned(&accuracy_table(summary)));
    if !summary.aggregate.gaps.is_empty() {
        out.push_str("\nMissing cells:\n");
        for (m, f) in &summary.aggregate.gaps {
            let _ = writeln!(out, "  {m} at {}", percent(*f));
        }
    }
    if !summary.notes.is_empty() {
        out.push_str("\nSettings:\n");
        for n in &summary.notes {
            let _ = writeln!(out, "  {n}");
        }
    }
    let _ = writeln!(
        out,
        "\nSignificance: one-way ANOVA, then Tukey-Kramer pairwise comparisons (alpha {})",
        summary.alpha
    );
    for fs in &summary.significance {
        let _ = writeln!(out, "\nAt {} labeled:", percent(fs.labeled_fraction));
        match &fs.outcome {
            Err(reason) => {
                let _ = writeln!(out, "  not tested: {reason}");
            }
            Ok(rep) => {
                match rep.anova {
                    AnovaOutcome::Tested {
                        f,
                        p,
                        df_between,
                        df_within,
                    } => {
                        let _ = writeln!(out, "  ANOVA F({df_between}, {df_within}) = {f:.4}, p = {p:.4}");
                    }
                    AnovaOutcome::NoVariance => {
                        out.push_str("  ANOVA: no variance (all observations identical)\n");
                    }
                }
                let mut rows = vec![["pair", "difference", "adjusted p", ""].map(String::from).to_vec()];
                for pair in &rep.pairs {
                    rows.push(vec![
                        format!("{} - {}", rep.methods[pair.a], rep.methods[pair.b]),
                        format!("{:+.2}", pair.mean_difference),
                        format!("{:.4}", pair.p_adjusted),
                        if pair.significant { "*".into() } else { String::new() },
                    ]);
                }
                for line in aligned(&rows).lines() {
                    let _ = writeln!(out, "  {line}");
                }
                let n = rep.significant_pairs().count();
                let _ = writeln!(out, "  {n} of {} pairs significant", rep.pairs.len());
            }
        }
    }
    for ov in &summary.overlap {
        let _ = writeln!(
            out,
            "\nActive-set overlap |A∩B|/|A| at iteration {} (mean over {} cells):",
            ov.iteration, ov.cells
        );
        let mut rows = vec![std::iter::once(String::new()).chain(ov.matrix.methods.iter().cloned()).collect::<Vec<_>>()];
        for (m, row) in ov.matrix.methods.iter().zip(&ov.matrix.values) {
            rows.push(std::iter::once(m.clone()).chain(row.iter().map(|v| format!("{v:.3}"))).collect());
        }
        for line in aligned(&rows).lines() {
            let _ = writeln!(out, "  {line}");
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Mean accuracy curves with a one-std band per method.
pub fn svg_plot(summary: &SuiteSummary) -> String {
    let agg = &summary.aggregate;
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (60.0, 190.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let xs: Vec<f64> = agg.fractions.iter().map(|f| 100.0 * f).collect();
    let (xmin, xmax) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 1.0, a + 1.0),
        _ => (0.0, 1.0),
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in &agg.cells {
        let s = c.std.unwrap_or(0.0);
        lo = lo.min(c.mean - s);
        hi = hi.max(c.mean + s);
    }
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (ymin, ymax) = (lo - pad, hi + pad);
    let px = |x: f64| left + (x - xmin) / (xmax - xmin) * pw;
    let py = |y: f64| top + (ymax - y) / (ymax - ymin) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let y = ymin + (ymax - ymin) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.1}</text>"#,
            left - 6.0,
            py(y) + 4.0
        );
    }
    for &x in &xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x:.1}</text>"#,
            px(x),
            top + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">labeled samples (%)</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">test accuracy (%)</text>"#,
        top + ph / 2.0
    );
    for (mi, m) in agg.methods.iter().enumerate() {
        let color = PALETTE[mi % PALETTE.len()];
        let cells: Vec<_> = agg
            .fractions
            .iter()
            .filter_map(|&f| agg.cell(m, f))
            .collect();
        if cells.is_empty() {
            continue;
        }
        let upper: Vec<String> = cells
            .iter()
            .map(|c| format!("{:.2},{:.2}", px(100.0 * c.labeled_fraction), py(c.mean + c.std.unwrap_or(0.0))))
            .collect();
        let lower: Vec<String> = cells
            .iter()
            .rev()
            .map(|c| format!("{:.2},{:.2}", px(100.0 * c.labeled_fraction), py(c.mean - c.std.unwrap_or(0.0))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = cells
            .iter()
            .map(|c| format!("{:.2},{:.2}", px(100.0 * c.labeled_fraction), py(c.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = top + 14.0 + 18.0 * mi as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 24.0,
            xml_escape(m)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(methods: usize, fractions: usize, runs: usize) -> Vec<Observation> {
        let mut out = Vec::new();
        for m in 0..methods {
            for f in 0..fractions {
                for r in 0..runs {
                    out.push(Observation {
                        method: format!("m{m}"),
                        labeled_fraction: 0.1 * (f + 1) as f64,
                        accuracy: 60.0 + f as f64 * 5.0 + m as f64 * 0.1 + r as f64 * 0.7,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn eight_by_four_table_shape() {
        let s = summarize(&grid(8, 4, 3), 0.05).unwrap();
        let t = accuracy_table(&s);
        assert_eq!(t.len(), 9);
        assert!(t.iter().all(|r| r.len() == 5));
        assert!(t[1][1].contains(" ± "));
    }

    #[test]
    fn empty_suite_is_an_error() {
        assert!(summarize(&[], 0.05).is_err());
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert!("pdf".parse::<ReportFormat>().is_err());
        assert_eq!("svg".parse::<ReportFormat>().unwrap(), ReportFormat::Svg);
    }

    #[test]
    fn output_bytes_are_deterministic() {
        let mut obs = grid(3, 2, 4);
        let a = summarize(&obs, 0.05).unwrap();
        obs.reverse();
        let b = summarize(&obs, 0.05).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        for f in [ReportFormat::Csv, ReportFormat::Text, ReportFormat::Svg] {
            let p1 = emit_report(&a, f, d1.path()).unwrap();
            let p2 = emit_report(&b, f, d2.path()).unwrap();
            for (x, y) in p1.iter().zip(&p2) {
                assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{x:?}");
            }
        }
    }

    #[test]
    fn single_run_cells_have_no_std_and_no_test() {
        let s = summarize(&grid(2, 1, 1), 0.05).unwrap();
        assert!(accuracy_table(&s)[1][1].ends_with("n/a"));
        assert!(s.significance[0].outcome.is_err());
        assert!(text_report(&s).contains("not tested"));
    }
}
