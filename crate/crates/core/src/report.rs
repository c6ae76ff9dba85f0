//! Human-readable tables and plot-ready CSVs built from a results bundle,
//! plus the paired statistical comparison of methods.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::classifier::MetricsVector;
use crate::error::{DataError, Error, Result};
use crate::pipeline::{mean_std, METRICS_HEADER};
use crate::stats::{
    holm_bonferroni, paired_t, wilcoxon_signed_rank, HolmDecision, TestResult, WilcoxonResult,
};

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub source: String,
    pub target: String,
    pub repeat: usize,
    pub method: String,
    pub metrics: [f64; 6],
}

fn parse_err(context: &str, message: impl ToString) -> Error {
    DataError::Parse {
        context: context.to_string(),
        message: message.to_string(),
    }
    .into()
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    if !path.is_file() {
        return Err(DataError::MissingFile {
            path: path.to_path_buf(),
        }
        .into());
    }
    let ctx = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(&ctx, e))?;
    let header = reader.headers().map_err(|e| parse_err(&ctx, e))?.clone();
    if header.iter().collect::<Vec<_>>() != METRICS_HEADER {
        return Err(parse_err(&ctx, "unexpected header"));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| parse_err(&ctx, e))?;
            let mut metrics = [0.0; 6];
            for (k, m) in metrics.iter_mut().enumerate() {
                *m = rec[5 + k].parse().map_err(|e| parse_err(&ctx, e))?;
            }
            Ok(MetricRow {
                source: rec[0].to_string(),
                target: rec[1].to_string(),
                repeat: rec[2].parse().map_err(|e| parse_err(&ctx, e))?,
                method: rec[3].to_string(),
                metrics,
            })
        })
        .collect()
}

/// Per-pair means of the six metrics for one method, with Mean and
/// Standard Deviation over pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub method: String,
    /// (source, target, runs, metric means)
    pub rows: Vec<(String, String, usize, [f64; 6])>,
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

fn ordered_pairs<'a>(rows: &'a [MetricRow], method: &str) -> Vec<(&'a str, &'a str)> {
    let mut pairs = Vec::new();
    for r in rows.iter().filter(|r| r.method == method) {
        let key = (r.source.as_str(), r.target.as_str());
        if !pairs.contains(&key) {
            pairs.push(key);
        }
    }
    pairs
}

pub fn build_table(rows: &[MetricRow], method: &str) -> Result<ReportTable> {
    let pairs = ordered_pairs(rows, method);
    if pairs.is_empty() {
        return Err(DataError::Empty(format!("no `{method}` results in bundle")).into());
    }
    let mut table_rows = Vec::new();
    for (s, t) in pairs {
        let members: Vec<&MetricRow> = rows
            .iter()
            .filter(|r| r.method == method && r.source == s && r.target == t)
            .collect();
        let mut means = [0.0; 6];
        for (k, m) in means.iter_mut().enumerate() {
            let v: Vec<f64> = members.iter().map(|r| r.metrics[k]).collect();
            *m = mean_std(&v).0;
        }
        table_rows.push((s.to_string(), t.to_string(), members.len(), means));
    }
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for k in 0..6 {
        let v: Vec<f64> = table_rows.iter().map(|r| r.3[k]).collect();
        (mean[k], std[k]) = mean_std(&v);
    }
    Ok(ReportTable {
        method: method.to_string(),
        rows: table_rows,
        mean,
        std,
    })
}

/// Rates in percent; kappa as a coefficient.
fn cells(v: &[f64; 6]) -> Vec<String> {
    v.iter()
        .enumerate()
        .map(|(k, x)| {
            if k == 5 {
                format!("{x:.4}")
            } else {
                format!("{:.2}", 100.0 * x)
            }
        })
        .collect()
}

pub fn render_table(t: &ReportTable) -> String {
    let mut header = vec!["Source".to_string(), "Target".into(), "Runs".into()];
    header.extend(MetricsVector::NAMES.iter().map(|n| {
        if *n == "kappa" {
            n.to_string()
        } else {
            format!("{n} (%)")
        }
    }));
    let mut lines: Vec<Vec<String>> = vec![header];
    for (s, tg, n, m) in &t.rows {
        let mut l = vec![s.clone(), tg.clone(), n.to_string()];
        l.extend(cells(m));
        lines.push(l);
    }
    let mut mean = vec!["Mean".to_string(), String::new(), String::new()];
    mean.extend(cells(&t.mean));
    lines.push(mean);
    let mut sd = vec![
        "Standard Deviation".to_string(),
        String::new(),
        String::new(),
    ];
    sd.extend(cells(&t.std));
    lines.push(sd);

    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!("Method: {}\n", t.method);
    for (i, l) in lines.iter().enumerate() {
        let cols: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| {
                if c < 2 {
                    format!("{v:<w$}")
                } else {
                    format!("{v:>w$}")
                }
            })
            .collect();
        out.push_str(cols.join("  ").trim_end());
        out.push('\n');
        if i == 0 || i == lines.len() - 3 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}

fn write_table_csv(path: &Path, t: &ReportTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut header = vec!["source", "target", "runs"];
    header.extend(MetricsVector::NAMES);
    w.write_record(&header)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut put = |a: &str, b: &str, n: String, v: &[f64; 6]| {
        let mut rec = vec![a.to_string(), b.to_string(), n];
        rec.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&rec)
            .map_err(|e| Error::InvalidArgument(e.to_string()))
    };
    for (s, tg, n, m) in &t.rows {
        put(s, tg, n.to_string(), m)?;
    }
    put("Mean", "", String::new(), &t.mean)?;
    put("Standard Deviation", "", String::new(), &t.std)?;
    w.flush()?;
    Ok(())
}

/// Every `runs/<pair>/r<k>/<file>` under the bundle, sorted.
fn run_files(bundle: &Path, file: &str) -> Result<Vec<(String, String, PathBuf)>> {
    let runs = bundle.join("runs");
    let mut out = Vec::new();
    if !runs.is_dir() {
        return Ok(out);
    }
    for pair in fs::read_dir(&runs)? {
        let pair = pair?;
        for rep in fs::read_dir(pair.path())? {
            let rep = rep?;
            let p = rep.path().join(file);
            if p.is_file() {
                out.push((
                    pair.file_name().to_string_lossy().into_owned(),
                    rep.file_name().to_string_lossy().into_owned(),
                    p,
                ));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Concatenates the per-run traces with `pair` and `repeat` columns.
fn write_convergence(bundle: &Path, path: &Path) -> Result<usize> {
    let traces = run_files(bundle, "trace.csv")?;
    let mut out = String::new();
    for (i, (pair, rep, p)) in traces.iter().enumerate() {
        let text = fs::read_to_string(p)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            let _ = writeln!(out, "pair,repeat,{header}");
        }
        for l in lines {
            let _ = writeln!(out, "{pair},{},{l}", rep.trim_start_matches('r'));
        }
    }
    fs::write(path, out)?;
    Ok(traces.len())
}

#[derive(Debug, Clone)]
pub struct Report {
    pub table: ReportTable,
    pub baseline: Option<ReportTable>,
    pub text: String,
    pub files: Vec<PathBuf>,
}

/// Builds the summary table(s) and writes `report.txt`, `table.csv`,
/// `convergence.csv` and `scatter.csv` (the first run's projected test
/// set) into the bundle directory.
pub fn emit_report(bundle: &Path) -> Result<Report> {
    let rows = read_metrics_csv(&bundle.join("metrics.csv"))?;
    if rows.is_empty() {
        return Err(DataError::Empty(format!("{} has no results", bundle.display())).into());
    }
    let has_tl = rows.iter().any(|r| r.method == "with_tl");
    let table = build_table(&rows, if has_tl { "with_tl" } else { "without_tl" })?;
    let baseline = if has_tl && rows.iter().any(|r| r.method == "without_tl") {
        Some(build_table(&rows, "without_tl")?)
    } else {
        None
    };
    let mut text = render_table(&table);
    if let Some(b) = &baseline {
        text.push('\n');
        text.push_str(&render_table(b));
    }
    let mut files = Vec::new();
    let report = bundle.join("report.txt");
    fs::write(&report, &text)?;
    files.push(report);
    let csv_path = bundle.join("table.csv");
    write_table_csv(&csv_path, &table)?;
    files.push(csv_path);
    let conv = bundle.join("convergence.csv");
    if write_convergence(bundle, &conv)? > 0 {
        files.push(conv);
    }
    let scatter_name = if has_tl {
        "scatter.csv"
    } else {
        "scatter_without_tl.csv"
    };
    if let Some((_, _, first)) = run_files(bundle, scatter_name)?.into_iter().next() {
        let dest = bundle.join("scatter.csv");
        fs::copy(first, &dest)?;
        files.push(dest);
    }
    Ok(Report {
        table,
        baseline,
        text,
        files,
    })
}

/// Per-pair scores of several methods; column 0 is the proposed method.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedScores {
    pub labels: Vec<String>,
    pub methods: Vec<String>,
    /// `scores[m][i]`: method m on pair i.
    pub scores: Vec<Vec<f64>>,
}

/// CSV with header `pair,<proposed>,<other>...`.
pub fn read_paired_csv(path: &Path) -> Result<PairedScores> {
    if !path.is_file() {
        return Err(DataError::MissingFile {
            path: path.to_path_buf(),
        }
        .into());
    }
    let ctx = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(&ctx, e))?;
    let header = reader.headers().map_err(|e| parse_err(&ctx, e))?.clone();
    if header.len() < 3 {
        return Err(parse_err(
            &ctx,
            "need a label column and at least two methods",
        ));
    }
    let methods: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut scores = vec![Vec::new(); methods.len()];
    let mut labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(&ctx, e))?;
        if rec.len() != header.len() {
            return Err(DataError::Geometry {
                context: ctx.clone(),
                expected: format!("{} columns", header.len()),
                found: format!("{} columns", rec.len()),
            }
            .into());
        }
        labels.push(rec[0].to_string());
        for (m, col) in scores.iter_mut().enumerate() {
            col.push(rec[m + 1].trim().parse().map_err(|e| parse_err(&ctx, e))?);
        }
    }
    if labels.is_empty() {
        return Err(DataError::Empty(ctx).into());
    }
    Ok(PairedScores {
        labels,
        methods,
        scores,
    })
}

/// Per-pair accuracy with and without projection, averaged over repeats.
pub fn paired_from_rows(rows: &[MetricRow]) -> Result<PairedScores> {
    let pairs = ordered_pairs(rows, "with_tl");
    let acc = |s: &str, t: &str, m: &str| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == m && r.source == s && r.target == t)
            .map(|r| r.metrics[2])
            .collect();
        if v.is_empty() {
            None
        } else {
            Some(mean_std(&v).0)
        }
    };
    let mut out = PairedScores {
        labels: Vec::new(),
        methods: vec!["with_tl".into(), "without_tl".into()],
        scores: vec![Vec::new(), Vec::new()],
    };
    for (s, t) in pairs {
        if let (Some(a), Some(b)) = (acc(s, t, "with_tl"), acc(s, t, "without_tl")) {
            out.labels.push(format!("{s}_{t}"));
            out.scores[0].push(a);
            out.scores[1].push(b);
        }
    }
    if out.labels.is_empty() {
        return Err(DataError::Empty("no pairs with both methods".into()).into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub competitor: String,
    pub t_test: TestResult,
    pub t_holm: HolmDecision,
    pub wilcoxon: WilcoxonResult,
    pub wilcoxon_holm: HolmDecision,
}

/// The proposed method (column 0) against each other column: paired t and
/// Wilcoxon on the differences, each family Holm-corrected.
pub fn compare(scores: &PairedScores) -> Result<Vec<Comparison>> {
    let proposed = &scores.scores[0];
    let mut t_results = Vec::new();
    let mut w_results = Vec::new();
    for other in &scores.scores[1..] {
        let diffs: Vec<f64> = proposed.iter().zip(other).map(|(a, b)| a - b).collect();
        t_results.push(paired_t(&diffs)?);
        w_results.push(wilcoxon_signed_rank(&diffs)?);
    }
    let t_holm = holm_bonferroni(&t_results.iter().map(|r| r.p_value).collect::<Vec<_>>())?;
    let w_holm = holm_bonferroni(&w_results.iter().map(|r| r.test.p_value).collect::<Vec<_>>())?;
    Ok(scores.methods[1..]
        .iter()
        .enumerate()
        .map(|(k, name)| Comparison {
            competitor: name.clone(),
            t_test: t_results[k],
            t_holm: t_holm[k],
            wilcoxon: w_results[k].clone(),
            wilcoxon_holm: w_holm[k],
        })
        .collect())
}

fn decision(reject: bool) -> &'static str {
    if reject {
        "R"
    } else {
        "NR"
    }
}

fn fmt_p(p: f64) -> String {
    if p < 1e-5 {
        "<1e-5".into()
    } else {
        format!("{p:.4}")
    }
}

pub fn render_comparisons(proposed: &str, comps: &[Comparison]) -> String {
    let mut out = format!("Proposed: {proposed}\n\nPaired t-test\n");
    let _ = writeln!(
        out,
        "{:<16} {:>9} {:>9} {:>4} {:>8} {:>4}   Holm {:>3}",
        "competitor", "t", "p", "dec", "alpha'", "rank", "dec"
    );
    for c in comps {
        let _ = writeln!(
            out,
            "{:<16} {:>9.4} {:>9} {:>4} {:>8.4} {:>4}   {:>8}",
            c.competitor,
            c.t_test.statistic,
            fmt_p(c.t_test.p_value),
            decision(c.t_test.reject_h0_at_95),
            c.t_holm.alpha,
            c.t_holm.rank,
            decision(c.t_holm.reject)
        );
    }
    out.push_str("\nWilcoxon signed-rank test\n");
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>7} {:>7} {:>9} {:>9} {:>4} {:>8} {:>4}   Holm {:>3}",
        "competitor", "sum+", "sum-", "W", "p", "p(cc)", "dec", "alpha'", "rank", "dec"
    );
    for c in comps {
        let w = &c.wilcoxon;
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>7} {:>7} {:>9} {:>9} {:>4} {:>8.4} {:>4}   {:>8}",
            c.competitor,
            w.sum_positive,
            w.sum_negative,
            w.test.statistic,
            fmt_p(w.test.p_value),
            fmt_p(w.p_value_corrected),
            decision(w.test.reject_h0_at_95),
            c.wilcoxon_holm.alpha,
            c.wilcoxon_holm.rank,
            decision(c.wilcoxon_holm.reject)
        );
    }
    if let Some(c) = comps.first() {
        let _ = writeln!(
            out,
            "\nn = {}; W critical value at 0.05: {}",
            c.wilcoxon.n_used,
            c.wilcoxon
                .critical_value
                .map_or("none".to_string(), |v| v.to_string())
        );
    }
    out
}

pub fn write_comparisons_csv(path: &Path, comps: &[Comparison]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    w.write_record([
        "competitor",
        "t",
        "t_p",
        "t_reject",
        "t_holm_rank",
        "t_holm_alpha",
        "t_holm_reject",
        "sum_positive",
        "sum_negative",
        "w",
        "w_p",
        "w_p_corrected",
        "w_p_greater",
        "w_critical",
        "w_reject",
        "w_holm_rank",
        "w_holm_alpha",
        "w_holm_reject",
    ])
    .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for c in comps {
        let wx = &c.wilcoxon;
        w.write_record([
            c.competitor.clone(),
            c.t_test.statistic.to_string(),
            c.t_test.p_value.to_string(),
            c.t_test.reject_h0_at_95.to_string(),
            c.t_holm.rank.to_string(),
            c.t_holm.alpha.to_string(),
            c.t_holm.reject.to_string(),
            wx.sum_positive.to_string(),
            wx.sum_negative.to_string(),
            wx.test.statistic.to_string(),
            wx.test.p_value.to_string(),
            wx.p_value_corrected.to_string(),
            wx.p_value_greater.to_string(),
            wx.critical_value.map_or(String::new(), |v| v.to_string()),
            wx.test.reject_h0_at_95.to_string(),
            c.wilcoxon_holm.rank.to_string(),
            c.wilcoxon_holm.alpha.to_string(),
            c.wilcoxon_holm.reject.to_string(),
        ])
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: &str, t: &str, rep: usize, method: &str, acc: f64) -> MetricRow {
        MetricRow {
            source: s.into(),
            target: t.into(),
            repeat: rep,
            method: method.into(),
            metrics: [acc, acc, acc, acc, acc, 0.0],
        }
    }

    #[test]
    fn table_has_mean_and_std_rows() {
        let rows: Vec<MetricRow> = (0..25)
            .map(|i| {
                row(
                    &format!("s{}", i / 5),
                    &format!("t{}", i % 5),
                    0,
                    "with_tl",
                    0.5 + 0.01 * i as f64,
                )
            })
            .collect();
        let t = build_table(&rows, "with_tl").unwrap();
        assert_eq!(t.rows.len(), 25);
        let text = render_table(&t);
        assert_eq!(text.lines().filter(|l| l.starts_with("Mean")).count(), 1);
        assert_eq!(
            text.lines()
                .filter(|l| l.starts_with("Standard Deviation"))
                .count(),
            1
        );
        assert!((t.mean[2] - 0.62).abs() < 1e-12);
    }

    #[test]
    fn single_run_std_is_zero() {
        let t = build_table(&[row("a", "b", 0, "with_tl", 0.8)], "with_tl").unwrap();
        assert_eq!(t.std, [0.0; 6]);
        assert!(build_table(&[], "with_tl").is_err());
    }

    #[test]
    fn repeats_average_within_pair() {
        let rows = vec![
            row("a", "b", 0, "with_tl", 0.6),
            row("a", "b", 1, "with_tl", 0.8),
        ];
        let t = build_table(&rows, "with_tl").unwrap();
        assert_eq!(t.rows[0].2, 2);
        assert!((t.rows[0].3[2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn comparison_families() {
        let labels: Vec<String> = (0..25).map(|i| i.to_string()).collect();
        let proposed: Vec<f64> = (0..25).map(|i| 0.8 + 0.001 * i as f64).collect();
        let worse: Vec<f64> = proposed
            .iter()
            .enumerate()
            .map(|(i, p)| p - 0.01 - 0.001 * i as f64)
            .collect();
        let mixed: Vec<f64> = proposed
            .iter()
            .enumerate()
            .map(|(i, p)| p + if i % 2 == 0 { 0.01 } else { -0.011 })
            .collect();
        let scores = PairedScores {
            labels,
            methods: vec!["tl".into(), "worse".into(), "mixed".into()],
            scores: vec![proposed, worse, mixed],
        };
        let c = compare(&scores).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].wilcoxon.sum_positive, 325.0);
        assert!(c[0].t_holm.reject && c[0].wilcoxon_holm.reject);
        assert_eq!(c[0].t_holm.rank, 1);
        assert!(!c[1].wilcoxon_holm.reject);
        let text = render_comparisons("tl", &c);
        assert!(text.contains("worse") && text.contains("critical value at 0.05: 89"));
    }
}
