//! CSV and JSON writers. Floats are written in shortest round-trip form so a
//! parse of any emitted file reproduces the values exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::SummaryRow;
use crate::checks::{CheckReport, CheckSummary, DiscretizationRow};
use crate::error::{Error, Result};
use crate::sampler::TrialRecord;
use crate::schedule::Schedule;

pub const IMPROVEMENT_FILE: &str = "improvement.csv";
pub const NEG_INV_PROB_FILE: &str = "neg_inv_prob.csv";

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(";")
}

fn output_error(path: &Path, source: std::io::Error) -> Error {
    Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
    if !dir.is_dir() {
        return Err(output_error(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        ));
    }
    Ok(())
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| output_error(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| output_error(path, e))?;
    Ok(())
}

fn read_rows(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::ParseFile {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: format!("expected header {expected:?}, found {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

fn parse_field<T: std::str::FromStr>(path: &Path, record: &csv::StringRecord, i: usize) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line() as usize);
    let raw = record.get(i).ok_or_else(|| Error::ParseFile {
        path: path.to_path_buf(),
        line,
        column: i + 1,
        message: "missing field".into(),
    })?;
    raw.parse().map_err(|_| Error::ParseFile {
        path: path.to_path_buf(),
        line,
        column: i + 1,
        message: format!("cannot parse {raw:?}"),
    })
}

const SCHEDULE_HEADER: [&str; 4] = ["n", "beta_n", "alpha_bar_n", "t_n"];

pub fn write_schedule_csv(path: &Path, schedule: &Schedule<f64>) -> Result<()> {
    let rows = schedule
        .betas()
        .iter()
        .zip(schedule.alpha_bars())
        .enumerate()
        .map(|(i, (&b, &a))| vec![(i + 1).to_string(), fmt(b), fmt(a), fmt(1.0 - a)]);
    write_rows(path, &SCHEDULE_HEADER, rows)
}

const SUMMARY_HEADER: [&str; 10] = [
    "w",
    "n_trials",
    "n_improved",
    "p_improve",
    "ci_lo",
    "ci_hi",
    "mean_neg_inv_prob",
    "stderr",
    "mean_neg_inv_prob_baseline",
    "stderr_baseline",
];

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            fmt(r.w),
            r.n_trials.to_string(),
            r.n_improved.to_string(),
            fmt(r.p_improve),
            fmt(r.ci_lo),
            fmt(r.ci_hi),
            fmt(r.mean_neg_inv_prob),
            fmt(r.stderr),
            fmt(r.mean_neg_inv_prob_baseline),
            fmt(r.stderr_baseline),
        ]
    });
    write_rows(path, &SUMMARY_HEADER, rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    read_rows(path, &SUMMARY_HEADER)?
        .iter()
        .map(|rec| {
            let f = |i| parse_field::<f64>(path, rec, i);
            let u = |i| parse_field::<u64>(path, rec, i);
            Ok(SummaryRow {
                w: f(0)?,
                n_trials: u(1)?,
                n_improved: u(2)?,
                p_improve: f(3)?,
                ci_lo: f(4)?,
                ci_hi: f(5)?,
                mean_neg_inv_prob: f(6)?,
                stderr: f(7)?,
                mean_neg_inv_prob_baseline: f(8)?,
                stderr_baseline: f(9)?,
            })
        })
        .collect()
}

const TRIALS_HEADER: [&str; 7] = ["trial_index", "w", "y_guided", "y_baseline", "p_guided", "p_baseline", "improved"];

pub fn write_trials_csv(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let rows = trials.iter().map(|r| {
        vec![
            r.trial_index.to_string(),
            fmt(r.w),
            join(&r.y_guided),
            join(&r.y_baseline),
            fmt(r.p_guided),
            fmt(r.p_baseline),
            r.improved.to_string(),
        ]
    });
    write_rows(path, &TRIALS_HEADER, rows)
}

const IMPROVEMENT_HEADER: [&str; 4] = ["w", "p_improve", "ci_lo", "ci_hi"];
const NEG_INV_PROB_HEADER: [&str; 3] = ["w", "mean_neg_inv_prob", "stderr"];

/// Writes `improvement.csv` and `neg_inv_prob.csv` into `dir`.
pub fn emit_plot_data(summary: &[SummaryRow], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_rows(
        &dir.join(IMPROVEMENT_FILE),
        &IMPROVEMENT_HEADER,
        summary
            .iter()
            .map(|r| vec![fmt(r.w), fmt(r.p_improve), fmt(r.ci_lo), fmt(r.ci_hi)]),
    )?;
    write_rows(
        &dir.join(NEG_INV_PROB_FILE),
        &NEG_INV_PROB_HEADER,
        summary
            .iter()
            .map(|r| vec![fmt(r.w), fmt(r.mean_neg_inv_prob), fmt(r.stderr)]),
    )
}

/// Rows of `improvement.csv` as `(w, p_improve, ci_lo, ci_hi)`.
pub fn read_improvement_csv(path: &Path) -> Result<Vec<[f64; 4]>> {
    read_rows(path, &IMPROVEMENT_HEADER)?
        .iter()
        .map(|rec| {
            Ok([
                parse_field(path, rec, 0)?,
                parse_field(path, rec, 1)?,
                parse_field(path, rec, 2)?,
                parse_field(path, rec, 3)?,
            ])
        })
        .collect()
}

/// Rows of `neg_inv_prob.csv` as `(w, mean_neg_inv_prob, stderr)`.
pub fn read_neg_inv_prob_csv(path: &Path) -> Result<Vec<[f64; 3]>> {
    read_rows(path, &NEG_INV_PROB_HEADER)?
        .iter()
        .map(|rec| {
            Ok([
                parse_field(path, rec, 0)?,
                parse_field(path, rec, 1)?,
                parse_field(path, rec, 2)?,
            ])
        })
        .collect()
}

const CHECKS_HEADER: [&str; 17] = [
    "check_name",
    "class",
    "t",
    "tau",
    "x",
    "w",
    "dt",
    "steps",
    "samples",
    "estimate",
    "reference",
    "abs_error",
    "rel_error",
    "standard_error",
    "pass",
    "asserted",
    "tolerance_rule",
];

pub fn write_checks_csv(path: &Path, reports: &[CheckReport]) -> Result<()> {
    let rows = reports.iter().map(|r| {
        let p = &r.point;
        vec![
            r.check_name.clone(),
            fmt_opt(p.class),
            fmt_opt_f64(p.t),
            fmt_opt_f64(p.tau),
            p.x.as_deref().map(join).unwrap_or_default(),
            fmt_opt_f64(p.w),
            fmt_opt_f64(p.dt),
            fmt_opt(p.steps),
            fmt_opt(p.samples),
            fmt(r.estimate),
            fmt(r.reference),
            fmt(r.abs_error),
            fmt(r.rel_error),
            fmt(r.standard_error),
            r.pass.to_string(),
            r.asserted.to_string(),
            r.tolerance_rule.clone(),
        ]
    });
    write_rows(path, &CHECKS_HEADER, rows)
}

const DISCRETIZATION_HEADER: [&str; 7] = [
    "steps",
    "w",
    "trials",
    "mean_neg_inv_prob",
    "standard_error",
    "ks_distance",
    "ks_standard_error",
];

pub fn write_discretization_csv(path: &Path, rows: &[DiscretizationRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            r.steps.to_string(),
            fmt(r.w),
            r.trials.to_string(),
            fmt(r.mean_neg_inv_prob),
            fmt(r.standard_error),
            fmt(r.ks_distance),
            fmt(r.ks_standard_error),
        ]
    });
    write_rows(path, &DISCRETIZATION_HEADER, rows)
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| output_error(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| output_error(path, e))?;
    out.flush().map_err(|e| output_error(path, e))?;
    Ok(())
}

/// `checks.csv` and `summary.json` for a batch of reports.
pub fn write_check_outputs(dir: &Path, reports: &[CheckReport]) -> Result<CheckSummary> {
    ensure_dir(dir)?;
    write_checks_csv(&dir.join("checks.csv"), reports)?;
    let summary = CheckSummary::of(reports);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
