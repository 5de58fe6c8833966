//! Experiment orchestration: run guided-versus-baseline trials over a grid of
//! scales, aggregate them, and write machine-readable results.

mod config;
pub mod output;
pub mod studies;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, ScheduleConfig, DESK_STEPS, DESK_TRIALS, PAPER_STEPS, PAPER_TRIALS};
pub use output::emit_plot_data;

use crate::error::{Error, Result};
use crate::model_io::load_model;
use crate::sampler::{GuidanceSpec, ReversePlan, TrialRecord, TrialRunner};
use crate::stats::{wilson_interval, KahanSum, Z_95};

/// Aggregate of the trials at one guidance scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub w: f64,
    pub n_trials: u64,
    pub n_improved: u64,
    pub p_improve: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean of `-p_guided^{-1}`.
    pub mean_neg_inv_prob: f64,
    pub stderr: f64,
    pub mean_neg_inv_prob_baseline: f64,
    pub stderr_baseline: f64,
}

/// Mean and standard error of `-exp(-log_p)` with compensated sums in trial order.
fn neg_inverse_stats(log_ps: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = -log_ps.clone().map(|l| (-l).exp()).collect::<KahanSum>().value() / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss = log_ps
        .map(|l| {
            let d = -(-l).exp() - mean;
            d * d
        })
        .collect::<KahanSum>()
        .value();
    (mean, (ss / (nf - 1.0) / nf).sqrt())
}

/// Proportion improved with its 95% Wilson interval, and the mean reciprocal
/// probabilities of the guided and baseline endpoints.
pub fn summarize(trials: &[TrialRecord]) -> Result<SummaryRow> {
    let first = trials.first().ok_or(Error::EmptyInput("trials"))?;
    if trials.iter().any(|r| r.w.to_bits() != first.w.to_bits()) {
        return Err(Error::InvalidArgument("trials must share one guidance scale".into()));
    }
    let n = trials.len();
    let improved = trials.iter().filter(|r| r.improved).count() as u64;
    let (ci_lo, ci_hi) = wilson_interval(improved, n as u64, Z_95)?;
    let (mean, stderr) = neg_inverse_stats(trials.iter().map(|r| r.log_p_guided), n);
    let (mean_base, stderr_base) = neg_inverse_stats(trials.iter().map(|r| r.log_p_baseline), n);
    Ok(SummaryRow {
        w: first.w,
        n_trials: n as u64,
        n_improved: improved,
        p_improve: improved as f64 / n as f64,
        ci_lo,
        ci_hi,
        mean_neg_inv_prob: mean,
        stderr,
        mean_neg_inv_prob_baseline: mean_base,
        stderr_baseline: stderr_base,
    })
}

/// Summary rows plus every trial, in grid then trial-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<SummaryRow>,
    pub trials: Vec<TrialRecord>,
}

/// Runs the experiment without touching the filesystem (beyond loading a
/// model file).
pub fn simulate_gmm_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let model = load_model(&config.model)?;
    let schedule = config.schedule.build()?;
    let plan = ReversePlan::new(&model, &schedule);
    model.check_class(config.class)?;
    let mut rows = Vec::with_capacity(config.w_grid.len());
    let mut all = Vec::with_capacity(config.w_grid.len() * config.trials);
    for &w in &config.w_grid {
        let spec = GuidanceSpec::new(config.mode, w, config.class)?;
        let runner = TrialRunner::from_plan(plan.clone(), spec, !config.uncoupled)?;
        let trials: Vec<TrialRecord> = (0..config.trials as u64)
            .into_par_iter()
            .map(|i| runner.run(config.master_seed, i))
            .collect();
        rows.push(summarize(&trials)?);
        all.extend(trials);
    }
    Ok(ExperimentResult { rows, trials: all })
}

/// Runs the experiment and, when `output_dir` is set, writes `summary.csv`
/// and `trials.csv` there.
pub fn run_gmm_experiment(config: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    if let Some(dir) = &config.output_dir {
        output::ensure_dir(dir)?;
    }
    let result = simulate_gmm_experiment(config)?;
    if let Some(dir) = &config.output_dir {
        output::write_summary_csv(&dir.join("summary.csv"), &result.rows)?;
        output::write_trials_csv(&dir.join("trials.csv"), &result.trials)?;
    }
    Ok(result.rows)
}
