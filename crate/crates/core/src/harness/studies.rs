//! Check batteries over the standard grids, at the sizes used by the
//! command-line tool and the acceptance suite.

use super::SummaryRow;
use crate::checks::suites::{bound_grid, decrement_cases, decrement_zero_cases, martingale_cases, random_points};
use crate::checks::{
    bound_suite, compare_convergence, discretization_study, gradient_identity, marginal_equivalence,
    martingale_quadrature_check, martingale_residual, ratio_trend_checks, relative_error_ratio_se, theorem1_decrement,
    CheckPoint, CheckReport, DiscretizationStudy,
};
use crate::error::Result;
use crate::mixture::ClassConditionalModel;
use crate::sampler::{GuidanceSpec, TrialRunner};
use crate::schedule::{Schedule, DEFAULT_C0, DEFAULT_C1};

pub const MARTINGALE_SAMPLES: usize = 1_000_000;
pub const DECREMENT_DT: f64 = 1e-3;
pub const DECREMENT_REPLICATES: usize = 1_000_000;
pub const GRADIENT_POINTS: usize = 100;
pub const EQUIVALENCE_DT: f64 = 1e-4;
pub const EQUIVALENCE_PATHS: usize = 100_000;
pub const CONVERGENCE_TRIALS: usize = 10_000;
pub const CONVERGENCE_SCALES: [f64; 2] = [0.0, 1.0];
pub const RATIO_TRIALS: usize = 10_000;
pub const RATIO_STEPS: usize = 500;
pub const RATIO_TV_BUDGET: f64 = 0.1;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Monte Carlo residual and quadrature agreement at every standard case.
pub fn martingale_battery(model: &ClassConditionalModel<f64>, n_samples: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for case in martingale_cases() {
        out.push(martingale_residual(model, case.class, case.t, case.tau, &[case.x], n_samples, seed)?);
        out.push(martingale_quadrature_check(model, case.class, case.t, case.tau, case.x)?);
    }
    Ok(out)
}

/// One-step decrement at the guided cases and the exact-zero cases.
pub fn decrement_battery(
    model: &ClassConditionalModel<f64>,
    dt: f64,
    n_replicates: usize,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    decrement_cases()
        .into_iter()
        .chain(decrement_zero_cases())
        .map(|case| theorem1_decrement(model, case.class, case.w, case.t, &[case.y], dt, n_replicates, seed))
        .collect()
}

/// Bound checks on the standard grid plus the gradient identity at random points.
pub fn bounds_battery(model: &ClassConditionalModel<f64>, c: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = bound_suite(model, c, &bound_grid())?;
    for (y, t) in random_points(GRADIENT_POINTS, seed) {
        out.push(gradient_identity(model, c, &y, t)?);
    }
    Ok(out)
}

pub fn equivalence_battery(
    model: &ClassConditionalModel<f64>,
    c: usize,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    marginal_equivalence(model, c, &crate::checks::suites::EQUIVALENCE_CHECKPOINTS, dt, n_paths, seed)
}

/// Discretization studies at each scale, with their monotonicity checks and
/// recorded comparisons of each guided study against the first one.
pub fn convergence_battery(
    model: &ClassConditionalModel<f64>,
    c: usize,
    scales: &[f64],
    n_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<(Vec<DiscretizationStudy>, Vec<CheckReport>)> {
    let studies = scales
        .iter()
        .map(|&w| discretization_study(model, c, w, n_list, trials, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut reports: Vec<CheckReport> = studies.iter().flat_map(|s| s.reports.clone()).collect();
    if let Some((base, rest)) = studies.split_first() {
        for guided in rest {
            reports.extend(compare_convergence(base, guided));
        }
    }
    Ok((studies, reports))
}

/// `(w, ratio, bootstrap se)` per scale and the trend checks over them.
pub type RatioSeries = Vec<(f64, f64, f64)>;

#[allow(clippy::too_many_arguments)]
pub fn ratio_battery(
    model: &ClassConditionalModel<f64>,
    c: usize,
    scales: &[f64],
    steps: usize,
    trials: usize,
    tv_budget: f64,
    resamples: usize,
    seed: u64,
) -> Result<(RatioSeries, Vec<CheckReport>)> {
    let schedule = Schedule::learning_rate(steps, DEFAULT_C0, DEFAULT_C1)?;
    let mut series = Vec::with_capacity(scales.len());
    for &w in scales {
        let runner = TrialRunner::new(model, &schedule, GuidanceSpec::classifier_free(w, c)?, true)?;
        let records = runner.run_many(seed, trials as u64);
        let (ratio, se) = relative_error_ratio_se(&records, tv_budget, resamples, seed)?;
        series.push((w, ratio, se));
    }
    let reports = ratio_trend_checks(&series, tv_budget);
    Ok((series, reports))
}

/// Qualitative claims about a guided-versus-baseline sweep: improvement is
/// not uniform for `w >= 0.1`, the mean of `-p^{-1}` does not decrease along
/// the grid beyond two pooled standard errors, and at `w = 4` it beats the
/// unguided mean by more than three pooled standard errors.
pub fn sweep_claims(rows: &[SummaryRow]) -> Vec<CheckReport> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.w >= 0.1) {
        let point = CheckPoint::default().w(r.w).samples(r.n_trials);
        out.push(CheckReport::at_most(
            "improvement_not_uniform",
            point,
            r.ci_hi,
            1.0,
            r.ci_hi,
            "Wilson upper bound of p_improve < 1",
        ));
        let last = out.last_mut().expect("just pushed");
        last.pass = r.ci_hi < 1.0 && r.p_improve < 1.0;
    }
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let pooled = a.stderr.hypot(b.stderr);
        let mut r = CheckReport::at_most(
            "neg_inv_prob_monotone",
            CheckPoint::default().w(b.w).samples(b.n_trials),
            a.mean_neg_inv_prob,
            b.mean_neg_inv_prob + 2.0 * pooled,
            (a.mean_neg_inv_prob - b.mean_neg_inv_prob) / pooled,
            "mean(w_prev) <= mean(w_next) + 2 pooled se",
        );
        r.standard_error = pooled;
        out.push(r);
    }
    if let Some(r) = rows.iter().find(|r| r.w == 4.0) {
        let pooled = r.stderr.hypot(r.stderr_baseline);
        let gap = r.mean_neg_inv_prob - r.mean_neg_inv_prob_baseline;
        let mut report = CheckReport::at_most(
            "guided_beats_unguided",
            CheckPoint::default().w(r.w).samples(r.n_trials),
            3.0 * pooled,
            gap,
            gap / pooled,
            "mean(w=4) - mean(w=0) > 3 pooled se",
        );
        report.standard_error = pooled;
        report.pass = gap > 3.0 * pooled;
        out.push(report);
    }
    out
}
