use serde::Serialize;

use super::{CheckPoint, CheckReport};
use crate::error::{Error, Result};
use crate::mixture::ClassConditionalModel;
use crate::sampler::{GuidanceSpec, ReversePlan, TrialRunner};
use crate::schedule::{Schedule, DEFAULT_C0, DEFAULT_C1};
use crate::stats::{ks_distance_se, ks_statistic, mean_and_se};

/// Reference resolution relative to the finest studied schedule.
const REFERENCE_FACTOR: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscretizationRow {
    pub steps: usize,
    pub w: f64,
    pub trials: usize,
    pub mean_neg_inv_prob: f64,
    pub standard_error: f64,
    pub ks_distance: f64,
    pub ks_standard_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizationStudy {
    pub class: usize,
    pub w: f64,
    pub reference_steps: usize,
    pub rows: Vec<DiscretizationRow>,
    /// One monotonicity check per adjacent pair of rows.
    pub reports: Vec<CheckReport>,
}

fn first_coordinates(points: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    points.map(|y| y[0]).collect()
}

/// Coupled classifier-free trials on learning-rate schedules with the given
/// step counts. Each row's guided endpoints are compared by KS distance with
/// a run at `4 * max(n_list)` steps sharing the master seed; distances must
/// not increase with `N` beyond two pooled standard errors.
pub fn discretization_study(
    model: &ClassConditionalModel<f64>,
    c: usize,
    w: f64,
    n_list: &[usize],
    trials: usize,
    seed: u64,
) -> Result<DiscretizationStudy> {
    if n_list.is_empty() {
        return Err(Error::EmptyInput("step counts"));
    }
    if n_list.windows(2).any(|p| p[0] >= p[1]) || n_list[0] < 2 {
        return Err(Error::InvalidSchedule(format!(
            "step counts must increase strictly from at least 2, got {n_list:?}"
        )));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 trials, got {trials}")));
    }
    if model.dim() != 1 {
        return Err(Error::Unsupported("KS distances need dimension 1".into()));
    }
    let guidance = GuidanceSpec::classifier_free(w, c)?;
    model.check_class(c)?;
    let reference_steps = REFERENCE_FACTOR * n_list[n_list.len() - 1];
    let reference_schedule = Schedule::learning_rate(reference_steps, DEFAULT_C0, DEFAULT_C1)?;
    let reference_runner = TrialRunner::from_plan(ReversePlan::new(model, &reference_schedule), guidance, true)?;
    let reference = first_coordinates((0..trials as u64).map(|i| reference_runner.guided_endpoint(seed, i)));

    let ks_se = ks_distance_se(trials, trials);
    let mut rows = Vec::with_capacity(n_list.len());
    for &steps in n_list {
        let schedule = Schedule::learning_rate(steps, DEFAULT_C0, DEFAULT_C1)?;
        let records = TrialRunner::new(model, &schedule, guidance, true)?.run_many(seed, trials as u64);
        let neg_inv: Vec<f64> = records.iter().map(|r| -r.inv_p_guided()).collect();
        let (mean, se) = mean_and_se(&neg_inv)?;
        let guided = first_coordinates(records.into_iter().map(|r| r.y_guided));
        rows.push(DiscretizationRow {
            steps,
            w,
            trials,
            mean_neg_inv_prob: mean,
            standard_error: se,
            ks_distance: ks_statistic(&guided, &reference)?,
            ks_standard_error: ks_se,
        });
    }
    let reports = rows
        .windows(2)
        .map(|pair| {
            let (coarse, fine) = (&pair[0], &pair[1]);
            let pooled = coarse.ks_standard_error.hypot(fine.ks_standard_error);
            let mut r = CheckReport::at_most(
                "discretization_monotone",
                CheckPoint::default()
                    .class(c)
                    .w(w)
                    .steps(fine.steps)
                    .samples(trials as u64),
                fine.ks_distance,
                coarse.ks_distance + 2.0 * pooled,
                fine.ks_distance / coarse.ks_distance,
                "KS(N_fine) <= KS(N_coarse) + 2 pooled se",
            );
            r.standard_error = pooled;
            r
        })
        .collect();
    Ok(DiscretizationStudy {
        class: c,
        w,
        reference_steps,
        rows,
        reports,
    })
}

/// Recorded comparison of two studies over the same step counts: the guided
/// study should not sit below the baseline by more than two pooled standard
/// errors at any `N`.
pub fn compare_convergence(baseline: &DiscretizationStudy, guided: &DiscretizationStudy) -> Vec<CheckReport> {
    baseline
        .rows
        .iter()
        .zip(&guided.rows)
        .filter(|(b, g)| b.steps == g.steps)
        .map(|(b, g)| {
            let pooled = b.ks_standard_error.hypot(g.ks_standard_error);
            let mut r = CheckReport::at_most(
                "convergence_comparison",
                CheckPoint::default().class(guided.class).w(guided.w).steps(g.steps),
                b.ks_distance - 2.0 * pooled,
                g.ks_distance,
                g.ks_distance / b.ks_distance,
                "KS(guided) >= KS(baseline) - 2 pooled se",
            );
            r.standard_error = pooled;
            r.recorded()
        })
        .collect()
}
