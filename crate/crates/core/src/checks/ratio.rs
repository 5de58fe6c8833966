use super::{CheckPoint, CheckReport};
use crate::error::{Error, Result};
use crate::rng::{domain, RngStream};
use crate::sampler::TrialRecord;
use crate::stats::{KahanSum, Moments};

fn validate(trials: &[TrialRecord], tv_budget: f64) -> Result<()> {
    if trials.is_empty() {
        return Err(Error::EmptyInput("trials"));
    }
    if !(0.0..1.0).contains(&tv_budget) {
        return Err(Error::InvalidArgument(format!("tv_budget must lie in [0, 1), got {tv_budget}")));
    }
    let w = trials[0].w;
    if trials.iter().any(|r| r.w.to_bits() != w.to_bits()) {
        return Err(Error::InvalidArgument("trials must share one guidance scale".into()));
    }
    Ok(())
}

/// Correction term over trials given as `(p_guided^{-1}, p_baseline^{-1})`.
fn ratio_of(pairs: &[(f64, f64)], tv_budget: f64) -> Result<f64> {
    let n = pairs.len();
    let nf = n as f64;
    let guided = pairs.iter().map(|p| p.0).collect::<KahanSum>().value() / nf;
    let baseline = pairs.iter().map(|p| p.1).collect::<KahanSum>().value() / nf;
    let denominator = baseline - guided;
    if !(denominator > 0.0) {
        return Err(Error::NoImprovement {
            baseline_mean: baseline,
            guided_mean: guided,
        });
    }
    // tau is the largest threshold with P(p^{-1} > tau) >= tv_budget: the
    // tail holds the k = ceil(tv_budget n) largest values and any ties with
    // the k-th.
    let k = (tv_budget * nf).ceil() as usize;
    if k == 0 {
        return Ok(0.0);
    }
    let mut sorted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cutoff = sorted[k.min(n) - 1];
    let tail = sorted
        .iter()
        .take_while(|&&v| v >= cutoff)
        .map(|v| v - 1.0)
        .collect::<KahanSum>()
        .value();
    Ok(tail / nf / denominator)
}

fn pairs_of(trials: &[TrialRecord]) -> Vec<(f64, f64)> {
    trials.iter().map(|r| (r.inv_p_guided(), r.inv_p_baseline())).collect()
}

/// `E[(p^{-1} - 1) 1(p^{-1} > tau)] / (E[p_0^{-1}] - E[p_w^{-1}])` with the
/// expectations replaced by trial averages; baselines are the trials' own
/// unguided endpoints.
pub fn relative_error_ratio(trials: &[TrialRecord], tv_budget: f64) -> Result<f64> {
    validate(trials, tv_budget)?;
    ratio_of(&pairs_of(trials), tv_budget)
}

/// The ratio and a bootstrap standard error from `resamples` resamples of
/// the trials. Resamples without improvement are skipped.
pub fn relative_error_ratio_se(trials: &[TrialRecord], tv_budget: f64, resamples: usize, seed: u64) -> Result<(f64, f64)> {
    validate(trials, tv_budget)?;
    let pairs = pairs_of(trials);
    let point = ratio_of(&pairs, tv_budget)?;
    let n = pairs.len() as u64;
    let mut rng = RngStream::new(seed, &[domain::BOOTSTRAP, trials[0].w.to_bits(), tv_budget.to_bits()]);
    let mut moments = Moments::default();
    let mut resample = Vec::with_capacity(pairs.len());
    for _ in 0..resamples {
        resample.clear();
        resample.extend((0..n).map(|_| pairs[((rng.next_u64() as u128 * n as u128) >> 64) as usize]));
        if let Ok(r) = ratio_of(&resample, tv_budget) {
            moments.push(r);
        }
    }
    let se = if moments.count() * 2 >= resamples as u64 && moments.count() >= 2 {
        moments.variance().sqrt()
    } else {
        f64::INFINITY
    };
    Ok((point, se))
}

/// Non-increasing trend over increasing `w`, each step allowed two pooled
/// standard errors. `series` holds `(w, ratio, se)` sorted by `w`.
pub fn ratio_trend_checks(series: &[(f64, f64, f64)], tv_budget: f64) -> Vec<CheckReport> {
    series
        .windows(2)
        .map(|pair| {
            let ((_, prev, prev_se), (w, next, next_se)) = (pair[0], pair[1]);
            let pooled = prev_se.hypot(next_se);
            let mut r = CheckReport::at_most(
                "relative_error_trend",
                CheckPoint::default().w(w).tau(tv_budget),
                next,
                prev + 2.0 * pooled,
                next / prev,
                "ratio(w_next) <= ratio(w_prev) + 2 pooled se",
            );
            r.standard_error = pooled;
            r
        })
        .collect()
}
