use super::{bits, chunked_moments, CheckPoint, CheckReport, DELTA, TERMINAL_TIME};
use crate::error::{Error, Result};
use crate::mixture::{ClassConditionalModel, NoiseLevel};
use crate::rng::{domain, NoiseSource};
use crate::sampler::{PathEnsemble, TimeGrid};
use crate::stats::mean_and_se;

const MAX_DT: f64 = 1e-3;

/// One-step decrement of `phi_t(y) = p(c | X_{1-t} = y)^{-1}` under one
/// Euler-Maruyama step of the guided reverse SDE, against
/// `(w/t) phi_t(y) |s(y|c) - s(y)|^2 dt`.
///
/// Each replicate is an antithetic pair `(Z, -Z)`. The same pairs are also
/// stepped with `dt/2`; the change of the residual between the two sizes
/// bounds the `O(dt^2)` bias by Richardson extrapolation. The check passes
/// when the residual is within `max(3 se, bias)` and, for `w > 0`, the
/// estimate is not significantly negative.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_decrement(
    model: &ClassConditionalModel<f64>,
    c: usize,
    w: f64,
    t: f64,
    y: &[f64],
    dt: f64,
    n_replicates: usize,
    seed: u64,
) -> Result<CheckReport> {
    model.check_class(c)?;
    if y.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: y.len(),
        });
    }
    if !(DELTA..1.0).contains(&t) {
        return Err(Error::InvalidTimes(format!("t must lie in [{DELTA}, 1), got {t}")));
    }
    if !(dt > 0.0 && dt <= MAX_DT && t + dt <= 1.0) {
        return Err(Error::InvalidTimes(format!(
            "dt must lie in (0, {MAX_DT}] with t + dt <= 1, got dt = {dt}"
        )));
    }
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::InvalidGuidance(format!("scale must be finite and >= 0, got {w}")));
    }
    if n_replicates < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replicates, got {n_replicates}")));
    }
    let d = y.len();
    let here = model.at_level(NoiseLevel::for_reverse_time(t)?);
    let full = model.at_level(NoiseLevel::for_reverse_time(t + dt)?);
    let half = model.at_level(NoiseLevel::for_reverse_time(t + 0.5 * dt)?);

    let phi = here.inverse_classifier_prob(c, y);
    let mut cond = vec![0.0; d];
    let mut marg = vec![0.0; d];
    here.conditional_score_into(c, y, &mut cond);
    here.marginal_score_into(y, &mut marg);
    let gap2: f64 = cond.iter().zip(&marg).map(|(a, b)| (a - b) * (a - b)).sum();
    let drift: Vec<f64> = (0..d)
        .map(|i| 0.5 * y[i] + (1.0 + w) * cond[i] - w * marg[i])
        .collect();
    let reference_for = |h: f64| w / t * phi * gap2 * h;

    let mut key = vec![domain::DECREMENT, c as u64, w.to_bits(), t.to_bits(), dt.to_bits()];
    key.extend(bits(y));
    let [full_m, half_m, diff_m] = chunked_moments(n_replicates, seed, &key, |rng| {
        let mut z = [0.0; 8];
        let mut plus = [0.0; 8];
        let mut minus = [0.0; 8];
        assert!(d <= z.len(), "decrement check supports dimension <= 8");
        z[..d].iter_mut().for_each(|v| *v = rng.gaussian());
        let mut pair = |h: f64, level: &crate::mixture::LeveledModel<f64>| {
            let spread = (h / t).sqrt();
            for i in 0..d {
                let base = y[i] + drift[i] * h / t;
                plus[i] = base + spread * z[i];
                minus[i] = base - spread * z[i];
            }
            0.5 * (level.inverse_classifier_prob(c, &plus[..d]) + level.inverse_classifier_prob(c, &minus[..d]))
        };
        let v_full = pair(dt, &full);
        let v_half = pair(0.5 * dt, &half);
        [v_full, v_half, v_full - v_half]
    });

    let estimate = phi - full_m.mean();
    let reference = reference_for(dt);
    let residual_full = estimate - reference;
    let residual_half = (phi - half_m.mean()) - reference_for(0.5 * dt);
    let se = full_m.standard_error();
    let bias = 4.0 / 3.0 * ((residual_full - residual_half).abs() + 3.0 * diff_m.standard_error());
    let magnitude_ok = residual_full.abs() <= (3.0 * se).max(bias);
    let sign_ok = w == 0.0 || estimate >= -3.0 * se;

    let abs_error = residual_full.abs();
    let point = CheckPoint::default()
        .class(c)
        .t(t)
        .x(y)
        .w(w)
        .dt(dt)
        .samples(n_replicates as u64);
    Ok(CheckReport {
        check_name: "theorem1_decrement".into(),
        point,
        estimate,
        reference,
        abs_error,
        rel_error: if reference == 0.0 { abs_error } else { abs_error / reference.abs() },
        standard_error: se,
        pass: magnitude_ok && sign_ok,
        asserted: true,
        tolerance_rule: format!(
            "|estimate - reference| <= max(3*se, richardson bias {bias:e}); estimate >= -3*se when w > 0"
        ),
    })
}

/// Path average of `sum_k (w/t_k) phi_{t_k}(Y) |s(Y|c) - s(Y)|^2 dt_k` along
/// guided Euler-Maruyama paths from `t = DELTA` to `TERMINAL_TIME`, started
/// from the exact class law. Returns `(estimate, standard_error)`.
pub fn improvement_integral(
    model: &ClassConditionalModel<f64>,
    c: usize,
    w: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    model.check_class(c)?;
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::InvalidGuidance(format!("scale must be finite and >= 0, got {w}")));
    }
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {n_paths}")));
    }
    if w == 0.0 {
        return Ok((0.0, 0.0));
    }
    let grid = TimeGrid::uniform(DELTA, TERMINAL_TIME, dt)?;
    let start = model.class_mixture(c)?.noised(NoiseLevel::for_reverse_time(DELTA)?);
    let key = [domain::PATHS, c as u64, w.to_bits(), dt.to_bits()];
    let d = model.dim();
    let mut paths = PathEnsemble::new(d, n_paths, seed, &key, |rng, y| start.sample_into(rng, y));
    let mut acc = vec![0.0; n_paths];
    for (t, h) in grid.steps() {
        paths.step_observed(model, c, w, t, h, &mut acc, |level, y| {
            let mut cond = [0.0; 8];
            let mut marg = [0.0; 8];
            let (cond, marg) = (&mut cond[..d], &mut marg[..d]);
            level.conditional_score_into(c, y, cond);
            level.marginal_score_into(y, marg);
            let gap2: f64 = cond.iter().zip(marg.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            w / t * level.inverse_classifier_prob(c, y) * gap2 * h
        })?;
    }
    mean_and_se(&acc)
}
