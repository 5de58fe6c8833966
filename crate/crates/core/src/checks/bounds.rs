use std::f64::consts::LN_2;

use super::{CheckPoint, CheckReport};
use crate::error::{Error, Result};
use crate::mixture::{ClassConditionalModel, NoiseLevel};
use crate::scalar::norm;

/// Constant used in place of the unspecified universal constant of the score bounds.
pub const SCORE_BOUND_C: f64 = 10.0;

/// Seed for the Monte Carlo radius search when `d > 1`.
const RADIUS_SEED: u64 = 0x5eed;

const GRADIENT_REL_TOL: f64 = 1e-5;

/// Density and score bounds at every `(y, t)` of `grid`, with the model's
/// half-mass radius `R`. Four reports per point: classifier bound, marginal
/// score bound, conditional score bound, gradient identity.
pub fn bound_suite(model: &ClassConditionalModel<f64>, c: usize, grid: &[(Vec<f64>, f64)]) -> Result<Vec<CheckReport>> {
    bound_suite_with_radius(model, c, grid, model.bound_radius(RADIUS_SEED))
}

pub fn bound_suite_with_radius(
    model: &ClassConditionalModel<f64>,
    c: usize,
    grid: &[(Vec<f64>, f64)],
    radius: f64,
) -> Result<Vec<CheckReport>> {
    model.check_class(c)?;
    if grid.is_empty() {
        return Err(Error::EmptyInput("bound grid"));
    }
    let d = model.dim() as f64;
    let log_prior = model.priors()[c].ln();
    let mut out = Vec::with_capacity(4 * grid.len());
    for (y, t) in grid {
        let t = *t;
        if !(0.0..1.0).contains(&t) {
            return Err(Error::InvalidTimes(format!("bound grid needs t in [0, 1), got {t}")));
        }
        let level = NoiseLevel::for_reverse_time(t)?;
        let point = CheckPoint::default().class(c).t(t).x(y);
        let reach = norm(y) + t.sqrt() * radius;

        // p^{-1} <= 2 / pi_c * exp(reach^2 / (2 (1 - t))), compared in log space.
        let lhs = -model.log_classifier_prob(c, level, y)?;
        let rhs = LN_2 - log_prior + reach * reach / (2.0 * (1.0 - t));
        out.push(CheckReport::at_most(
            "classifier_upper_bound",
            point.clone(),
            lhs,
            rhs,
            (lhs - rhs).exp(),
            "log p^-1 <= log(2/prior) + (|y| + sqrt(t) R)^2 / (2 (1 - t))",
        ));

        let score_rhs = SCORE_BOUND_C * (reach / (1.0 - t) + d / (1.0 - t).sqrt());
        let rule = format!("|score| <= {SCORE_BOUND_C} ((|y| + sqrt(t) R) / (1 - t) + d / sqrt(1 - t))");
        let marginal = norm(&model.marginal_score(level, y)?);
        out.push(CheckReport::at_most(
            "marginal_score_bound",
            point.clone(),
            marginal,
            score_rhs,
            marginal / score_rhs,
            &rule,
        ));
        let conditional = norm(&model.conditional_score(c, level, y)?);
        out.push(CheckReport::at_most(
            "conditional_score_bound",
            point,
            conditional,
            score_rhs,
            conditional / score_rhs,
            &rule,
        ));
        out.push(gradient_identity(model, c, y, t)?);
    }
    Ok(out)
}

/// Central finite differences of `p(c|y)^{-1}` against
/// `p(c|y)^{-1} (s(y) - s(y|c))` at level `alpha_bar = t`.
///
/// The error is normalized by `p^{-1} max(|s(y|c) - s(y)|, 1)` so that points
/// with a vanishing gradient are judged on an absolute scale.
pub fn gradient_identity(model: &ClassConditionalModel<f64>, c: usize, y: &[f64], t: f64) -> Result<CheckReport> {
    let level = NoiseLevel::for_reverse_time(t)?;
    let leveled = model.at_level(level);
    let phi = model.inverse_classifier_prob(c, level, y)?;
    let direction = model.guidance_direction(c, level, y)?;
    let gap = norm(&direction);
    let analytic: Vec<f64> = direction.iter().map(|g| -phi * g).collect();
    let h = 1e-5 * (1.0f64).min(1.0 / gap).min((1.0 - t).sqrt());
    let mut probe = y.to_vec();
    let fd: Vec<f64> = (0..y.len())
        .map(|i| {
            probe[i] = y[i] + h;
            let up = leveled.inverse_classifier_prob(c, &probe);
            probe[i] = y[i] - h;
            let down = leveled.inverse_classifier_prob(c, &probe);
            probe[i] = y[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    let diff: Vec<f64> = fd.iter().zip(&analytic).map(|(a, b)| a - b).collect();
    let abs_error = norm(&diff);
    let rel_error = abs_error / (phi * gap.max(1.0));
    Ok(CheckReport {
        check_name: "gradient_identity".into(),
        point: CheckPoint::default().class(c).t(t).x(y),
        estimate: norm(&fd),
        reference: norm(&analytic),
        abs_error,
        rel_error,
        standard_error: 0.0,
        pass: rel_error <= GRADIENT_REL_TOL,
        asserted: true,
        tolerance_rule: format!("|fd - analytic| <= {GRADIENT_REL_TOL:e} * p^-1 * max(|grad log p|, 1)"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset() -> ClassConditionalModel<f64> {
        ClassConditionalModel::paper_gmm()
    }

    #[test]
    fn all_four_checks_pass_at_origin() {
        let reports = bound_suite(&preset(), 1, &[(vec![0.0], 0.5)]).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports.iter().all(|r| r.pass), "{reports:?}");
    }

    #[test]
    fn small_t_limit_of_classifier_bound() {
        let m = preset();
        let r = bound_suite(&m, 1, &[(vec![1.5], 0.0)]).unwrap();
        let expected = LN_2 - 0.5f64.ln() + 1.5 * 1.5 / 2.0;
        assert!((r[0].reference - expected).abs() < 1e-15);
        assert!(r[0].pass);
    }

    #[test]
    fn far_tail_is_compared_in_log_space() {
        let reports = bound_suite(&preset(), 0, &[(vec![8.0], 0.99), (vec![-8.0], 0.99)]).unwrap();
        assert!(reports.iter().all(|r| r.pass), "{reports:?}");
        // Estimates are log reciprocals; p^-1 exceeds e^5 here.
        assert!(reports[0].estimate > 5.0, "{:?}", reports[0]);
    }

    #[test]
    fn empty_grid_and_bad_times_error() {
        assert!(bound_suite(&preset(), 1, &[]).is_err());
        assert!(bound_suite(&preset(), 1, &[(vec![0.0], 1.0)]).is_err());
    }
}
