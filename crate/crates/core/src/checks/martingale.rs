use super::{bits, chunked_moments, CheckPoint, CheckReport};
use crate::error::{Error, Result};
use crate::mixture::{ClassConditionalModel, NoiseLevel};
use crate::rng::domain;
use crate::stats::KahanSum;

const QUAD_LO: f64 = -12.0;
const QUAD_HI: f64 = 12.0;
const QUAD_NODES: usize = 200_000;

/// Monte Carlo test of `p(c|x_t)^{-1} = E[p(c|X_tau)^{-1} | X_t = x, c]`.
///
/// `t` and `tau` are forward times. Draws come from the exact posterior of
/// `X_tau` given `X_t = x`; the reference is the left side evaluated exactly.
pub fn martingale_residual(
    model: &ClassConditionalModel<f64>,
    c: usize,
    t: f64,
    tau: f64,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<CheckReport> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n_samples}")));
    }
    let posterior = model.posterior_mixture(c, t, tau, x)?;
    let reference = model.inverse_classifier_prob(c, NoiseLevel::from_time(t)?, x)?;
    if !reference.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "classifier probability underflows at x = {x:?}, t = {t}"
        )));
    }
    let at_tau = model.at_level(NoiseLevel::from_time(tau)?);
    let mut key = vec![domain::POSTERIOR, c as u64, t.to_bits(), tau.to_bits()];
    key.extend(bits(x));
    let [m] = chunked_moments(n_samples, seed, &key, |rng| {
        let mut draw = [0.0; 8];
        let d = x.len();
        let value = if d <= draw.len() {
            posterior.sample_into(rng, &mut draw[..d]);
            at_tau.inverse_classifier_prob(c, &draw[..d])
        } else {
            let v = posterior.sample(rng);
            at_tau.inverse_classifier_prob(c, &v)
        };
        [value]
    });
    let point = CheckPoint::default()
        .class(c)
        .t(t)
        .tau(tau)
        .x(x)
        .samples(n_samples as u64);
    Ok(CheckReport::within(
        "martingale_residual",
        point,
        m.mean(),
        reference,
        m.standard_error(),
        1e-9 * reference,
        3.0,
    ))
}

/// `E[p(c|X_tau)^{-1} | X_t = x, c]` by trapezoid quadrature (d = 1).
///
/// The posterior is integrated directly from the noised prior and the
/// forward transition density, without the conjugate mixture.
pub fn quadrature_reference(model: &ClassConditionalModel<f64>, c: usize, t: f64, tau: f64, x: f64) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("quadrature reference needs dimension 1".into()));
    }
    if !(0.0 <= tau && tau < t && t < 1.0) {
        return Err(Error::InvalidTimes(format!("need 0 <= tau < t < 1, got t = {t}, tau = {tau}")));
    }
    let prior = model.class_mixture(c)?.noised(NoiseLevel::from_time(tau)?);
    let at_tau = model.at_level(NoiseLevel::from_time(tau)?);
    let a = ((1.0 - t) / (1.0 - tau)).sqrt();
    let s2 = (t - tau) / (1.0 - tau);
    let log_post = |u: f64| {
        let r = x - a * u;
        prior.log_density_unchecked(&[u]) - 0.5 * r * r / s2
    };
    let h = (QUAD_HI - QUAD_LO) / (QUAD_NODES - 1) as f64;
    let node = |i: usize| if i == QUAD_NODES - 1 { QUAD_HI } else { QUAD_LO + h * i as f64 };
    let max = (0..QUAD_NODES).map(|i| log_post(node(i))).fold(f64::NEG_INFINITY, f64::max);
    let mut mass = KahanSum::new();
    let mut moment = KahanSum::new();
    for i in 0..QUAD_NODES {
        let u = node(i);
        let weight = if i == 0 || i == QUAD_NODES - 1 { 0.5 } else { 1.0 };
        let density = weight * (log_post(u) - max).exp();
        mass.add(density);
        moment.add(density * at_tau.inverse_classifier_prob(c, &[u]));
    }
    Ok(moment.value() / mass.value())
}

/// Quadrature reference against the exact reciprocal at `t` (relative 1e-6).
pub fn martingale_quadrature_check(
    model: &ClassConditionalModel<f64>,
    c: usize,
    t: f64,
    tau: f64,
    x: f64,
) -> Result<CheckReport> {
    let estimate = quadrature_reference(model, c, t, tau, x)?;
    let reference = model.inverse_classifier_prob(c, NoiseLevel::from_time(t)?, &[x])?;
    let point = CheckPoint::default()
        .class(c)
        .t(t)
        .tau(tau)
        .x(&[x])
        .samples(QUAD_NODES as u64);
    Ok(CheckReport::relative("martingale_quadrature", point, estimate, reference, 1e-6))
}
