use super::{CheckPoint, CheckReport};
use crate::error::{Error, Result};
use crate::mixture::{ClassConditionalModel, NoiseLevel};
use crate::rng::{domain, RngStream};
use crate::sampler::{PathEnsemble, TimeGrid};
use crate::stats::{ks_critical_value, ks_distance_se, ks_statistic};

/// Start of every continuous-time simulation.
pub const DELTA: f64 = 0.01;
/// Last reverse time reached by path integrals.
pub const TERMINAL_TIME: f64 = 1.0 - 1e-3;

const SIGNIFICANCE: f64 = 0.01;

fn direct_draws(model: &ClassConditionalModel<f64>, c: usize, t: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let law = model.class_mixture(c)?.noised(NoiseLevel::for_reverse_time(t)?);
    let mut rng = RngStream::new(seed, &[domain::DIRECT, c as u64, t.to_bits()]);
    let mut y = [0.0];
    Ok((0..n)
        .map(|_| {
            law.sample_into(&mut rng, &mut y);
            y[0]
        })
        .collect())
}

fn unguided_paths(
    model: &ClassConditionalModel<f64>,
    c: usize,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble<f64>> {
    if model.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "two-sample KS comparison needs dimension 1, model has {}",
            model.dim()
        )));
    }
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 paths, got {n_paths}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidTimes(format!("dt must be positive, got {dt}")));
    }
    let start = model.class_mixture(c)?.noised(NoiseLevel::for_reverse_time(DELTA)?);
    let key = [domain::PATHS, c as u64, 0f64.to_bits(), dt.to_bits()];
    Ok(PathEnsemble::new(1, n_paths, seed, &key, |rng, y| start.sample_into(rng, y)))
}

fn advance(paths: &mut PathEnsemble<f64>, model: &ClassConditionalModel<f64>, c: usize, from: f64, to: f64, dt: f64) -> Result<()> {
    if to > from {
        for (t, h) in TimeGrid::uniform(from, to, dt)?.steps() {
            paths.step(model, c, 0.0, t, h)?;
        }
    }
    Ok(())
}

/// Unguided reverse paths started from the exact law at `DELTA`, compared at
/// each checkpoint with direct draws of the class law at `alpha_bar = t` by a
/// two-sample KS test at level 0.01 with Bonferroni correction.
///
/// Reports carry the KS distance as estimate and the critical distance as
/// reference.
pub fn marginal_equivalence(
    model: &ClassConditionalModel<f64>,
    c: usize,
    checkpoints: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    if checkpoints.is_empty() {
        return Err(Error::EmptyInput("checkpoints"));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] < DELTA || checkpoints[checkpoints.len() - 1] > 1.0 {
        return Err(Error::InvalidTimes(format!(
            "checkpoints must increase strictly within [{DELTA}, 1], got {checkpoints:?}"
        )));
    }
    let mut paths = unguided_paths(model, c, dt, n_paths, seed)?;
    let alpha = SIGNIFICANCE / checkpoints.len() as f64;
    let critical = ks_critical_value(alpha, n_paths, n_paths);
    let se = ks_distance_se(n_paths, n_paths);
    let mut now = DELTA;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        advance(&mut paths, model, c, now, t, dt)?;
        now = t;
        let direct = direct_draws(model, c, t, n_paths, seed)?;
        let d = ks_statistic(&paths.first_coordinates(), &direct)?;
        out.push(CheckReport::at_most(
            "marginal_equivalence",
            CheckPoint::default().class(c).t(t).dt(dt).samples(n_paths as u64),
            d,
            critical,
            d / critical,
            &format!("KS distance <= critical value at level {alpha:e}"),
        ));
        out.last_mut().expect("just pushed").standard_error = se;
    }
    Ok(out)
}

/// KS distance `(D, se)` between unguided paths run to `t_end` and direct draws.
pub fn ks_endpoint_distance(
    model: &ClassConditionalModel<f64>,
    c: usize,
    t_end: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(DELTA..=1.0).contains(&t_end) {
        return Err(Error::InvalidTimes(format!("t_end must lie in [{DELTA}, 1], got {t_end}")));
    }
    let mut paths = unguided_paths(model, c, dt, n_paths, seed)?;
    advance(&mut paths, model, c, DELTA, t_end, dt)?;
    let direct = direct_draws(model, c, t_end, n_paths, seed)?;
    Ok((
        ks_statistic(&paths.first_coordinates(), &direct)?,
        ks_distance_se(n_paths, n_paths),
    ))
}
