//! Isotropic Gaussian mixtures and their class-conditional composition.
//!
//! Everything is evaluated in log space. Component responsibilities come from
//! a streaming log-sum-exp, so densities stay finite where the naive sum would
//! underflow (far tails, nearly noiseless levels with separated means).
//!
//! The forward noising process maps a component `N(mu, s2 I)` at noise level
//! `alpha_bar` to `N(sqrt(alpha_bar) mu, (alpha_bar s2 + 1 - alpha_bar) I)`,
//! so a mixture stays a mixture at every level and all scores are exact.

use crate::error::{Error, Result};
use crate::rng::NoiseSource;
use crate::scalar::{squared_norm, Scalar};

fn weight_tolerance<T: Scalar>() -> T {
    T::of(1e-12).max(T::epsilon() * T::of(64.0))
}

/// Normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Noise level of the forward process.
///
/// Holds the cumulative signal retention `alpha_bar`; the forward time is
/// `t = 1 - alpha_bar`. `alpha_bar = 0` (pure noise) is accepted as the
/// closed end of the range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseLevel<T> {
    alpha_bar: T,
}

impl<T: Scalar> NoiseLevel<T> {
    pub fn from_alpha_bar(alpha_bar: T) -> Result<Self> {
        if !(alpha_bar >= T::zero() && alpha_bar <= T::one()) {
            return Err(Error::InvalidNoiseLevel(alpha_bar.as_f64()));
        }
        Ok(Self { alpha_bar })
    }

    /// Level of the forward process at time `t`, i.e. `alpha_bar = 1 - t`.
    pub fn from_time(t: T) -> Result<Self> {
        Self::from_alpha_bar(T::one() - t)
    }

    /// Level seen by the reverse process at reverse time `t`.
    ///
    /// `Y_t` is distributed as `X_{1-t}`, whose signal retention is `t`.
    pub fn for_reverse_time(t: T) -> Result<Self> {
        Self::from_alpha_bar(t)
    }

    pub fn clean() -> Self {
        Self {
            alpha_bar: T::one(),
        }
    }

    pub fn alpha_bar(&self) -> T {
        self.alpha_bar
    }

    /// Forward time `1 - alpha_bar`.
    pub fn time(&self) -> T {
        T::one() - self.alpha_bar
    }

    pub fn signal_scale(&self) -> T {
        self.alpha_bar.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianComponent<T> {
    pub mean: Vec<T>,
    /// Per-coordinate variance.
    pub variance: T,
    pub weight: T,
}

impl<T: Scalar> GaussianComponent<T> {
    pub fn new(mean: Vec<T>, variance: T, weight: T) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidComponent("mean must have at least one coordinate".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidComponent("mean has non-finite coordinates".into()));
        }
        if !(variance > T::zero() && variance.is_finite()) {
            return Err(Error::InvalidComponent(format!(
                "variance must be positive and finite, got {variance}"
            )));
        }
        if !(weight > T::zero() && weight <= T::one()) {
            return Err(Error::InvalidComponent(format!(
                "weight must lie in (0, 1], got {weight}"
            )));
        }
        Ok(Self {
            mean,
            variance,
            weight,
        })
    }
}

/// Constants that do not depend on the evaluation point.
#[derive(Clone, Debug, PartialEq)]
struct ComponentTerms<T> {
    log_weight: T,
    log_norm: T,
    precision: T,
}

/// Weighted isotropic Gaussian mixture in `dim` dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureModel<T> {
    dim: usize,
    components: Vec<GaussianComponent<T>>,
    terms: Vec<ComponentTerms<T>>,
}

impl<T: Scalar> MixtureModel<T> {
    pub fn new(components: Vec<GaussianComponent<T>>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidModel("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if let Some(bad) = components.iter().find(|c| c.mean.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.mean.len(),
            });
        }
        let total: T = components.iter().map(|c| c.weight).sum();
        if (total - T::one()).abs() > weight_tolerance::<T>() {
            return Err(Error::InvalidModel(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(Self::from_validated(dim, components))
    }

    /// Single Gaussian `N(mean, variance I)`.
    pub fn gaussian(mean: Vec<T>, variance: T) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(mean, variance, T::one())?])
    }

    fn from_validated(dim: usize, components: Vec<GaussianComponent<T>>) -> Self {
        let half_dim = T::of(dim as f64) * T::of(0.5);
        let terms = components
            .iter()
            .map(|c| ComponentTerms {
                log_weight: c.weight.ln(),
                log_norm: -half_dim * (T::TAU() * c.variance).ln(),
                precision: c.variance.recip(),
            })
            .collect();
        Self {
            dim,
            components,
            terms,
        }
    }

    /// Builds a mixture from unnormalized log weights, dropping components
    /// whose normalized weight underflows to zero.
    fn from_log_weights(dim: usize, parts: Vec<(Vec<T>, T, T)>) -> Self {
        let max = parts
            .iter()
            .map(|p| p.2)
            .fold(T::neg_infinity(), |a, b| a.max(b));
        let total: T = parts.iter().map(|p| (p.2 - max).exp()).sum();
        let log_total = max + total.ln();
        let components = parts
            .into_iter()
            .filter_map(|(mean, variance, log_w)| {
                let weight = (log_w - log_total).exp();
                (weight > T::zero()).then(|| GaussianComponent {
                    mean,
                    variance,
                    weight: weight.min(T::one()),
                })
            })
            .collect();
        Self::from_validated(dim, components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent<T>] {
        &self.components
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: len,
            });
        }
        Ok(())
    }

    /// Law of `sqrt(alpha_bar) X + sqrt(1 - alpha_bar) Z` for `X` drawn from this mixture.
    pub fn noised(&self, level: NoiseLevel<T>) -> Self {
        let scale = level.signal_scale();
        let a = level.alpha_bar();
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent {
                mean: c.mean.iter().map(|&m| scale * m).collect(),
                variance: a * c.variance + (T::one() - a),
                weight: c.weight,
            })
            .collect();
        Self::from_validated(self.dim, components)
    }

    #[inline]
    fn component_log_density(&self, k: usize, x: &[T]) -> T {
        let terms = &self.terms[k];
        let dist2 = x
            .iter()
            .zip(&self.components[k].mean)
            .fold(T::zero(), |acc, (&xi, &mi)| acc + (xi - mi) * (xi - mi));
        terms.log_weight + terms.log_norm - T::of(0.5) * dist2 * terms.precision
    }

    /// Streaming log-sum-exp over components. When `score` is given it receives
    /// `sum_k r_k(x) (mu_k - x) / s2_k`, the gradient of the log density.
    #[inline]
    fn accumulate(&self, x: &[T], score: Option<&mut [T]>) -> T {
        self.accumulate_impl::<true>(x, score)
    }

    #[inline]
    fn accumulate_impl<const WANT_LOG: bool>(&self, x: &[T], mut score: Option<&mut [T]>) -> T {
        let mut max = T::neg_infinity();
        let mut sum = T::zero();
        if let Some(out) = score.as_deref_mut() {
            out.iter_mut().for_each(|o| *o = T::zero());
        }
        for k in 0..self.components.len() {
            let l = self.component_log_density(k, x);
            let (rescale, e) = if l > max {
                let r = if max == T::neg_infinity() {
                    T::zero()
                } else {
                    (max - l).exp()
                };
                max = l;
                (r, T::one())
            } else {
                (T::one(), (l - max).exp())
            };
            sum = sum * rescale + e;
            if let Some(out) = score.as_deref_mut() {
                let precision = self.terms[k].precision;
                for ((o, &xi), &mi) in out.iter_mut().zip(x).zip(&self.components[k].mean) {
                    *o = *o * rescale + e * (mi - xi) * precision;
                }
            }
        }
        if let Some(out) = score {
            out.iter_mut().for_each(|o| *o = *o / sum);
        }
        if WANT_LOG {
            max + sum.ln()
        } else {
            T::nan()
        }
    }

    pub fn log_density(&self, x: &[T]) -> Result<T> {
        self.check_dim(x.len())?;
        Ok(self.accumulate(x, None))
    }

    /// `grad log p(x)`.
    pub fn score(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x.len())?;
        let mut out = vec![T::zero(); self.dim];
        self.accumulate(x, Some(&mut out));
        Ok(out)
    }

    /// Unchecked variant of [`score`](Self::score) writing into `out`;
    /// returns the log density as a by-product.
    #[inline]
    pub fn score_into(&self, x: &[T], out: &mut [T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        self.accumulate(x, Some(out))
    }

    /// Like [`score_into`](Self::score_into) without the log density.
    #[inline]
    pub fn score_only_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.dim);
        self.accumulate_impl::<false>(x, Some(out));
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, x: &[T]) -> T {
        self.accumulate(x, None)
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: &[T]) -> Result<Vec<T>> {
        let log_p = self.log_density(x)?;
        Ok((0..self.components.len())
            .map(|k| (self.component_log_density(k, x) - log_p).exp())
            .collect())
    }

    /// Draws one point into `out`.
    pub fn sample_into<N: NoiseSource + ?Sized>(&self, noise: &mut N, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.dim);
        let u = T::of(noise.uniform());
        let mut cumulative = T::zero();
        let last = self.components.len() - 1;
        let k = self
            .components
            .iter()
            .position(|c| {
                cumulative = cumulative + c.weight;
                u < cumulative
            })
            .unwrap_or(last);
        let c = &self.components[k];
        let sd = c.variance.sqrt();
        for (o, &m) in out.iter_mut().zip(&c.mean) {
            *o = m + sd * T::of(noise.gaussian());
        }
    }

    pub fn sample<N: NoiseSource + ?Sized>(&self, noise: &mut N) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.sample_into(noise, &mut out);
        out
    }

    /// `P(|X| < r)` for a one-dimensional mixture.
    pub fn prob_within_radius_1d(&self, r: f64) -> Result<f64> {
        if self.dim != 1 {
            return Err(Error::Unsupported(
                "closed-form radius probability needs dimension 1".into(),
            ));
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                let m = c.mean[0].as_f64();
                let sd = c.variance.as_f64().sqrt();
                c.weight.as_f64() * (normal_cdf((r - m) / sd) - normal_cdf((-r - m) / sd))
            })
            .sum())
    }
}

/// Free-function form of [`MixtureModel::noised`].
pub fn noised_mixture<T: Scalar>(model: &MixtureModel<T>, level: NoiseLevel<T>) -> MixtureModel<T> {
    model.noised(level)
}

/// Class priors plus one mixture per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassConditionalModel<T> {
    priors: Vec<T>,
    log_priors: Vec<T>,
    classes: Vec<MixtureModel<T>>,
    marginal: MixtureModel<T>,
}

impl<T: Scalar> ClassConditionalModel<T> {
    pub fn new(priors: Vec<T>, classes: Vec<MixtureModel<T>>) -> Result<Self> {
        if priors.is_empty() {
            return Err(Error::InvalidModel("model needs at least one class".into()));
        }
        if priors.len() != classes.len() {
            return Err(Error::InvalidModel(format!(
                "{} priors for {} class mixtures",
                priors.len(),
                classes.len()
            )));
        }
        if let Some(p) = priors.iter().find(|&&p| !(p > T::zero() && p <= T::one())) {
            return Err(Error::InvalidModel(format!("class prior {p} outside (0, 1]")));
        }
        let total: T = priors.iter().copied().sum();
        if (total - T::one()).abs() > weight_tolerance::<T>() {
            return Err(Error::InvalidModel(format!("class priors sum to {total}, expected 1")));
        }
        let dim = classes[0].dim();
        if let Some(bad) = classes.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        let flattened = priors
            .iter()
            .zip(&classes)
            .flat_map(|(&prior, mixture)| {
                mixture.components().iter().map(move |c| GaussianComponent {
                    mean: c.mean.clone(),
                    variance: c.variance,
                    weight: prior * c.weight,
                })
            })
            .collect();
        let marginal = MixtureModel::new(flattened)?;
        Ok(Self {
            log_priors: priors.iter().map(|p| p.ln()).collect(),
            priors,
            classes,
            marginal,
        })
    }

    /// Two classes with equal priors in one dimension:
    /// class 0 is `N(0, 1)`, class 1 is `N(1, 1)/2 + N(-1, 1)/2`.
    pub fn paper_gmm() -> Self {
        let half = T::of(0.5);
        let class0 = MixtureModel::gaussian(vec![T::zero()], T::one()).expect("valid preset");
        let class1 = MixtureModel::new(vec![
            GaussianComponent::new(vec![T::one()], T::one(), half).expect("valid preset"),
            GaussianComponent::new(vec![-T::one()], T::one(), half).expect("valid preset"),
        ])
        .expect("valid preset");
        Self::new(vec![half, half], vec![class0, class1]).expect("valid preset")
    }

    pub fn dim(&self) -> usize {
        self.marginal.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.priors.len()
    }

    pub fn priors(&self) -> &[T] {
        &self.priors
    }

    pub fn class_mixture(&self, c: usize) -> Result<&MixtureModel<T>> {
        self.classes.get(c).ok_or(Error::ClassOutOfRange {
            class: c,
            num_classes: self.priors.len(),
        })
    }

    pub fn class_mixtures(&self) -> &[MixtureModel<T>] {
        &self.classes
    }

    /// Prior-weighted union of the class mixtures.
    pub fn marginal_mixture(&self) -> &MixtureModel<T> {
        &self.marginal
    }

    pub fn check_class(&self, c: usize) -> Result<()> {
        self.class_mixture(c).map(|_| ())
    }

    /// All noised densities at one level, precomputed for repeated evaluation.
    pub fn at_level(&self, level: NoiseLevel<T>) -> LeveledModel<T> {
        LeveledModel {
            level,
            log_priors: self.log_priors.clone(),
            classes: self.classes.iter().map(|m| m.noised(level)).collect(),
            marginal: self.marginal.noised(level),
        }
    }

    fn checked_level(&self, c: usize, level: NoiseLevel<T>, x: &[T]) -> Result<LeveledModel<T>> {
        self.check_class(c)?;
        self.marginal.check_dim(x.len())?;
        Ok(self.at_level(level))
    }

    /// `log p(c | X = x)` at `level`.
    pub fn log_classifier_prob(&self, c: usize, level: NoiseLevel<T>, x: &[T]) -> Result<T> {
        Ok(self.checked_level(c, level, x)?.log_classifier_prob(c, x))
    }

    /// `p(c | X = x)` at `level`, computed as `exp` of the log-space value.
    pub fn classifier_prob(&self, c: usize, level: NoiseLevel<T>, x: &[T]) -> Result<T> {
        self.log_classifier_prob(c, level, x).map(T::exp)
    }

    /// `p(c | X = x)^{-1}` as `exp(-log p)`; may be very large in the tails.
    pub fn inverse_classifier_prob(&self, c: usize, level: NoiseLevel<T>, x: &[T]) -> Result<T> {
        self.log_classifier_prob(c, level, x).map(|l| (-l).exp())
    }

    pub fn conditional_score(&self, c: usize, level: NoiseLevel<T>, x: &[T]) -> Result<Vec<T>> {
        let leveled = self.checked_level(c, level, x)?;
        let mut out = vec![T::zero(); x.len()];
        leveled.conditional_score_into(c, x, &mut out);
        Ok(out)
    }

    pub fn marginal_score(&self, level: NoiseLevel<T>, x: &[T]) -> Result<Vec<T>> {
        self.marginal.check_dim(x.len())?;
        self.marginal.noised(level).score(x)
    }

    /// `grad log p(c | x)`, the difference of conditional and marginal scores.
    pub fn guidance_direction(&self, c: usize, level: NoiseLevel<T>, x: &[T]) -> Result<Vec<T>> {
        let leveled = self.checked_level(c, level, x)?;
        let mut out = vec![T::zero(); x.len()];
        let mut scratch = vec![T::zero(); x.len()];
        leveled.guidance_direction_into(c, x, &mut out, &mut scratch);
        Ok(out)
    }

    /// Exact law of `X_tau` given `X_t = x` and class `c` (forward times, `tau < t`).
    ///
    /// The prior `p(x_tau | c)` is a Gaussian mixture and the transition
    /// `X_t | X_tau ~ N(a x_tau, s2 I)` is linear-Gaussian with
    /// `a = sqrt((1 - t) / (1 - tau))` and `s2 = (t - tau) / (1 - tau)`, so each
    /// component updates by conjugacy and is reweighted by its evidence
    /// `N(x; a m_k, (a^2 v_k + s2) I)`.
    pub fn posterior_mixture(&self, c: usize, t: T, tau: T, x: &[T]) -> Result<MixtureModel<T>> {
        self.check_class(c)?;
        self.marginal.check_dim(x.len())?;
        if !(t < T::one()) {
            return Err(Error::InvalidTimes(format!("t = {t} must be below 1")));
        }
        if !(tau >= T::zero() && tau < t) {
            return Err(Error::InvalidTimes(format!("need 0 <= tau < t, got tau = {tau}, t = {t}")));
        }
        let prior = self.classes[c].noised(NoiseLevel::from_time(tau)?);
        let one = T::one();
        let a2 = (one - t) / (one - tau);
        let a = a2.sqrt();
        let s2 = (t - tau) / (one - tau);
        let half_dim = T::of(self.dim() as f64 * 0.5);
        let parts = prior
            .components()
            .iter()
            .map(|comp| {
                let v = comp.variance;
                let evidence_var = a2 * v + s2;
                let mean: Vec<T> = comp
                    .mean
                    .iter()
                    .zip(x)
                    .map(|(&m, &xi)| (s2 * m + a * v * xi) / evidence_var)
                    .collect();
                let variance = v * s2 / evidence_var;
                let dist2 = comp
                    .mean
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&m, &xi)| acc + (xi - a * m) * (xi - a * m));
                let log_w = comp.weight.ln()
                    - half_dim * (T::TAU() * evidence_var).ln()
                    - T::of(0.5) * dist2 / evidence_var;
                (mean, variance, log_w)
            })
            .collect();
        Ok(MixtureModel::from_log_weights(self.dim(), parts))
    }

    /// Smallest radius `R` (to within `1e-6`) with `P(|X_0| < R | c) > 1/2`
    /// for every class.
    ///
    /// One-dimensional models use the mixture CDF; higher dimensions use the
    /// empirical norm distribution of `1e6` draws per class from the stream
    /// `(seed, [RADIUS, c])`.
    pub fn bound_radius(&self, seed: u64) -> f64 {
        use crate::rng::{domain, RngStream};
        const TOL: f64 = 1e-6;
        const DRAWS: usize = 1_000_000;
        let bisect = |prob: &dyn Fn(f64) -> f64| {
            let mut hi = 1.0;
            while prob(hi) <= 0.5 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            while hi - lo > TOL {
                let mid = 0.5 * (lo + hi);
                if prob(mid) > 0.5 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        self.classes
            .iter()
            .enumerate()
            .map(|(c, mixture)| {
                if self.dim() == 1 {
                    bisect(&|r| mixture.prob_within_radius_1d(r).unwrap_or(0.0))
                } else {
                    let mut rng = RngStream::new(seed, &[domain::RADIUS, c as u64]);
                    let mut point = vec![T::zero(); self.dim()];
                    let mut norms: Vec<f64> = (0..DRAWS)
                        .map(|_| {
                            mixture.sample_into(&mut rng, &mut point);
                            squared_norm(&point).as_f64().sqrt()
                        })
                        .collect();
                    norms.sort_by(f64::total_cmp);
                    bisect(&|r| norms.partition_point(|&n| n < r) as f64 / DRAWS as f64)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// A [`ClassConditionalModel`] with every density noised to one level.
#[derive(Clone, Debug)]
pub struct LeveledModel<T> {
    level: NoiseLevel<T>,
    log_priors: Vec<T>,
    classes: Vec<MixtureModel<T>>,
    marginal: MixtureModel<T>,
}

impl<T: Scalar> LeveledModel<T> {
    pub fn level(&self) -> NoiseLevel<T> {
        self.level
    }

    pub fn class_mixture(&self, c: usize) -> &MixtureModel<T> {
        &self.classes[c]
    }

    pub fn marginal(&self) -> &MixtureModel<T> {
        &self.marginal
    }

    /// Bayes rule over classes: `log pi_c + log p(x|c) - logsumexp_j(log pi_j + log p(x|j))`.
    #[inline]
    pub fn log_classifier_prob(&self, c: usize, x: &[T]) -> T {
        let mut target = T::zero();
        let mut max = T::neg_infinity();
        let mut sum = T::zero();
        for (j, (mixture, &log_prior)) in self.classes.iter().zip(&self.log_priors).enumerate() {
            let l = log_prior + mixture.log_density_unchecked(x);
            if j == c {
                target = l;
            }
            if l > max {
                sum = if max == T::neg_infinity() {
                    T::one()
                } else {
                    sum * (max - l).exp() + T::one()
                };
                max = l;
            } else {
                sum = sum + (l - max).exp();
            }
        }
        (target - (max + sum.ln())).min(T::zero())
    }

    #[inline]
    pub fn inverse_classifier_prob(&self, c: usize, x: &[T]) -> T {
        (-self.log_classifier_prob(c, x)).exp()
    }

    #[inline]
    pub fn conditional_score_into(&self, c: usize, x: &[T], out: &mut [T]) {
        self.classes[c].score_only_into(x, out);
    }

    #[inline]
    pub fn marginal_score_into(&self, x: &[T], out: &mut [T]) {
        self.marginal.score_only_into(x, out);
    }

    /// Writes the conditional-minus-marginal score into `out`; clobbers `scratch`.
    #[inline]
    pub fn guidance_direction_into(&self, c: usize, x: &[T], out: &mut [T], scratch: &mut [T]) {
        self.classes[c].score_only_into(x, out);
        self.marginal.score_only_into(x, scratch);
        for (o, &s) in out.iter_mut().zip(scratch.iter()) {
            *o = *o - s;
        }
    }
}
