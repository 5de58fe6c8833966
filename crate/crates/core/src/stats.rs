//! Small statistics toolkit: compensated sums, Wilson intervals, two-sample
//! Kolmogorov-Smirnov, trapezoid quadrature.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// Two-sided 97.5% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

/// Sample mean and its standard error (unbiased variance), summed in order.
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<KahanSum>().value() / n;
    if values.len() == 1 {
        return Ok((mean, f64::NAN));
    }
    let ss = values.iter().map(|&v| (v - mean) * (v - mean)).collect::<KahanSum>().value();
    Ok((mean, (ss / (n - 1.0) / n).sqrt()))
}

/// Streaming mean/variance accumulator that merges deterministically.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let frac = other.n as f64 / n as f64;
        Moments {
            n,
            mean: self.mean + delta * frac,
            m2: self.m2 + other.m2 + delta * delta * self.n as f64 * frac,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::EmptyInput("trials"));
    }
    assert!(successes <= n, "successes exceed trials");
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo.min(p), hi.max(p)))
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Kolmogorov survival function `Q(lambda) = P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form converges fast for small arguments.
        let k = -PI * PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|j| ((2 * j - 1) as f64).powi(2) * k).map(f64::exp).sum();
        (1.0 - (2.0 * PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for j in 1..=100 {
            let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
            s += if j % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn effective_size(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (n * m / (n + m)).sqrt()
}

/// Asymptotic p-value of a two-sample KS statistic (Stephens' small-sample
/// correction).
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let en = effective_size(n, m);
    kolmogorov_survival((en + 0.12 + 0.11 / en) * d)
}

/// Smallest `D` rejected at level `alpha` by [`ks_p_value`].
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ks_p_value(mid, n, m) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Standard deviation of the Kolmogorov distribution, `sqrt(pi^2/12 - pi ln^2 2 / 2)`.
pub fn kolmogorov_sd() -> f64 {
    (PI * PI / 12.0 - PI / 2.0 * LN_2 * LN_2).sqrt()
}

/// Approximate standard error of a two-sample KS distance.
pub fn ks_distance_se(n: usize, m: usize) -> f64 {
    kolmogorov_sd() / effective_size(n, m)
}

/// Composite trapezoid rule with `nodes` equally spaced points.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    assert!(nodes >= 2, "trapezoid needs at least two nodes");
    let h = (b - a) / (nodes - 1) as f64;
    let mut s = KahanSum::new();
    for i in 0..nodes {
        let x = if i == nodes - 1 { b } else { a + h * i as f64 };
        let weight = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
        s.add(weight * f(x));
    }
    s.value() * h
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn kahan_recovers_small_terms() {
        let mut s = KahanSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn mean_and_se_by_hand() {
        let (m, se) = mean_and_se(&[-2.0, -4.0]).unwrap();
        assert_eq!(m, -3.0);
        assert_relative_eq!(se, 1.0, epsilon = 1e-15);
        assert!(mean_and_se(&[]).is_err());
    }

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let merged = xs.chunks(97).fold(Moments::default(), |acc, chunk| {
            let mut part = Moments::default();
            chunk.iter().for_each(|&x| part.push(x));
            acc.merge(part)
        });
        assert_relative_eq!(whole.mean(), merged.mean(), epsilon = 1e-12);
        assert_relative_eq!(whole.variance(), merged.variance(), epsilon = 1e-10);
        let (m, se) = mean_and_se(&xs).unwrap();
        assert_relative_eq!(m, whole.mean(), epsilon = 1e-12);
        assert_relative_eq!(se, whole.standard_error(), epsilon = 1e-10);
    }

    /// Independent oracle: the interval endpoints are the roots of
    /// `(p_hat - p)^2 = z^2 p (1 - p) / n`.
    fn wilson_roots(k: u64, n: u64, z: f64) -> (f64, f64) {
        let (ph, nf) = (k as f64 / n as f64, n as f64);
        let a = 1.0 + z * z / nf;
        let b = -(2.0 * ph + z * z / nf);
        let c = ph * ph;
        let disc = (b * b - 4.0 * a * c).sqrt();
        ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
    }

    #[test]
    fn wilson_three_of_four() {
        let (lo, hi) = wilson_interval(3, 4, Z_95).unwrap();
        let (elo, ehi) = wilson_roots(3, 4, Z_95);
        assert_relative_eq!(lo, elo, epsilon = 1e-12);
        assert_relative_eq!(hi, ehi, epsilon = 1e-12);
        assert_relative_eq!(lo, 0.300_641_842_582_401_8, epsilon = 1e-9);
        assert_relative_eq!(hi, 0.954_412_739_190_299_5, epsilon = 1e-9);
    }

    #[test]
    fn wilson_extremes() {
        assert_eq!(wilson_interval(10, 10, Z_95).unwrap().1, 1.0);
        assert_eq!(wilson_interval(0, 10, Z_95).unwrap().0, 0.0);
        assert!(wilson_interval(0, 0, Z_95).is_err());
    }

    #[test]
    fn ks_statistic_by_hand() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_relative_eq!(ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[2.5]).unwrap(), 0.5);
    }

    #[test]
    fn kolmogorov_survival_reference_values() {
        // Classical critical values of the Kolmogorov distribution.
        assert_relative_eq!(kolmogorov_survival(1.358_098_639_322_550_7), 0.05, epsilon = 1e-10);
        assert_relative_eq!(kolmogorov_survival(1.627_623_611_518_950_4), 0.01, epsilon = 1e-10);
        assert_relative_eq!(kolmogorov_survival(0.827_573_555_189_905_9), 0.5, epsilon = 1e-10);
        // Both series agree at the switch point.
        let lam: f64 = 1.18;
        let alt: f64 = 2.0 * (1..=100).map(|j| {
            let t = (-2.0 * (j * j) as f64 * lam * lam).exp();
            if j % 2 == 1 { t } else { -t }
        }).sum::<f64>();
        assert_relative_eq!(kolmogorov_survival(lam - 1e-12), alt, epsilon = 1e-10);
    }

    #[test]
    fn critical_value_inverts_p_value() {
        let d = ks_critical_value(0.01, 1000, 1000);
        assert_relative_eq!(ks_p_value(d, 1000, 1000), 0.01, epsilon = 1e-9);
        // The reference comes from numerical integration, good to about 1e-10.
        assert_relative_eq!(kolmogorov_sd(), 0.260_332_871_482_069, epsilon = 1e-9);
    }

    #[test]
    fn trapezoid_integrates_gaussian() {
        let v = trapezoid(|x| (-0.5 * x * x).exp(), -12.0, 12.0, 200_001);
        assert_relative_eq!(v, (2.0 * PI).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(trapezoid(|x| x, 0.0, 1.0, 2), 0.5);
    }

    proptest! {
        #[test]
        fn wilson_contains_point_estimate(n in 1u64..5000, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac).floor() as u64;
            let (lo, hi) = wilson_interval(k, n, Z_95).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
            let (elo, ehi) = wilson_roots(k, n, Z_95);
            prop_assert!((lo - elo.max(0.0)).abs() < 1e-9 && (hi - ehi.min(1.0)).abs() < 1e-9);
        }

        #[test]
        fn ks_statistic_is_symmetric_and_bounded(
            a in proptest::collection::vec(-5.0f64..5.0, 1..40),
            b in proptest::collection::vec(-5.0f64..5.0, 1..40),
        ) {
            let d = ks_statistic(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_statistic(&b, &a).unwrap());
        }
    }
}
