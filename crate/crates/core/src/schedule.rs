//! Discrete noise schedules.
//!
//! Steps are indexed `n = 1..=N`. `alpha_bar_n` is the cumulative product of
//! `1 - beta_k` for `k <= n`, and step `n` sits at forward time
//! `t_n = 1 - alpha_bar_n`.

use crate::error::{Error, Result};
use crate::mixture::NoiseLevel;
use crate::scalar::Scalar;

/// Largest admissible `alpha_bar`.
pub const ALPHA_BAR_CAP: f64 = 1.0 - 1e-12;

pub const DEFAULT_C0: f64 = 2.0;
pub const DEFAULT_C1: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule<T> {
    alpha_bar: Vec<T>,
    beta: Vec<T>,
    c0: Option<T>,
    c1: Option<T>,
}

impl<T: Scalar> Schedule<T> {
    /// Schedule defined backwards from `alpha_bar_N = N^{-c0}` by
    /// `alpha_bar_{n-1} = alpha_bar_n + c1 alpha_bar_n (1 - alpha_bar_n) ln(N) / N`.
    pub fn learning_rate(steps: usize, c0: T, c1: T) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidSchedule(format!("need at least 2 steps, got {steps}")));
        }
        if !(c0 > T::zero() && c0.is_finite() && c1 > T::zero() && c1.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "c0 and c1 must be positive and finite, got c0 = {c0}, c1 = {c1}"
            )));
        }
        let n_steps = T::of(steps as f64);
        let rate = c1 * n_steps.ln() / n_steps;
        let cap = T::of(ALPHA_BAR_CAP);
        let mut alpha_bar = vec![T::zero(); steps];
        alpha_bar[steps - 1] = n_steps.powf(-c0);
        if !(alpha_bar[steps - 1] > T::zero()) {
            return Err(Error::InvalidSchedule(format!(
                "terminal alpha_bar N^-c0 underflows for N = {steps}, c0 = {c0}"
            )));
        }
        for n in (2..=steps).rev() {
            let a = alpha_bar[n - 1];
            let prev = a + rate * a * (T::one() - a);
            if prev > cap {
                return Err(Error::ScheduleOverflow {
                    n: n - 1,
                    alpha_bar: prev.as_f64(),
                });
            }
            if !(prev > a) {
                return Err(Error::InvalidSchedule(format!(
                    "alpha_bar stops decreasing at n = {}; increase c1",
                    n - 1
                )));
            }
            alpha_bar[n - 2] = prev;
        }
        let beta = betas_from_alpha_bar(&alpha_bar);
        Ok(Self {
            alpha_bar,
            beta,
            c0: Some(c0),
            c1: Some(c1),
        })
    }

    /// `beta_n` linear in `n` from `beta_min` to `beta_max`.
    pub fn linear_beta(steps: usize, beta_min: T, beta_max: T) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSchedule("need at least 1 step".into()));
        }
        if !(beta_min > T::zero() && beta_min <= beta_max && beta_max < T::one()) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
            )));
        }
        let span = if steps > 1 {
            (beta_max - beta_min) / T::of((steps - 1) as f64)
        } else {
            T::zero()
        };
        let beta: Vec<T> = (0..steps).map(|i| beta_min + span * T::of(i as f64)).collect();
        let alpha_bar = beta
            .iter()
            .scan(T::one(), |acc, &b| {
                *acc = *acc * (T::one() - b);
                Some(*acc)
            })
            .collect();
        Ok(Self {
            alpha_bar,
            beta,
            c0: None,
            c1: None,
        })
    }

    /// Number of steps `N`.
    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    fn index(&self, n: usize) -> Result<usize> {
        if n == 0 || n > self.len() {
            return Err(Error::StepOutOfRange { n, len: self.len() });
        }
        Ok(n - 1)
    }

    pub fn alpha_bar(&self, n: usize) -> Result<T> {
        Ok(self.alpha_bar[self.index(n)?])
    }

    pub fn beta(&self, n: usize) -> Result<T> {
        Ok(self.beta[self.index(n)?])
    }

    /// `alpha_bar_1..=alpha_bar_N`.
    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bar
    }

    /// `beta_1..=beta_N`.
    pub fn betas(&self) -> &[T] {
        &self.beta
    }

    pub fn c0(&self) -> Option<T> {
        self.c0
    }

    pub fn c1(&self) -> Option<T> {
        self.c1
    }

    /// Noise level of step `n`.
    pub fn level_of(&self, n: usize) -> Result<NoiseLevel<T>> {
        NoiseLevel::from_alpha_bar(self.alpha_bar(n)?)
    }
}

/// `beta_n = 1 - alpha_bar_n / alpha_bar_{n-1}` with `alpha_bar_0 = 1`.
fn betas_from_alpha_bar<T: Scalar>(alpha_bar: &[T]) -> Vec<T> {
    std::iter::once(T::one())
        .chain(alpha_bar.iter().copied())
        .zip(alpha_bar)
        .map(|(prev, &cur)| T::one() - cur / prev)
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn product_of_alphas(s: &Schedule<f64>) -> Vec<f64> {
        s.betas()
            .iter()
            .scan(1.0, |acc, b| {
                *acc *= 1.0 - b;
                Some(*acc)
            })
            .collect()
    }

    #[test]
    fn learning_rate_terminal_and_first_backward_step() {
        let s = Schedule::learning_rate(100, 2.0, 4.0).unwrap();
        assert_relative_eq!(s.alpha_bar(100).unwrap(), 1e-4, max_relative = 1e-15);
        let expected = 1e-4 * (1.0 + 4.0 * (1.0 - 1e-4) * 100f64.ln() / 100.0);
        assert_relative_eq!(s.alpha_bar(99).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 1.1841883867587798e-4, max_relative = 1e-14);
    }

    #[test]
    fn learning_rate_two_steps_by_hand() {
        let s = Schedule::learning_rate(2, 1.0, 1.0).unwrap();
        assert_eq!(s.alpha_bar(2).unwrap(), 0.5);
        assert_relative_eq!(s.alpha_bar(1).unwrap(), 0.5 + 0.25 * 2f64.ln() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(s.alpha_bar(1).unwrap(), 0.586643397569993, epsilon = 1e-14);
    }

    #[test]
    fn learning_rate_rejects_bad_parameters() {
        assert!(Schedule::learning_rate(1, 2.0, 4.0).is_err());
        assert!(Schedule::learning_rate(10, 0.0, 4.0).is_err());
        assert!(Schedule::learning_rate(10, 2.0, -1.0).is_err());
        let err = Schedule::<f64>::learning_rate(2, 1.0, 6.0).unwrap_err();
        assert!(matches!(err, Error::ScheduleOverflow { n: 1, .. }), "{err}");
        assert!(err.to_string().contains("smaller c1"));
    }

    #[test]
    fn level_of_maps_steps_to_times() {
        let s = Schedule::learning_rate(100, 2.0, 4.0).unwrap();
        let last = s.level_of(100).unwrap();
        assert_relative_eq!(last.alpha_bar(), 1e-4, max_relative = 1e-15);
        assert_relative_eq!(last.time(), 0.9999, epsilon = 1e-15);
        assert!(matches!(s.level_of(101), Err(Error::StepOutOfRange { n: 101, len: 100 })));
        assert!(s.level_of(0).is_err());
        let single = Schedule::linear_beta(1, 0.1, 0.1).unwrap();
        assert_relative_eq!(single.level_of(1).unwrap().time(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn linear_beta_examples() {
        let one = Schedule::linear_beta(1, 0.5, 0.5).unwrap();
        assert_eq!(one.betas(), &[0.5]);
        assert_eq!(one.alpha_bars(), &[0.5]);
        assert_eq!(one.c0(), None);
        let two = Schedule::linear_beta(2, 0.1, 0.3).unwrap();
        assert_relative_eq!(two.betas()[1], 0.3, epsilon = 1e-15);
        assert_relative_eq!(two.alpha_bars()[0], 0.9, epsilon = 1e-15);
        assert_relative_eq!(two.alpha_bars()[1], 0.63, epsilon = 1e-15);
        let long = Schedule::linear_beta(4000, 1e-4, 0.02).unwrap();
        // log-space product evaluated independently: 2.6532323718e-18.
        assert_relative_eq!(long.alpha_bar(4000).unwrap(), 2.6532323718239964e-18, max_relative = 1e-9);
        assert!(long.alpha_bar(4000).unwrap() < 1e-8);
        assert!(Schedule::linear_beta(10, 0.3, 0.1).is_err());
        assert!(Schedule::linear_beta(10, 0.0, 0.1).is_err());
        assert!(Schedule::linear_beta(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn learning_rate_invariants_at_full_size() {
        let s = Schedule::learning_rate(4000, 2.0, 4.0).unwrap();
        let a = s.alpha_bars();
        assert!(a.windows(2).all(|w| w[0] > w[1]));
        assert!(a[0] < ALPHA_BAR_CAP);
        assert!(s.betas().iter().all(|&b| b > 0.0 && b < 1.0));
        for (x, y) in product_of_alphas(&s).iter().zip(a) {
            assert!((x - y).abs() <= 1e-10 * y);
        }
    }

    proptest! {
        #[test]
        fn learning_rate_schedule_invariants(steps in 2usize..3000, c0 in 0.5f64..3.0, extra in 0.0f64..4.0) {
            let c1 = c0 + extra;
            let Ok(s) = Schedule::learning_rate(steps, c0, c1) else {
                // Overflow is legitimate when c1 ln N / N is large.
                prop_assume!(false);
                unreachable!()
            };
            let a = s.alpha_bars();
            prop_assert!((a[steps - 1] - (steps as f64).powf(-c0)).abs() <= 1e-15 * a[steps - 1]);
            let rate = c1 * (steps as f64).ln() / steps as f64;
            for n in 1..steps {
                let rec = a[n] + rate * a[n] * (1.0 - a[n]);
                prop_assert!((a[n - 1] - rec).abs() <= 1e-14);
            }
            prop_assert!(a.windows(2).all(|w| w[0] > w[1]));
            prop_assert!(s.betas().iter().all(|&b| b > 0.0 && b < 1.0));
            for (x, y) in product_of_alphas(&s).iter().zip(a) {
                prop_assert!((x - y).abs() <= 1e-10 * y.max(1e-300));
            }
            // The sanity floor assumes the recurrence climbs past 1/2 (c1 >= c0 + 1).
            if extra >= 1.0 {
                let above_half = a.iter().filter(|&&x| x >= 0.5).count();
                let floor = (steps as f64 / (2.0 * c1 * (steps as f64).ln())).floor() as usize;
                prop_assert!(above_half >= floor, "{above_half} < {floor}");
            }
        }

        #[test]
        fn linear_schedule_round_trip(steps in 1usize..5000, lo in 1e-5f64..0.05, span in 0.0f64..0.05) {
            let s = Schedule::linear_beta(steps, lo, lo + span).unwrap();
            for (x, y) in product_of_alphas(&s).iter().zip(s.alpha_bars()) {
                prop_assert!((x - y).abs() <= 1e-10 * y);
            }
            prop_assert!(s.alpha_bars().windows(2).all(|w| w[0] > w[1]));
            let times: Vec<f64> = (1..=steps).map(|n| s.level_of(n).unwrap().time()).collect();
            // 1 - alpha_bar rounds to 1 once alpha_bar is tiny, so only weak order holds.
            prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
