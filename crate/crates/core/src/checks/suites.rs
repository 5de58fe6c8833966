//! Standard evaluation grids shared by the command-line tool and the test
//! suites.

use crate::rng::{domain, NoiseSource, RngStream};

/// A `(class, t, tau, x)` configuration for the martingale check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MartingaleCase {
    pub class: usize,
    pub t: f64,
    pub tau: f64,
    pub x: f64,
}

/// 25 configurations: five `(t, tau)` pairs times five points, alternating classes.
pub fn martingale_cases() -> Vec<MartingaleCase> {
    let times = [(0.5, 0.25), (0.9, 0.1), (0.3, 0.0), (0.7, 0.4), (0.95, 0.5)];
    let xs = [-2.0, -0.5, 0.3, 0.8, 2.5];
    times
        .iter()
        .flat_map(|&(t, tau)| {
            xs.iter().enumerate().map(move |(j, &x)| MartingaleCase {
                class: if j % 2 == 0 { 0 } else { 1 },
                t,
                tau,
                x,
            })
        })
        .collect()
}

/// A `(class, w, t, y)` configuration for the one-step decrement check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecrementCase {
    pub class: usize,
    pub w: f64,
    pub t: f64,
    pub y: f64,
}

/// Ten guided configurations covering `w in {0.5, 1, 2}` and `t in {0.3, 0.5, 0.7}`.
pub fn decrement_cases() -> Vec<DecrementCase> {
    let ys = [1.2, -0.7, 2.0];
    let mut cases: Vec<DecrementCase> = [0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&w| {
            [0.3, 0.5, 0.7]
                .iter()
                .enumerate()
                .map(move |(k, &t)| DecrementCase { class: 1, w, t, y: ys[k] })
        })
        .collect();
    cases.push(DecrementCase {
        class: 1,
        w: 2.0,
        t: 0.5,
        y: 1.2,
    });
    cases
}

/// Configurations whose reference is exactly zero: no guidance, and the
/// symmetric point of the two-class model.
pub fn decrement_zero_cases() -> Vec<DecrementCase> {
    vec![
        DecrementCase {
            class: 1,
            w: 0.0,
            t: 0.5,
            y: 1.2,
        },
        DecrementCase {
            class: 1,
            w: 2.0,
            t: 0.5,
            y: 0.0,
        },
    ]
}

/// 200 points: 20 values of `y` in `[-8, 8]` times 10 times in `[0, 0.99]`.
pub fn bound_grid() -> Vec<(Vec<f64>, f64)> {
    let ts = [0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 0.95, 0.99];
    let mut grid = Vec::with_capacity(200);
    for &t in &ts {
        for i in 0..20 {
            grid.push((vec![-8.0 + 16.0 * i as f64 / 19.0], t));
        }
    }
    grid
}

/// `count` random `(y, t)` points with `y` uniform on `[-6, 6]` and `t` on `[0, 0.99)`.
pub fn random_points(count: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = RngStream::new(seed, &[domain::GRID]);
    (0..count)
        .map(|_| {
            let y = -6.0 + 12.0 * rng.uniform();
            let t = 0.99 * rng.uniform();
            (vec![y], t)
        })
        .collect()
}

/// Reverse-time checkpoints of the marginal equivalence test.
pub const EQUIVALENCE_CHECKPOINTS: [f64; 3] = [0.25, 0.5, 0.75];

/// Step counts of the discretization study.
pub const DISCRETIZATION_STEPS: [usize; 4] = [125, 250, 500, 1000];

/// Guidance scales of the relative-error trend.
pub const RATIO_SCALES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(martingale_cases().len(), 25);
        assert_eq!(decrement_cases().len(), 10);
        assert_eq!(bound_grid().len(), 200);
        assert_eq!(random_points(100, 1).len(), 100);
        assert_eq!(random_points(10, 1), random_points(10, 1));
    }

    #[test]
    fn martingale_cases_cover_both_classes() {
        let cases = martingale_cases();
        assert!(cases.iter().any(|c| c.class == 0) && cases.iter().any(|c| c.class == 1));
        assert!(cases.iter().all(|c| 0.0 <= c.tau && c.tau < c.t && c.t < 1.0));
    }
}
