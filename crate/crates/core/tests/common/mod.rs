//! Closed-form scores and classifier probability of the two-class model
//! (class 0: N(0, 1); class 1: half N(1, 1) plus half N(-1, 1); equal priors),
//! written out independently of the generic mixture code.
#![allow(dead_code)]

use guidance_core::{ClassConditionalModel, NoiseLevel};

pub fn conditional_score(x: f64, alpha_bar: f64) -> f64 {
    let s = alpha_bar.sqrt();
    let e = (-2.0 * s * x).exp();
    -x + s * (1.0 - e) / (1.0 + e)
}

pub fn marginal_score(x: f64, alpha_bar: f64) -> f64 {
    let s = alpha_bar.sqrt();
    let e = (-2.0 * s * x).exp();
    -x + s * (1.0 - e) / (1.0 + e + 2.0 * (alpha_bar / 2.0 - s * x).exp())
}

pub fn classifier_prob(x: f64, alpha_bar: f64) -> f64 {
    let s = alpha_bar.sqrt();
    let e = (-2.0 * s * x).exp();
    (1.0 + e) / (1.0 + e + 2.0 * (alpha_bar / 2.0 - s * x).exp())
}

/// 10 points of `x` in `[-6, 6]` times `alpha_bar` in `{0.05, 0.1, ..., 1}`.
pub fn closed_form_grid() -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(200);
    for j in 1..=20 {
        let a = 0.05 * j as f64;
        for i in 0..10 {
            grid.push((-6.0 + 12.0 * i as f64 / 9.0, a));
        }
    }
    grid
}

/// Largest absolute deviation of the generic code from the closed forms
/// over the grid, as `(conditional score, marginal score, classifier prob)`.
pub fn closed_form_deviation(grid: &[(f64, f64)]) -> (f64, f64, f64) {
    let model = ClassConditionalModel::paper_gmm();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for &(x, a) in grid {
        let level = NoiseLevel::from_alpha_bar(a).unwrap();
        let cs = model.conditional_score(1, level, &[x]).unwrap()[0];
        let ms = model.marginal_score(level, &[x]).unwrap()[0];
        let p = model.classifier_prob(1, level, &[x]).unwrap();
        worst.0 = worst.0.max((cs - conditional_score(x, a)).abs());
        worst.1 = worst.1.max((ms - marginal_score(x, a)).abs());
        worst.2 = worst.2.max((p - classifier_prob(x, a)).abs());
    }
    worst
}
