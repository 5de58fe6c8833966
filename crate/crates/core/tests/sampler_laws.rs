use guidance_core::checks::{improvement_integral, ks_endpoint_distance, TERMINAL_TIME};
use guidance_core::sampler::TrialRunner;
use guidance_core::{ClassConditionalModel, GuidanceSpec, Schedule};

#[test]
fn unguided_endpoint_moments_at_full_resolution() {
    // Class 1 is an equal mixture of N(1, 1) and N(-1, 1): mean 0, variance 2.
    let m = ClassConditionalModel::paper_gmm();
    let schedule = Schedule::learning_rate(4000, 2.0, 4.0).unwrap();
    let runner = TrialRunner::new(&m, &schedule, GuidanceSpec::classifier_free(0.0, 1).unwrap(), true).unwrap();
    let n = 10_000u64;
    let ys: Vec<f64> = (0..n).map(|i| runner.guided_endpoint(21, i)[0]).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // se(mean) = sqrt(2 / n); se(var) = sqrt((mu4 - sigma^4) / n) with mu4 = 10 for this law.
    let se_mean = (2.0 / n as f64).sqrt();
    let se_var = ((10.0 - 4.0) / n as f64).sqrt();
    assert!(mean.abs() < 4.0 * se_mean, "mean {mean}");
    assert!((var - 2.0).abs() < 4.0 * se_var, "variance {var}");
}

#[test]
fn euler_maruyama_ks_shrinks_with_step() {
    let m = ClassConditionalModel::paper_gmm();
    let n = 20_000;
    // The step 5e-2 is coarse enough for the bias to clear KS noise; below 1e-2
    // the distances sit at the sampling floor and may only not increase.
    let d: Vec<(f64, f64)> = [5e-2, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&dt| ks_endpoint_distance(&m, 1, TERMINAL_TIME, dt, n, 8).unwrap())
        .collect();
    let ((coarsest, se0), (finest, se1)) = (d[0], d[3]);
    assert!(coarsest > finest + 3.0 * se0.hypot(se1), "{d:?}");
    for pair in d.windows(2) {
        let ((coarse, se_c), (fine, se_f)) = (pair[0], pair[1]);
        assert!(fine <= coarse + 2.0 * se_c.hypot(se_f), "{d:?}");
    }
}

#[test]
fn improvement_integral_is_positive_increasing_and_step_stable() {
    let m = ClassConditionalModel::paper_gmm();
    let (dt, paths) = (2e-3, 4000);
    let coarse: Vec<(f64, f64)> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&w| improvement_integral(&m, 1, w, dt, paths, 4).unwrap())
        .collect();
    for &(v, se) in &coarse {
        assert!(v > 3.0 * se, "{coarse:?}");
    }
    for pair in coarse.windows(2) {
        assert!(pair[1].0 > pair[0].0, "{coarse:?}");
    }
    let (fine, fine_se) = improvement_integral(&m, 1, 1.0, dt / 2.0, paths, 4).unwrap();
    let (v, se) = coarse[1];
    assert!((fine - v).abs() <= 3.0 * se.hypot(fine_se) + 0.05 * v, "{v} vs {fine}");
    assert_eq!(improvement_integral(&m, 1, 0.0, dt, paths, 4).unwrap(), (0.0, 0.0));
}
