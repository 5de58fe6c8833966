use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_guidance-lab"));
    cmd.args(args).env_remove("GUIDANCE_LAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn schedule_csv() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.csv");
    let out = lab(&["schedule", "--N", "100", "--out", file.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&file);
    assert_eq!(text.lines().count(), 101);
    assert!(text.starts_with("n,beta_n,alpha_bar_n,t_n\n"));
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("100,") && last.ends_with(",0.0001,0.9999"), "{last}");

    let out = lab(&["schedule", "--N", "10", "--linear", "0.0001", "0.02", "--out", dir.path().to_str().unwrap()], &[]);
    assert!(out.status.success());
    assert_eq!(read(&dir.path().join("schedule.csv")).lines().count(), 11);
}

#[test]
fn sample_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "--seed".to_string(),
            "11".into(),
            "sample".into(),
            "--N".into(),
            "60".into(),
            "--trials".into(),
            "300".into(),
            "--w".into(),
            "2".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    let run = |p: &Path, threads: &str| {
        let owned = args(p);
        let refs: Vec<&str> = owned.iter().map(String::as_str).collect();
        let out = lab(&refs, &[("GUIDANCE_LAB_THREADS", threads)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&a, "1");
    run(&b, "4");
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a).lines().count(), 301);
}

#[test]
fn gmm_experiment_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"w_grid": [0.5, 2.0], "trials": 40, "schedule": {"kind": "learning-rate", "steps": 50}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = lab(
        &["--config", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "gmm-experiment"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&out_dir.join("summary.csv")).lines().count(), 3);
    assert_eq!(read(&out_dir.join("trials.csv")).lines().count(), 81);
    assert_eq!(read(&out_dir.join("improvement.csv")).lines().count(), 3);
    assert_eq!(read(&out_dir.join("neg_inv_prob.csv")).lines().count(), 3);
    assert!(read(&out_dir.join("summary.json")).contains("\"n_checks\""));
}

#[test]
fn bounds_pass_and_write_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["bounds", "--out", dir.path().to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&dir.path().join("checks.csv")).lines().count(), 901);
    let summary: serde_json::Value = serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    assert_eq!(summary["n_checks"], 900);
    assert_eq!(summary["n_pass"], 900);
}

#[test]
fn failing_check_sets_exit_code() {
    // Coarse steps make the unguided SDE marginals distinguishable from the truth.
    let dir = tempfile::tempdir().unwrap();
    let out = lab(
        &["equivalence", "--dt", "0.05", "--paths", "20000", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("checks.csv").exists());
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["sample", "--mode", "none", "--w", "1", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = lab(&["bounds", "--model", "/nonexistent/model.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));
    let out = lab(&["bounds"], &[("GUIDANCE_LAB_THREADS", "many")]);
    assert_eq!(out.status.code(), Some(2));
    let out = lab(&["frobnicate"], &[]);
    assert!(!out.status.success());
}
