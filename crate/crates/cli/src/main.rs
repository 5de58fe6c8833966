use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use guidance_core::checks::suites::{DISCRETIZATION_STEPS, RATIO_SCALES};
use guidance_core::checks::{all_asserted_pass, CheckReport, CheckSummary};
use guidance_core::harness::output::{
    write_check_outputs, write_discretization_csv, write_json, write_schedule_csv, write_trials_csv,
};
use guidance_core::harness::studies::{self, sweep_claims};
use guidance_core::harness::{emit_plot_data, run_gmm_experiment, ExperimentConfig, ScheduleConfig};
use guidance_core::model_io::{load_model, PAPER_PRESET};
use guidance_core::sampler::{GuidanceSpec, TrialRunner};
use guidance_core::{ClassConditionalModel, GuidanceMode};

const THREADS_ENV: &str = "GUIDANCE_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "guidance-lab", version, about = "Guided diffusion sampling on Gaussian mixtures")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory. `schedule` and `sample` also accept a `.csv` file path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core. GUIDANCE_LAB_THREADS takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ScheduleArgs {
    /// Number of steps.
    #[arg(long = "N", default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 2.0)]
    c0: f64,
    #[arg(long, default_value_t = 4.0)]
    c1: f64,
    /// Linear beta schedule from BETA_MIN to BETA_MAX instead of the learning-rate schedule.
    #[arg(long, num_args = 2, value_names = ["BETA_MIN", "BETA_MAX"], allow_negative_numbers = true)]
    linear: Option<Vec<f64>>,
}

impl ScheduleArgs {
    fn config(&self) -> ScheduleConfig {
        match self.linear.as_deref() {
            Some(&[beta_min, beta_max]) => ScheduleConfig::Linear {
                steps: self.steps,
                beta_min,
                beta_max,
            },
            _ => ScheduleConfig::LearningRate {
                steps: self.steps,
                c0: self.c0,
                c1: self.c1,
            },
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Model file path or preset name.
    #[arg(long, default_value = PAPER_PRESET)]
    model: String,
    #[arg(long, default_value_t = 1)]
    class: usize,
}

impl ModelArgs {
    fn load(&self) -> Result<ClassConditionalModel> {
        let model = load_model(&self.model).with_context(|| format!("loading model {}", self.model))?;
        model.check_class(self.class)?;
        Ok(model)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a noise schedule as CSV.
    Schedule(ScheduleArgs),
    /// Run guided and baseline reverse chains at one scale.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, default_value = "cfg")]
        mode: GuidanceMode,
        #[arg(long, default_value_t = 1.0)]
        w: f64,
        #[arg(long, default_value_t = 2000)]
        trials: u64,
        /// Draw baseline noise independently of the guided chain.
        #[arg(long)]
        uncoupled: bool,
    },
    /// Sweep guidance scales and summarize improvement statistics.
    GmmExperiment {
        /// 4000 steps and 10^4 trials per scale.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        uncoupled: bool,
    },
    /// Posterior-expectation identity for the reciprocal classifier probability.
    Martingale {
        #[arg(long, default_value = PAPER_PRESET)]
        model: String,
        #[arg(long, default_value_t = studies::MARTINGALE_SAMPLES)]
        samples: usize,
    },
    /// One-step decrease of the reciprocal classifier probability.
    #[command(name = "theorem1")]
    Decrement {
        #[arg(long, default_value = PAPER_PRESET)]
        model: String,
        #[arg(long, default_value_t = studies::DECREMENT_DT)]
        dt: f64,
        #[arg(long, default_value_t = studies::DECREMENT_REPLICATES)]
        replicates: usize,
    },
    /// Classifier and score bounds on a fixed grid, and the gradient identity.
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Unguided reverse SDE against direct noised draws.
    Equivalence {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = studies::EQUIVALENCE_DT)]
        dt: f64,
        #[arg(long, default_value_t = studies::EQUIVALENCE_PATHS)]
        paths: usize,
    },
    /// KS distance to a fine-step reference as the step count grows.
    Convergence {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = DISCRETIZATION_STEPS)]
        steps: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = studies::CONVERGENCE_SCALES)]
        scales: Vec<f64>,
        #[arg(long, default_value_t = studies::CONVERGENCE_TRIALS)]
        trials: usize,
    },
    /// Tail correction relative to the mean improvement, across scales.
    Ratio {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = RATIO_SCALES)]
        scales: Vec<f64>,
        #[arg(long = "N", default_value_t = studies::RATIO_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = studies::RATIO_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = studies::RATIO_TV_BUDGET)]
        tv_budget: f64,
        #[arg(long, default_value_t = studies::BOOTSTRAP_RESAMPLES)]
        resamples: usize,
    },
}

fn thread_count(flag: usize) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(flag),
    }
}

/// `path` itself when it names a CSV file, else `default_name` inside it.
fn csv_target(out: &Path, default_name: &str) -> Result<PathBuf> {
    if out.extension().is_some_and(|e| e == "csv") {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(out.to_path_buf())
    } else {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out.join(default_name))
    }
}

fn report(dir: &Path, reports: &[CheckReport]) -> Result<bool> {
    let summary: CheckSummary = write_check_outputs(dir, reports)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    for r in reports.iter().filter(|r| r.asserted && !r.pass) {
        eprintln!(
            "FAIL {} estimate={} reference={} rule: {}",
            r.check_name, r.estimate, r.reference, r.tolerance_rule
        );
    }
    Ok(all_asserted_pass(reports))
}

fn run(cli: Cli) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    match cli.command {
        Command::Schedule(args) => {
            let schedule = args.config().build()?;
            let path = csv_target(&out, "schedule.csv")?;
            write_schedule_csv(&path, &schedule)?;
            println!("wrote {} steps to {}", schedule.len(), path.display());
            Ok(true)
        }
        Command::Sample {
            model,
            schedule,
            mode,
            w,
            trials,
            uncoupled,
        } => {
            let m = model.load()?;
            let s = schedule.config().build()?;
            let spec = GuidanceSpec::new(mode, w, model.class)?;
            let records = TrialRunner::new(&m, &s, spec, !uncoupled)?.run_many(seed, trials);
            let path = csv_target(&out, "trials.csv")?;
            write_trials_csv(&path, &records)?;
            let improved = records.iter().filter(|r| r.improved).count();
            println!("{improved}/{trials} trials improved; wrote {}", path.display());
            Ok(true)
        }
        Command::GmmExperiment { paper_scale, uncoupled } => {
            let mut config = match &cli.config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            if paper_scale {
                config = config.paper_scale();
            }
            if let Some(s) = cli.seed {
                config.master_seed = s;
            }
            if cli.out.is_some() || config.output_dir.is_none() {
                config.output_dir = Some(out.clone());
            }
            config.uncoupled |= uncoupled;
            let dir = config.output_dir.clone().expect("set above");
            let rows = run_gmm_experiment(&config)?;
            emit_plot_data(&rows, &dir)?;
            let claims: Vec<CheckReport> = sweep_claims(&rows).into_iter().map(CheckReport::recorded).collect();
            write_check_outputs(&dir, &claims)?;
            for r in &rows {
                println!(
                    "w={:<6} p_improve={:.4} [{:.4}, {:.4}] mean(-1/p)={:.5} +- {:.5}",
                    r.w, r.p_improve, r.ci_lo, r.ci_hi, r.mean_neg_inv_prob, r.stderr
                );
            }
            println!("wrote results to {}", dir.display());
            Ok(true)
        }
        Command::Martingale { model, samples } => {
            let m = load_model(&model)?;
            report(&out, &studies::martingale_battery(&m, samples, seed)?)
        }
        Command::Decrement { model, dt, replicates } => {
            let m = load_model(&model)?;
            report(&out, &studies::decrement_battery(&m, dt, replicates, seed)?)
        }
        Command::Bounds { model } => {
            let m = model.load()?;
            report(&out, &studies::bounds_battery(&m, model.class, seed)?)
        }
        Command::Equivalence { model, dt, paths } => {
            let m = model.load()?;
            report(&out, &studies::equivalence_battery(&m, model.class, dt, paths, seed)?)
        }
        Command::Convergence {
            model,
            steps,
            scales,
            trials,
        } => {
            let m = model.load()?;
            let (tables, reports) = studies::convergence_battery(&m, model.class, &scales, &steps, trials, seed)?;
            let ok = report(&out, &reports)?;
            let rows: Vec<_> = tables.into_iter().flat_map(|t| t.rows).collect();
            write_discretization_csv(&out.join("discretization.csv"), &rows)?;
            Ok(ok)
        }
        Command::Ratio {
            model,
            scales,
            steps,
            trials,
            tv_budget,
            resamples,
        } => {
            if scales.is_empty() {
                bail!("--scales must not be empty");
            }
            let m = model.load()?;
            let (series, reports) =
                studies::ratio_battery(&m, model.class, &scales, steps, trials, tv_budget, resamples, seed)?;
            let ok = report(&out, &reports)?;
            let table: Vec<_> = series
                .iter()
                .map(|&(w, ratio, se)| serde_json::json!({ "w": w, "ratio": ratio, "standard_error": se }))
                .collect();
            write_json(&out.join("ratio.json"), &table)?;
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match thread_count(cli.threads) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
