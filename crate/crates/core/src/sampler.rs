//! Forward and reverse diffusion chains with exact scores.
//!
//! Discrete chains follow the DDPM recursions over a [`Schedule`]; the
//! continuous reverse SDE is integrated with explicit Euler-Maruyama. All
//! randomness comes through a [`NoiseSource`], and guided and baseline chains
//! can be fed identical noise (common random numbers).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{ClassConditionalModel, LeveledModel, MixtureModel, NoiseLevel};
use crate::rng::{domain, NoiseSource, RngStream};
use crate::scalar::Scalar;
use crate::schedule::Schedule;

/// Which score drives the reverse chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    /// Unconditional chain: marginal score.
    None,
    /// Class-conditional chain: conditional score, no guidance.
    Conditional,
    /// Conditional score plus `w` times the classifier gradient.
    Classifier,
    /// `(1 + w)` conditional score minus `w` marginal score.
    #[serde(rename = "cfg", alias = "classifier_free")]
    ClassifierFree,
}

impl GuidanceMode {
    pub fn name(self) -> &'static str {
        match self {
            GuidanceMode::None => "none",
            GuidanceMode::Conditional => "conditional",
            GuidanceMode::Classifier => "classifier",
            GuidanceMode::ClassifierFree => "cfg",
        }
    }
}

impl std::str::FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GuidanceMode::None),
            "conditional" => Ok(GuidanceMode::Conditional),
            "classifier" => Ok(GuidanceMode::Classifier),
            "cfg" | "classifier_free" | "classifier-free" => Ok(GuidanceMode::ClassifierFree),
            other => Err(Error::InvalidGuidance(format!("unknown guidance mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceSpec<T> {
    mode: GuidanceMode,
    w: T,
    class: usize,
}

impl<T: Scalar> GuidanceSpec<T> {
    pub fn new(mode: GuidanceMode, w: T, class: usize) -> Result<Self> {
        if !(w >= T::zero() && w.is_finite()) {
            return Err(Error::InvalidGuidance(format!("scale must be finite and >= 0, got {w}")));
        }
        if matches!(mode, GuidanceMode::None | GuidanceMode::Conditional) && w != T::zero() {
            return Err(Error::InvalidGuidance(format!(
                "mode {} takes no guidance scale, got w = {w}",
                mode.name()
            )));
        }
        Ok(Self { mode, w, class })
    }

    pub fn classifier_free(w: T, class: usize) -> Result<Self> {
        Self::new(GuidanceMode::ClassifierFree, w, class)
    }

    pub fn mode(&self) -> GuidanceMode {
        self.mode
    }

    pub fn w(&self) -> T {
        self.w
    }

    pub fn class(&self) -> usize {
        self.class
    }

    /// Same mode and class with guidance switched off (`w = 0`).
    pub fn unguided(&self) -> Self {
        Self { w: T::zero(), ..*self }
    }

    /// Writes the guided score at `x` into `out`; clobbers `scratch`.
    #[inline]
    pub fn score_into(&self, leveled: &LeveledModel<T>, x: &[T], out: &mut [T], scratch: &mut [T]) {
        let c = self.class;
        match self.mode {
            GuidanceMode::None => leveled.marginal_score_into(x, out),
            GuidanceMode::Conditional => leveled.conditional_score_into(c, x, out),
            GuidanceMode::Classifier => {
                leveled.conditional_score_into(c, x, out);
                leveled.marginal_score_into(x, scratch);
                for (o, &m) in out.iter_mut().zip(scratch.iter()) {
                    *o = *o + self.w * (*o - m);
                }
            }
            GuidanceMode::ClassifierFree => {
                leveled.conditional_score_into(c, x, out);
                leveled.marginal_score_into(x, scratch);
                let w1 = T::one() + self.w;
                for (o, &m) in out.iter_mut().zip(scratch.iter()) {
                    *o = w1 * *o - self.w * m;
                }
            }
        }
    }
}

/// States of one simulated path together with their noise levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub levels: Vec<NoiseLevel<T>>,
    pub states: Vec<Vec<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&[T]> {
        self.states.last().map(Vec::as_slice)
    }
}

fn fill_gaussian<T: Scalar, N: NoiseSource + ?Sized>(noise: &mut N, out: &mut [T]) {
    out.iter_mut().for_each(|o| *o = T::of(noise.gaussian()));
}

/// `X_n = sqrt(1 - beta_n) X_{n-1} + sqrt(beta_n) Z_n` for `n = 1..=N`.
pub fn forward_chain<T: Scalar, N: NoiseSource + ?Sized>(
    model: &MixtureModel<T>,
    schedule: &Schedule<T>,
    x0: &[T],
    noise: &mut N,
) -> Result<Trajectory<T>> {
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut z = vec![T::zero(); x.len()];
    let mut states = Vec::with_capacity(schedule.len());
    let mut levels = Vec::with_capacity(schedule.len());
    for (n, &beta) in schedule.betas().iter().enumerate() {
        fill_gaussian(noise, &mut z);
        let keep = (T::one() - beta).sqrt();
        let spread = beta.sqrt();
        for (xi, &zi) in x.iter_mut().zip(&z) {
            *xi = keep * *xi + spread * zi;
        }
        states.push(x.clone());
        levels.push(schedule.level_of(n + 1)?);
    }
    Ok(Trajectory { levels, states })
}

/// A model noised at every level of a schedule, reusable across chains.
#[derive(Clone, Debug)]
pub struct ReversePlan<T> {
    schedule: Schedule<T>,
    dim: usize,
    num_classes: usize,
    /// `levels[n - 1]` is the model at `alpha_bar_n`.
    levels: Vec<LeveledModel<T>>,
}

impl<T: Scalar> ReversePlan<T> {
    pub fn new(model: &ClassConditionalModel<T>, schedule: &Schedule<T>) -> Self {
        let levels = schedule
            .alpha_bars()
            .iter()
            .map(|&a| model.at_level(NoiseLevel::from_alpha_bar(a).expect("schedule levels lie in (0, 1)")))
            .collect();
        Self {
            schedule: schedule.clone(),
            dim: model.dim(),
            num_classes: model.num_classes(),
            levels,
        }
    }

    pub fn schedule(&self) -> &Schedule<T> {
        &self.schedule
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The model at `alpha_bar_1`, where chains stop.
    pub fn endpoint_model(&self) -> &LeveledModel<T> {
        &self.levels[0]
    }

    fn check(&self, guidance: &GuidanceSpec<T>) -> Result<()> {
        if guidance.class() >= self.num_classes {
            return Err(Error::ClassOutOfRange {
                class: guidance.class(),
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }

    /// Runs `Y_N ~ N(0, I)` and
    /// `Y_{n-1} = (Y_n + beta_n s_n(Y_n)) / sqrt(1 - beta_n) + sqrt(beta_n) Z_n`
    /// for `n = N..=2`, returning `Y_1`.
    pub fn run<N: NoiseSource + ?Sized>(&self, guidance: &GuidanceSpec<T>, noise: &mut N) -> Result<Vec<T>> {
        self.check(guidance)?;
        let d = self.dim;
        let mut y = vec![T::zero(); d];
        fill_gaussian(noise, &mut y);
        let mut score = vec![T::zero(); d];
        let mut scratch = vec![T::zero(); d];
        let mut z = vec![T::zero(); d];
        let betas = self.schedule.betas();
        for n in (2..=betas.len()).rev() {
            let beta = betas[n - 1];
            guidance.score_into(&self.levels[n - 1], &y, &mut score, &mut scratch);
            fill_gaussian(noise, &mut z);
            let inv_keep = (T::one() - beta).sqrt().recip();
            let spread = beta.sqrt();
            for ((yi, &si), &zi) in y.iter_mut().zip(&score).zip(&z) {
                *yi = (*yi + beta * si) * inv_keep + spread * zi;
            }
        }
        Ok(y)
    }
}

/// Reverse chain from pure noise to step 1 under `guidance`.
pub fn reverse_chain<T: Scalar, N: NoiseSource + ?Sized>(
    model: &ClassConditionalModel<T>,
    schedule: &Schedule<T>,
    guidance: &GuidanceSpec<T>,
    noise: &mut N,
) -> Result<Vec<T>> {
    ReversePlan::new(model, schedule).run(guidance, noise)
}

/// One guided-versus-baseline comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub master_seed: u64,
    pub trial_index: u64,
    pub w: f64,
    pub y_guided: Vec<f64>,
    pub y_baseline: Vec<f64>,
    pub p_guided: f64,
    pub p_baseline: f64,
    pub log_p_guided: f64,
    pub log_p_baseline: f64,
    /// `p_guided >= p_baseline`.
    pub improved: bool,
}

impl TrialRecord {
    /// `p_guided^{-1}` computed from the log probability.
    pub fn inv_p_guided(&self) -> f64 {
        (-self.log_p_guided).exp()
    }

    pub fn inv_p_baseline(&self) -> f64 {
        (-self.log_p_baseline).exp()
    }
}

/// Runs coupled guided/baseline trials for one guidance setting.
///
/// The guided chain uses `guidance`; the baseline uses the same mode with
/// `w = 0`. When coupled, both chains replay the same stream
/// `(master_seed, [TRIAL, bits(w), class, trial_index])`, so they share the
/// initial draw and every `Z_n`. Endpoints are scored with the classifier at
/// `alpha_bar_1`.
#[derive(Clone, Debug)]
pub struct TrialRunner<T> {
    plan: ReversePlan<T>,
    guidance: GuidanceSpec<T>,
    coupled: bool,
}

impl<T: Scalar> TrialRunner<T> {
    pub fn new(
        model: &ClassConditionalModel<T>,
        schedule: &Schedule<T>,
        guidance: GuidanceSpec<T>,
        coupled: bool,
    ) -> Result<Self> {
        model.check_class(guidance.class())?;
        Ok(Self {
            plan: ReversePlan::new(model, schedule),
            guidance,
            coupled,
        })
    }

    pub fn from_plan(plan: ReversePlan<T>, guidance: GuidanceSpec<T>, coupled: bool) -> Result<Self> {
        plan.check(&guidance)?;
        Ok(Self { plan, guidance, coupled })
    }

    pub fn guidance(&self) -> &GuidanceSpec<T> {
        &self.guidance
    }

    pub fn plan(&self) -> &ReversePlan<T> {
        &self.plan
    }

    fn stream_key(&self, base: u64, trial_index: u64) -> [u64; 4] {
        [
            base,
            self.guidance.w().as_f64().to_bits(),
            self.guidance.class() as u64,
            trial_index,
        ]
    }

    /// The guided endpoint of trial `trial_index` alone, without the baseline.
    pub fn guided_endpoint(&self, master_seed: u64, trial_index: u64) -> Vec<T> {
        let mut stream = RngStream::new(master_seed, &self.stream_key(domain::TRIAL, trial_index));
        self.plan.run(&self.guidance, &mut stream).expect("class checked at construction")
    }

    pub fn run(&self, master_seed: u64, trial_index: u64) -> TrialRecord {
        let mut stream = RngStream::new(master_seed, &self.stream_key(domain::TRIAL, trial_index));
        let mut baseline_stream = if self.coupled {
            stream.clone()
        } else {
            RngStream::new(master_seed, &self.stream_key(domain::TRIAL_BASELINE, trial_index))
        };
        let guided = self.plan.run(&self.guidance, &mut stream).expect("class checked at construction");
        let baseline = self
            .plan
            .run(&self.guidance.unguided(), &mut baseline_stream)
            .expect("class checked at construction");
        let endpoint = self.plan.endpoint_model();
        let c = self.guidance.class();
        let log_p_guided = endpoint.log_classifier_prob(c, &guided).as_f64();
        let log_p_baseline = endpoint.log_classifier_prob(c, &baseline).as_f64();
        TrialRecord {
            master_seed,
            trial_index,
            w: self.guidance.w().as_f64(),
            y_guided: guided.iter().map(|v| v.as_f64()).collect(),
            y_baseline: baseline.iter().map(|v| v.as_f64()).collect(),
            p_guided: log_p_guided.exp(),
            p_baseline: log_p_baseline.exp(),
            log_p_guided,
            log_p_baseline,
            improved: log_p_guided >= log_p_baseline,
        }
    }

    /// Trials `0..count`, evaluated on the rayon pool and returned in index order.
    pub fn run_many(&self, master_seed: u64, count: u64) -> Vec<TrialRecord> {
        (0..count)
            .into_par_iter()
            .map(|i| self.run(master_seed, i))
            .collect()
    }
}

/// Coupled classifier-free trial at scale `w` for class `c`.
pub fn coupled_pair<T: Scalar>(
    model: &ClassConditionalModel<T>,
    schedule: &Schedule<T>,
    w: T,
    c: usize,
    master_seed: u64,
    trial_index: u64,
) -> Result<TrialRecord> {
    let runner = TrialRunner::new(model, schedule, GuidanceSpec::classifier_free(w, c)?, true)?;
    Ok(runner.run(master_seed, trial_index))
}

/// Time points of an Euler-Maruyama integration on `[t_start, t_end]`.
///
/// Points are `t_start + k dt`; the final step is shortened to land exactly
/// on `t_end`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid<T> {
    points: Vec<T>,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn uniform(t_start: T, t_end: T, dt: T) -> Result<Self> {
        if !(t_start > T::zero() && t_start < t_end && t_end <= T::one()) {
            return Err(Error::InvalidTimes(format!(
                "need 0 < t_start < t_end <= 1, got t_start = {t_start}, t_end = {t_end}"
            )));
        }
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(Error::InvalidTimes(format!("dt must be positive, got {dt}")));
        }
        let slack = dt * T::of(1e-9);
        let mut points = vec![t_start];
        let mut k = 1.0;
        loop {
            let t = t_start + dt * T::of(k);
            if t >= t_end - slack {
                points.push(t_end);
                break;
            }
            points.push(t);
            k += 1.0;
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// `(t, h)` for every step.
    pub fn steps(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1] - w[0]))
    }

    pub fn num_steps(&self) -> usize {
        self.points.len() - 1
    }
}

/// One Euler-Maruyama step of the guided reverse SDE
/// `dY = (Y/2 + (1 + w) s(Y|c) - w s(Y)) dt/t + dB/sqrt(t)`
/// with scores at reverse time `t` (`alpha_bar = t`).
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn euler_maruyama_step<T: Scalar, N: NoiseSource + ?Sized>(
    leveled: &LeveledModel<T>,
    c: usize,
    w: T,
    t: T,
    h: T,
    y: &mut [T],
    noise: &mut N,
    score: &mut [T],
    scratch: &mut [T],
) {
    leveled.conditional_score_into(c, y, score);
    if w != T::zero() {
        leveled.marginal_score_into(y, scratch);
        let w1 = T::one() + w;
        for (s, &m) in score.iter_mut().zip(scratch.iter()) {
            *s = w1 * *s - w * m;
        }
    }
    let ratio = h / t;
    let spread = ratio.sqrt();
    let half = T::of(0.5);
    for (yi, &si) in y.iter_mut().zip(score.iter()) {
        *yi = *yi + (half * *yi + si) * ratio + spread * T::of(noise.gaussian());
    }
}

fn check_em_inputs<T: Scalar>(model: &ClassConditionalModel<T>, c: usize, w: T, dim: usize) -> Result<()> {
    model.check_class(c)?;
    if dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: dim,
        });
    }
    if !(w >= T::zero() && w.is_finite()) {
        return Err(Error::InvalidGuidance(format!("scale must be finite and >= 0, got {w}")));
    }
    Ok(())
}

/// Single-path Euler-Maruyama integration of the guided reverse SDE.
#[allow(clippy::too_many_arguments)]
pub fn euler_maruyama_reverse<T: Scalar, N: NoiseSource + ?Sized>(
    model: &ClassConditionalModel<T>,
    c: usize,
    w: T,
    t_start: T,
    t_end: T,
    dt: T,
    y_start: &[T],
    noise: &mut N,
) -> Result<Trajectory<T>> {
    check_em_inputs(model, c, w, y_start.len())?;
    let grid = TimeGrid::uniform(t_start, t_end, dt)?;
    let d = y_start.len();
    let mut y = y_start.to_vec();
    let mut score = vec![T::zero(); d];
    let mut scratch = vec![T::zero(); d];
    let mut levels = vec![NoiseLevel::for_reverse_time(t_start)?];
    let mut states = vec![y.clone()];
    for (t, h) in grid.steps() {
        let leveled = model.at_level(NoiseLevel::for_reverse_time(t)?);
        euler_maruyama_step(&leveled, c, w, t, h, &mut y, noise, &mut score, &mut scratch);
        levels.push(NoiseLevel::for_reverse_time((t + h).min(T::one()))?);
        states.push(y.clone());
    }
    Ok(Trajectory { levels, states })
}

/// Many reverse-SDE paths advanced in lockstep, each with its own stream.
///
/// Path `i` of a batch produces bit-for-bit the same states as
/// [`euler_maruyama_reverse`] driven by the same stream.
pub struct PathEnsemble<T> {
    dim: usize,
    states: Vec<T>,
    streams: Vec<RngStream>,
}

const ENSEMBLE_CHUNK: usize = 1024;

impl<T: Scalar> PathEnsemble<T> {
    /// Paths keyed `(seed, [key..., i])`, started from `start(i, stream)`.
    pub fn new(
        dim: usize,
        n_paths: usize,
        seed: u64,
        key: &[u64],
        mut start: impl FnMut(&mut RngStream, &mut [T]),
    ) -> Self {
        let mut states = vec![T::zero(); dim * n_paths];
        let mut path_key = key.to_vec();
        path_key.push(0);
        let streams = states
            .chunks_mut(dim)
            .enumerate()
            .map(|(i, y)| {
                *path_key.last_mut().expect("nonempty key") = i as u64;
                let mut stream = RngStream::new(seed, &path_key);
                start(&mut stream, y);
                stream
            })
            .collect();
        Self { dim, states, streams }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[T]> {
        self.states.chunks(self.dim)
    }

    /// First coordinate of every path.
    pub fn first_coordinates(&self) -> Vec<T> {
        self.states.iter().step_by(self.dim).copied().collect()
    }

    /// Advances every path by one step from `t` to `t + h`.
    pub fn step(&mut self, model: &ClassConditionalModel<T>, c: usize, w: T, t: T, h: T) -> Result<()> {
        self.step_observed(model, c, w, t, h, &mut [], |_, _| 0.0)
    }

    /// Like [`step`](Self::step), first adding `observe(model at t, y_i)` to
    /// `acc[i]` for every path. An empty `acc` skips the observation.
    #[allow(clippy::too_many_arguments)]
    pub fn step_observed<F>(
        &mut self,
        model: &ClassConditionalModel<T>,
        c: usize,
        w: T,
        t: T,
        h: T,
        acc: &mut [f64],
        observe: F,
    ) -> Result<()>
    where
        F: Fn(&LeveledModel<T>, &[T]) -> f64 + Sync,
    {
        check_em_inputs(model, c, w, self.dim)?;
        let observing = !acc.is_empty();
        if observing && acc.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: acc.len(),
            });
        }
        let leveled = model.at_level(NoiseLevel::for_reverse_time(t)?);
        let d = self.dim;
        let acc_chunk = if observing { ENSEMBLE_CHUNK } else { usize::MAX };
        let mut acc_parts: Vec<&mut [f64]> = if observing {
            acc.chunks_mut(acc_chunk).collect()
        } else {
            Vec::new()
        };
        acc_parts.resize_with(self.len().div_ceil(ENSEMBLE_CHUNK), Default::default);
        self.states
            .par_chunks_mut(d * ENSEMBLE_CHUNK)
            .zip(self.streams.par_chunks_mut(ENSEMBLE_CHUNK))
            .zip(acc_parts.into_par_iter())
            .for_each(|((states, streams), acc)| {
                let mut score = vec![T::zero(); d];
                let mut scratch = vec![T::zero(); d];
                for (i, (y, stream)) in states.chunks_mut(d).zip(streams.iter_mut()).enumerate() {
                    if observing {
                        acc[i] += observe(&leveled, y);
                    }
                    euler_maruyama_step(&leveled, c, w, t, h, y, stream, &mut score, &mut scratch);
                }
            });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::rng::{ScriptedNoise, ZeroNoise};

    type Model = ClassConditionalModel<f64>;

    fn preset() -> Model {
        Model::paper_gmm()
    }

    #[test]
    fn guidance_spec_validation_and_parsing() {
        assert!(GuidanceSpec::new(GuidanceMode::None, 1.0, 0).is_err());
        assert!(GuidanceSpec::new(GuidanceMode::ClassifierFree, -1.0, 0).is_err());
        assert!(GuidanceSpec::new(GuidanceMode::ClassifierFree, f64::INFINITY, 0).is_err());
        assert!(GuidanceSpec::new(GuidanceMode::None, 0.0, 0).is_ok());
        assert_eq!("cfg".parse::<GuidanceMode>().unwrap(), GuidanceMode::ClassifierFree);
        assert_eq!("classifier".parse::<GuidanceMode>().unwrap(), GuidanceMode::Classifier);
        assert!("bogus".parse::<GuidanceMode>().is_err());
    }

    #[test]
    fn forward_chain_zero_noise_fixed_point() {
        let m = preset();
        let s = Schedule::learning_rate(50, 2.0, 4.0).unwrap();
        let traj = forward_chain(m.class_mixture(1).unwrap(), &s, &[0.0], &mut ZeroNoise).unwrap();
        assert_eq!(traj.len(), 50);
        assert!(traj.states.iter().all(|x| x[0] == 0.0));
        assert!(forward_chain(m.class_mixture(1).unwrap(), &s, &[0.0, 1.0], &mut ZeroNoise).is_err());
    }

    #[test]
    fn forward_chain_single_step_by_hand() {
        let m = preset();
        let s = Schedule::linear_beta(1, 0.19, 0.19).unwrap();
        let mut noise = ScriptedNoise::new(vec![2.0]);
        let traj = forward_chain(m.class_mixture(0).unwrap(), &s, &[1.0], &mut noise).unwrap();
        assert_relative_eq!(traj.states[0][0], 0.9 + 0.19f64.sqrt() * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn forward_chain_marginal_moments() {
        let m = preset();
        let s = Schedule::learning_rate(40, 2.0, 4.0).unwrap();
        let x0 = 1.5;
        let reps = 100_000;
        let mut sums = vec![(0.0, 0.0); 40];
        for r in 0..reps {
            let mut rng = RngStream::new(5, &[domain::FORWARD, r]);
            let traj = forward_chain(m.class_mixture(0).unwrap(), &s, &[x0], &mut rng).unwrap();
            for (acc, x) in sums.iter_mut().zip(&traj.states) {
                acc.0 += x[0];
                acc.1 += x[0] * x[0];
            }
        }
        for (n, (sum, sq)) in sums.iter().enumerate() {
            let a = s.alpha_bars()[n];
            let mean = sum / reps as f64;
            let var = sq / reps as f64 - mean * mean;
            let var_true = 1.0 - a;
            assert!((mean - a.sqrt() * x0).abs() < 3.0 * (var_true / reps as f64).sqrt(), "n={n}");
            // Var of the sample variance for a Gaussian is 2 sigma^4 / n.
            assert!((var - var_true).abs() < 3.0 * var_true * (2.0 / reps as f64).sqrt(), "n={n}");
        }
    }

    #[test]
    fn cfg_at_zero_scale_is_bitwise_conditional() {
        let m = preset();
        let s = Schedule::learning_rate(200, 2.0, 4.0).unwrap();
        let cond = GuidanceSpec::new(GuidanceMode::Conditional, 0.0, 1).unwrap();
        let cfg = GuidanceSpec::classifier_free(0.0, 1).unwrap();
        let cls = GuidanceSpec::new(GuidanceMode::Classifier, 0.0, 1).unwrap();
        for seed in 0..20 {
            let run = |g: &GuidanceSpec<f64>| {
                reverse_chain(&m, &s, g, &mut RngStream::new(seed, &[]))
                    .unwrap()[0]
                    .to_bits()
            };
            assert_eq!(run(&cfg), run(&cond));
            assert_eq!(run(&cls), run(&cond));
        }
    }

    #[test]
    fn classifier_and_classifier_free_agree_under_exact_scores() {
        let m = preset();
        let s = Schedule::learning_rate(500, 2.0, 4.0).unwrap();
        let plan = ReversePlan::new(&m, &s);
        for w in [0.5, 2.0, 7.0] {
            let cfg = GuidanceSpec::new(GuidanceMode::ClassifierFree, w, 1).unwrap();
            let cls = GuidanceSpec::new(GuidanceMode::Classifier, w, 1).unwrap();
            for seed in 0..20 {
                let a = plan.run(&cfg, &mut RngStream::new(seed, &[])).unwrap()[0];
                let b = plan.run(&cls, &mut RngStream::new(seed, &[])).unwrap()[0];
                assert!((a - b).abs() <= 1e-10, "w={w} seed={seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn coupled_pair_at_zero_scale_is_identical_and_deterministic() {
        let m = preset();
        let s = Schedule::learning_rate(100, 2.0, 4.0).unwrap();
        let rec = coupled_pair(&m, &s, 0.0, 1, 42, 7).unwrap();
        assert_eq!(rec.p_guided, rec.p_baseline);
        assert!(rec.improved);
        let a = coupled_pair(&m, &s, 3.0, 1, 42, 7).unwrap();
        let b = coupled_pair(&m, &s, 3.0, 1, 42, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.improved, a.p_guided >= a.p_baseline);
        assert!(a.p_guided > 0.0 && a.p_guided < 1.0);
        assert_ne!(a, coupled_pair(&m, &s, 3.0, 1, 42, 8).unwrap());
    }

    #[test]
    fn uncoupled_baseline_uses_its_own_stream() {
        let m = preset();
        let s = Schedule::learning_rate(100, 2.0, 4.0).unwrap();
        let g = GuidanceSpec::classifier_free(0.0, 1).unwrap();
        let coupled = TrialRunner::new(&m, &s, g, true).unwrap().run(1, 0);
        let uncoupled = TrialRunner::new(&m, &s, g, false).unwrap().run(1, 0);
        assert_eq!(coupled.y_guided, uncoupled.y_guided);
        assert_ne!(uncoupled.y_guided, uncoupled.y_baseline);
    }

    #[test]
    fn run_many_matches_individual_runs() {
        let m = preset();
        let s = Schedule::learning_rate(60, 2.0, 4.0).unwrap();
        let runner = TrialRunner::new(&m, &s, GuidanceSpec::classifier_free(1.5, 1).unwrap(), true).unwrap();
        let many = runner.run_many(9, 16);
        for (i, rec) in many.iter().enumerate() {
            assert_eq!(rec, &runner.run(9, i as u64));
        }
    }

    #[test]
    fn time_grid_lands_on_end() {
        let g = TimeGrid::uniform(0.01, 0.5, 0.1).unwrap();
        assert_eq!(g.points().first(), Some(&0.01));
        assert_eq!(g.points().last(), Some(&0.5));
        assert_eq!(g.num_steps(), 5);
        let (_, last_h) = g.steps().last().unwrap();
        assert_relative_eq!(last_h, 0.09, epsilon = 1e-12);
        assert!(TimeGrid::uniform(0.0, 0.5, 0.1).is_err());
        assert!(TimeGrid::uniform(0.5, 0.4, 0.1).is_err());
        assert!(TimeGrid::uniform(0.1, 1.1, 0.1).is_err());
        assert!(TimeGrid::uniform(0.1, 0.5, 0.0).is_err());
    }

    #[test]
    fn euler_maruyama_drift_ignores_scale_at_symmetric_point() {
        let m = preset();
        let a = euler_maruyama_reverse(&m, 1, 0.0, 0.5, 0.6, 0.1, &[0.0], &mut ZeroNoise).unwrap();
        let b = euler_maruyama_reverse(&m, 1, 5.0, 0.5, 0.6, 0.1, &[0.0], &mut ZeroNoise).unwrap();
        assert_eq!(a.states[1], b.states[1]);
        assert_eq!(a.states[1][0], 0.0);
    }

    #[test]
    fn euler_maruyama_single_step_by_hand() {
        let m = preset();
        let dt = 1e-3;
        let traj = euler_maruyama_reverse(&m, 1, 0.0, 0.5, 0.5 + dt, dt, &[1.0], &mut ZeroNoise).unwrap();
        // Conditional score of the class-1 mixture at alpha_bar = 0.5.
        let r = 0.5f64.sqrt();
        let score = -1.0 + r * (r * 1.0).tanh();
        let expected = 1.0 + (0.5 + score) * dt / 0.5;
        assert_relative_eq!(traj.states[1][0], expected, epsilon = 1e-15);
        assert_eq!(traj.levels.len(), 2);
        assert!(euler_maruyama_reverse(&m, 1, 0.0, 0.0, 0.5, dt, &[1.0], &mut ZeroNoise).is_err());
        assert!(euler_maruyama_reverse(&m, 3, 0.0, 0.1, 0.5, dt, &[1.0], &mut ZeroNoise).is_err());
    }

    #[test]
    fn ensemble_matches_single_path_integration() {
        let m = preset();
        let grid = TimeGrid::uniform(0.05, 0.4, 0.01).unwrap();
        let key = [domain::PATHS, 1];
        let start = m.class_mixture(1).unwrap().noised(NoiseLevel::for_reverse_time(0.05).unwrap());
        let mut ens = PathEnsemble::new(1, 5, 3, &key, |rng, y| start.sample_into(rng, y));
        for (t, h) in grid.steps() {
            ens.step(&m, 1, 2.0, t, h).unwrap();
        }
        for i in 0..5 {
            let mut rng = RngStream::new(3, &[domain::PATHS, 1, i as u64]);
            let y0 = start.sample(&mut rng);
            let traj = euler_maruyama_reverse(&m, 1, 2.0, 0.05, 0.4, 0.01, &y0, &mut rng).unwrap();
            assert_eq!(traj.last().unwrap(), ens.state(i));
        }
    }
}
