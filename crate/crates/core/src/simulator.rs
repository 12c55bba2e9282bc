//! Microscopic Monte Carlo simulation of the clipped LMS system.
//!
//! Each trial draws an unknown FIR system `g`, starts the adaptive filter at
//! `w = 0`, and feeds both with a white input sequence of variance
//! `rho^2 / N`. Per step:
//!
//! ```text
//! d = g.u,  y = w.u,  e = d - clip(y, S) + xi,  w += mu e u
//! ```
//!
//! # Reproducibility
//!
//! Trial `i` draws from `ChaCha8Rng::seed_from_u64(master_seed)` switched to
//! stream `i`, so streams are disjoint and independent of scheduling. Trials
//! may run on any number of threads; results are reduced in trial order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{clip, MacroState, SystemParams};

/// Zero-mean sampling distributions, scaled to an exact target variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Gaussian,
    Uniform,
    /// `±sigma` with equal probability.
    Binary,
}

impl Distribution {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R, variance: f64) -> f64 {
        let sd = variance.sqrt();
        match self {
            Distribution::Gaussian => sd * rng.sample::<f64, _>(StandardNormal),
            Distribution::Uniform => {
                let half = sd * 3f64.sqrt();
                rng.random_range(-half..half)
            }
            Distribution::Binary => {
                if rng.random::<bool>() {
                    sd
                } else {
                    -sd
                }
            }
        }
    }
}

impl FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Distribution::Gaussian),
            "uniform" => Ok(Distribution::Uniform),
            "binary" => Ok(Distribution::Binary),
            other => Err(format!("unknown distribution `{other}` (gaussian | uniform | binary)")),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Gaussian => "gaussian",
            Distribution::Uniform => "uniform",
            Distribution::Binary => "binary",
        })
    }
}

/// How successive input vectors relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputModel {
    /// Shift-register window: each step shifts in one fresh sample.
    #[default]
    TapDelay,
    /// A fresh i.i.d. input vector every step. The window then carries no
    /// memory, which is the regime the order-parameter ODEs assume.
    Independent,
}

impl FromStr for InputModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "tap_delay" => Ok(InputModel::TapDelay),
            "independent" => Ok(InputModel::Independent),
            other => Err(format!("unknown input model `{other}` (tap_delay | independent)")),
        }
    }
}

impl fmt::Display for InputModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputModel::TapDelay => "tap_delay",
            InputModel::Independent => "independent",
        })
    }
}

/// Which ensemble statistics a consumer wants to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMode {
    #[default]
    Mean,
    MedianStd,
    Both,
}

impl StatMode {
    pub fn has_mean(self) -> bool {
        matches!(self, StatMode::Mean | StatMode::Both)
    }

    pub fn has_median_std(self) -> bool {
        matches!(self, StatMode::MedianStd | StatMode::Both)
    }
}

impl FromStr for StatMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(StatMode::Mean),
            "median_std" | "median-std" => Ok(StatMode::MedianStd),
            "both" => Ok(StatMode::Both),
            other => Err(format!("unknown stat mode `{other}` (mean | median_std | both)")),
        }
    }
}

impl fmt::Display for StatMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatMode::Mean => "mean",
            StatMode::MedianStd => "median_std",
            StatMode::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Tap count `N`.
    #[serde(rename = "N")]
    pub taps: usize,
    pub trials: usize,
    /// Horizon in `t = n / N` units.
    pub t_end: f64,
    /// Recording interval in `t` units, rounded to a whole number of steps.
    pub record_every: f64,
    pub master_seed: u64,
    pub g_dist: Distribution,
    pub u_dist: Distribution,
    pub noise_dist: Distribution,
    #[serde(default)]
    pub input: InputModel,
    pub stat_mode: StatMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            taps: 200,
            trials: 500,
            t_end: 50.0,
            record_every: 0.1,
            master_seed: 0,
            g_dist: Distribution::Gaussian,
            u_dist: Distribution::Gaussian,
            noise_dist: Distribution::Gaussian,
            input: InputModel::TapDelay,
            stat_mode: StatMode::Mean,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidParam { field, reason });
        if self.taps == 0 {
            return bad("N", "must be >= 1".into());
        }
        if self.trials == 0 {
            return bad("trials", "must be >= 1".into());
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad("t_end", format!("must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.record_every.is_finite() && self.record_every > 0.0) {
            return bad(
                "record_every",
                format!("must be finite and > 0, got {}", self.record_every),
            );
        }
        Ok(())
    }

    /// Total number of LMS updates, `round(N t_end)`.
    pub fn steps(&self) -> usize {
        (self.taps as f64 * self.t_end).round() as usize
    }

    /// Recording stride in steps.
    pub fn stride(&self) -> usize {
        ((self.taps as f64 * self.record_every).round() as usize).max(1)
    }

    /// Step indices at which statistics are recorded; always includes 0 and
    /// the final step.
    pub fn record_steps(&self) -> Vec<usize> {
        let (steps, stride) = (self.steps(), self.stride());
        let mut out: Vec<usize> = (0..=steps).step_by(stride).collect();
        if out.last() != Some(&steps) {
            out.push(steps);
        }
        out
    }

    /// Input variance `sigma^2 = rho^2 / N`.
    pub fn input_variance(&self, params: &SystemParams) -> f64 {
        params.rho2 / self.taps as f64
    }
}

/// Signals produced by one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub d: f64,
    pub y: f64,
    pub e: f64,
}

/// Concrete vectors of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    g: Vec<f64>,
    w: Vec<f64>,
    // Doubled ring buffer: the window is always buf[head..head + N], newest
    // sample first.
    buf: Vec<f64>,
    head: usize,
    n: u64,
}

impl MicroState {
    /// Builds a state from explicit vectors; `window` is newest-first.
    pub fn from_parts(g: Vec<f64>, w: Vec<f64>, window: &[f64]) -> Self {
        let taps = g.len();
        assert!(taps >= 1, "need at least one tap");
        assert_eq!(w.len(), taps, "w length");
        assert_eq!(window.len(), taps, "window length");
        let mut buf = Vec::with_capacity(2 * taps);
        buf.extend_from_slice(window);
        buf.extend_from_slice(window);
        Self {
            g,
            w,
            buf,
            head: 0,
            n: 0,
        }
    }

    pub fn taps(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Current tap-input vector `[u(n), u(n-1), ..., u(n-N+1)]`.
    pub fn input_window(&self) -> &[f64] {
        &self.buf[self.head..self.head + self.taps()]
    }

    pub fn steps_taken(&self) -> u64 {
        self.n
    }

    /// Shifts `x` in as the newest input sample.
    pub fn push_input(&mut self, x: f64) {
        let taps = self.taps();
        self.head = if self.head == 0 { taps - 1 } else { self.head - 1 };
        self.buf[self.head] = x;
        self.buf[self.head + taps] = x;
    }

    /// Output pair and error for the current window, without updating.
    pub fn observe(&self, params: &SystemParams, xi: f64) -> StepOutcome {
        let u = self.input_window();
        let d = dot(&self.g, u);
        let y = dot(&self.w, u);
        StepOutcome {
            d,
            y,
            e: d - clip(y, params.saturation) + xi,
        }
    }

    /// `w += mu e u` on the current window.
    pub fn apply_update(&mut self, params: &SystemParams, e: f64) {
        let gain = params.mu * e;
        let taps = self.taps();
        let u = &self.buf[self.head..self.head + taps];
        for (wi, ui) in self.w.iter_mut().zip(u) {
            *wi += gain * ui;
        }
        self.n += 1;
    }

    /// LMS update on the current window with noise sample `xi`.
    pub fn adapt(&mut self, params: &SystemParams, xi: f64) -> StepOutcome {
        let out = self.observe(params, xi);
        self.apply_update(params, out.e);
        out
    }

    /// `|g - w|^2 / N`
    pub fn msd_normalized(&self) -> f64 {
        self.g
            .iter()
            .zip(&self.w)
            .map(|(g, w)| (g - w) * (g - w))
            .sum::<f64>()
            / self.taps() as f64
    }

    /// `g.g / N`, the realised per-tap power of the unknown system.
    pub fn g_power(&self) -> f64 {
        dot(&self.g, &self.g) / self.taps() as f64
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Order parameters of a concrete state.
pub fn extract_macro(micro: &MicroState) -> MacroState {
    let n = micro.taps() as f64;
    MacroState::new(dot(&micro.w, &micro.w) / n, dot(&micro.g, &micro.w) / n)
}

/// RNG stream of one trial.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// A trial: its vectors plus its private random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub state: MicroState,
    rng: ChaCha8Rng,
    u_var: f64,
    u_dist: Distribution,
    noise_dist: Distribution,
    input: InputModel,
}

/// Draws `g`, zeroes `w`, and prefills the input window so the first output
/// already uses `N` samples.
pub fn init_trial(cfg: &SimConfig, params: &SystemParams, trial_index: u64) -> Trial {
    let mut rng = trial_rng(cfg.master_seed, trial_index);
    let taps = cfg.taps;
    let g: Vec<f64> = (0..taps)
        .map(|_| cfg.g_dist.sample(&mut rng, params.sigma_g2))
        .collect();
    let u_var = cfg.input_variance(params);
    let window: Vec<f64> = (0..taps).map(|_| cfg.u_dist.sample(&mut rng, u_var)).collect();
    Trial {
        state: MicroState::from_parts(g, vec![0.0; taps], &window),
        rng,
        u_var,
        u_dist: cfg.u_dist,
        noise_dist: cfg.noise_dist,
        input: cfg.input,
    }
}

impl Trial {
    fn draw_noise(&mut self, params: &SystemParams) -> f64 {
        if params.sigma_xi2 > 0.0 {
            self.noise_dist.sample(&mut self.rng, params.sigma_xi2)
        } else {
            0.0
        }
    }

    fn advance_input(&mut self) {
        let fresh = match self.input {
            InputModel::TapDelay => 1,
            InputModel::Independent => self.state.taps(),
        };
        for _ in 0..fresh {
            let x = self.u_dist.sample(&mut self.rng, self.u_var);
            self.state.push_input(x);
        }
    }

    /// Advances the input, then applies one LMS update.
    pub fn step(&mut self, params: &SystemParams) -> StepOutcome {
        self.advance_input();
        let xi = self.draw_noise(params);
        self.state.adapt(params, xi)
    }
}

/// Values recorded for one trial at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSample {
    pub e2: f64,
    pub msd_norm: f64,
    pub q: f64,
    pub r: f64,
    /// Angle against the realised `g`; NaN while `w = 0`.
    pub cos_theta: f64,
}

/// Runs one trial and returns its samples at `cfg.record_steps()`.
///
/// The record at step `n` holds `w(n)` and the error `e(n)` made with it, so
/// the record at `n = 0` is the error of the untrained filter.
pub fn run_trial(cfg: &SimConfig, params: &SystemParams, trial_index: u64) -> Vec<TrialSample> {
    let mut trial = init_trial(cfg, params, trial_index);
    let record = cfg.record_steps();
    let steps = cfg.steps();
    let g_power = trial.state.g_power();
    let mut out = Vec::with_capacity(record.len());
    let mut next = record.iter().copied().peekable();
    for n in 0..=steps {
        // The prefilled window serves step 0.
        if n > 0 {
            trial.advance_input();
        }
        let xi = trial.draw_noise(params);
        let outcome = trial.state.observe(params, xi);
        if next.peek() == Some(&n) {
            next.next();
            let m = extract_macro(&trial.state);
            out.push(TrialSample {
                e2: outcome.e * outcome.e,
                msd_norm: trial.state.msd_normalized(),
                q: m.q,
                r: m.r,
                cos_theta: if m.q > 0.0 {
                    m.r / (g_power * m.q).sqrt()
                } else {
                    f64::NAN
                },
            });
        }
        if n < steps {
            trial.state.apply_update(params, outcome.e);
        }
    }
    out
}

/// Summary of one quantity across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator; 0 for one trial).
    pub std: f64,
    pub median: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub count: usize,
}

impl Stat {
    /// Summarises `values` in the given order.
    pub fn from_values(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Some(Stat {
            mean,
            std,
            median,
            se: std / (n as f64).sqrt(),
            count: n,
        })
    }
}

/// Ensemble statistics at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsemblePoint {
    pub t: f64,
    pub step: usize,
    /// Instantaneous squared error `e(n)^2`.
    pub mse: Stat,
    pub msd_norm: Stat,
    #[serde(rename = "Q")]
    pub q: Stat,
    pub r: Stat,
    /// Over trials with `Q > 0`; `None` while every `w` is zero.
    pub cos_theta: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub trials: usize,
    pub taps: usize,
    pub points: Vec<EnsemblePoint>,
}

impl EnsembleStats {
    /// Point whose time is closest to `t`.
    pub fn at(&self, t: f64) -> Option<&EnsemblePoint> {
        self.points
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

/// Reduces per-trial samples (outer index: trial, in order) into statistics.
pub fn reduce(cfg: &SimConfig, per_trial: &[Vec<TrialSample>]) -> EnsembleStats {
    let record = cfg.record_steps();
    let mut points = Vec::with_capacity(record.len());
    let mut buf = Vec::with_capacity(per_trial.len());
    for (k, &step) in record.iter().enumerate() {
        let mut collect = |f: &dyn Fn(&TrialSample) -> f64| -> Option<Stat> {
            buf.clear();
            buf.extend(per_trial.iter().map(|s| f(&s[k])).filter(|v| !v.is_nan()));
            Stat::from_values(&buf)
        };
        let mse = collect(&|s| s.e2).expect("at least one trial");
        let msd_norm = collect(&|s| s.msd_norm).expect("at least one trial");
        let q = collect(&|s| s.q).expect("at least one trial");
        let r = collect(&|s| s.r).expect("at least one trial");
        let cos_theta = collect(&|s| s.cos_theta);
        points.push(EnsemblePoint {
            t: step as f64 / cfg.taps as f64,
            step,
            mse,
            msd_norm,
            q,
            r,
            cos_theta,
        });
    }
    EnsembleStats {
        trials: per_trial.len(),
        taps: cfg.taps,
        points,
    }
}

/// Per-trial samples for every trial, in trial order, computed on the
/// current rayon pool.
pub fn run_trials(cfg: &SimConfig, params: &SystemParams) -> Result<Vec<Vec<TrialSample>>> {
    params.validate()?;
    cfg.validate()?;
    Ok((0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg, params, i))
        .collect())
}

/// Runs the ensemble on the current rayon pool.
pub fn run_ensemble(cfg: &SimConfig, params: &SystemParams) -> Result<EnsembleStats> {
    let per_trial = run_trials(cfg, params)?;
    Ok(reduce(cfg, &per_trial))
}

/// Runs the ensemble on a dedicated pool of `threads` workers (0 = rayon's
/// default).
pub fn run_ensemble_with_threads(cfg: &SimConfig, params: &SystemParams, threads: usize) -> Result<EnsembleStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParam {
            field: "threads",
            reason: e.to_string(),
        })?;
    pool.install(|| run_ensemble(cfg, params))
}
