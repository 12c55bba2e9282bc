use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use satlms::model::parse_saturation;
use satlms::moments::closed_form;
use satlms::oracle::check_all_with;
use satlms::simulator::Stat;
use satlms::*;

use crate::args::*;
use crate::config::Resolver;
use crate::manifest::RunManifest;
use crate::UsageError;

/// Envelope half-width of the compare verdict, in standard errors.
pub const ENVELOPE_SE: f64 = 3.0;
/// Fraction of (t, quantity) pairs that must fall inside the envelope.
pub const REQUIRED_FRACTION: f64 = 0.95;
/// Below this many trials standard errors are too unreliable to judge by.
pub const MIN_POWERED_TRIALS: usize = 30;

fn usage(e: satlms::Error) -> UsageError {
    UsageError(e.to_string())
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// `<out>.json`, the manifest sidecar of an output file.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn finish(out: Option<&Path>, manifest: RunManifest) -> Result<()> {
    if let Some(p) = out {
        manifest.write(&sidecar(p, ".json"))?;
    }
    Ok(())
}

/// Shortest round-trip decimal; exponent form outside `[1e-5, 1e16)`.
#[derive(Debug, Clone, Copy)]
pub struct Num(pub f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| Num(v).to_string()).unwrap_or_default()
}

pub fn resolve_params(r: &Resolver, f: &ModelFlags) -> Result<SystemParams, UsageError> {
    let d = SystemParams::default();
    let p = SystemParams::new(
        r.value(f.rho2, "rho2", d.rho2)?,
        r.value(f.sigma_g2, "sigma-g2", d.sigma_g2)?,
        r.value(f.sigma_xi2, "sigma-xi2", d.sigma_xi2)?,
        r.value_with(f.saturation, "S", d.saturation, parse_saturation)?,
        r.value(f.mu, "mu", d.mu)?,
    );
    p.validate().map_err(usage)?;
    Ok(p)
}

pub fn resolve_sim(r: &Resolver, h: &HorizonFlag, f: &SimFlags) -> Result<SimConfig, UsageError> {
    let d = SimConfig::default();
    let cfg = SimConfig {
        taps: r.value(f.taps, "N", d.taps)?,
        trials: r.value(f.trials, "trials", d.trials)?,
        t_end: r.value(h.t_end, "t-end", d.t_end)?,
        record_every: r.value(f.record_every, "record-every", d.record_every)?,
        master_seed: r.value(f.seed, "seed", d.master_seed)?,
        g_dist: r.value(f.g_dist, "g-dist", d.g_dist)?,
        u_dist: r.value(f.u_dist, "u-dist", d.u_dist)?,
        noise_dist: r.value(f.noise_dist, "noise-dist", d.noise_dist)?,
        input: r.value(f.input, "input", d.input)?,
        stat_mode: r.value(f.stat, "stat", d.stat_mode)?,
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn theory(args: &TheoryArgs) -> Result<i32> {
    let start = Instant::now();
    let r = Resolver::from_path(args.io.config.as_deref())?;
    let params = resolve_params(&r, &args.model)?;
    let d = IntegratorConfig::default();
    let cfg = IntegratorConfig::new(
        r.value(args.integrator.dt, "dt", d.dt)?,
        r.value(args.horizon.t_end, "t-end", d.t_end)?,
        r.value(args.record_stride, "record-stride", d.record_stride)?,
    );
    cfg.validate().map_err(usage)?;
    let traj = integrate(&params, MacroState::ORIGIN, &cfg)?;

    let mut w = open_out(args.io.out.as_deref())?;
    writeln!(w, "t,Q,r,mse,msd_norm,cos_theta")?;
    for p in &traj.points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            Num(p.t),
            Num(p.state.q),
            Num(p.state.r),
            Num(p.mse),
            Num(p.msd_norm),
            cell(p.cos_theta)
        )?;
    }
    w.flush()?;
    if traj.q_clamped {
        eprintln!("warning: Q went negative by round-off and was clamped to 0");
    }
    let mut m = RunManifest::new("theory", start);
    m.params = Some(params);
    m.integrator = Some(cfg);
    m.extra = json!({ "q_clamped": traj.q_clamped });
    finish(args.io.out.as_deref(), m)?;
    Ok(0)
}

fn stat_header(name: &str, mode: StatMode) -> String {
    let mut cols = Vec::new();
    if mode.has_mean() {
        cols.push(format!("{name}_mean"));
    }
    if mode.has_median_std() {
        cols.push(format!("{name}_median"));
        cols.push(format!("{name}_std"));
    }
    cols.join(",")
}

fn stat_cells(s: &Stat, mode: StatMode) -> String {
    let mut cols = Vec::new();
    if mode.has_mean() {
        cols.push(Num(s.mean).to_string());
    }
    if mode.has_median_std() {
        cols.push(Num(s.median).to_string());
        cols.push(Num(s.std).to_string());
    }
    cols.join(",")
}

pub fn simulate(args: &SimulateArgs) -> Result<i32> {
    let start = Instant::now();
    let r = Resolver::from_path(args.io.config.as_deref())?;
    let params = resolve_params(&r, &args.model)?;
    let cfg = resolve_sim(&r, &args.horizon, &args.sim)?;
    let stats = run_ensemble(&cfg, &params)?;

    let mode = cfg.stat_mode;
    let mut w = open_out(args.io.out.as_deref())?;
    writeln!(
        w,
        "t,{},{},Q_mean,r_mean",
        stat_header("mse", mode),
        stat_header("msd", mode)
    )?;
    for p in &stats.points {
        writeln!(
            w,
            "{},{},{},{},{}",
            Num(p.t),
            stat_cells(&p.mse, mode),
            stat_cells(&p.msd_norm, mode),
            Num(p.q.mean),
            Num(p.r.mean)
        )?;
    }
    w.flush()?;
    let mut m = RunManifest::new("simulate", start);
    m.params = Some(params);
    m.seed = Some(cfg.master_seed);
    m.sim = Some(cfg);
    finish(args.io.out.as_deref(), m)?;
    Ok(0)
}

/// Deviation summary of a theory/simulation comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub points: usize,
    pub trials: usize,
    pub envelope_se: f64,
    pub required_fraction: f64,
    /// Fraction of (t, quantity) pairs inside the envelope.
    pub within_fraction: f64,
    pub max_abs_dmse: f64,
    pub mean_abs_dmse: f64,
    pub max_abs_dmsd: f64,
    pub mean_abs_dmsd: f64,
    /// Largest deviation in standard errors; `null` when some SE is zero
    /// and the values differ.
    pub max_z_mse: Option<f64>,
    pub max_z_msd: Option<f64>,
    pub underpowered: bool,
    pub verdict: &'static str,
}

/// Deviation in standard errors.
fn z_score(sim: f64, se: f64, theory: f64) -> f64 {
    let d = (sim - theory).abs();
    if se > 0.0 {
        d / se
    } else if d <= 1e-12 * theory.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    }
}

/// One row of a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub t: f64,
    pub mse_theory: f64,
    pub mse_sim: f64,
    pub mse_se: f64,
    pub msd_theory: f64,
    pub msd_sim: f64,
    pub msd_se: f64,
}

pub fn summarize(rows: &[CompareRow], trials: usize) -> CompareSummary {
    let n = rows.len().max(1) as f64;
    let dmse: Vec<f64> = rows.iter().map(|r| (r.mse_sim - r.mse_theory).abs()).collect();
    let dmsd: Vec<f64> = rows.iter().map(|r| (r.msd_sim - r.msd_theory).abs()).collect();
    let z_mse: Vec<f64> = rows.iter().map(|r| z_score(r.mse_sim, r.mse_se, r.mse_theory)).collect();
    let z_msd: Vec<f64> = rows.iter().map(|r| z_score(r.msd_sim, r.msd_se, r.msd_theory)).collect();
    let inside = z_mse.iter().chain(&z_msd).filter(|z| **z <= ENVELOPE_SE).count();
    let within_fraction = inside as f64 / (2.0 * n);
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let finite = |x: f64| x.is_finite().then_some(x);
    CompareSummary {
        points: rows.len(),
        trials,
        envelope_se: ENVELOPE_SE,
        required_fraction: REQUIRED_FRACTION,
        within_fraction,
        max_abs_dmse: max(&dmse),
        mean_abs_dmse: dmse.iter().sum::<f64>() / n,
        max_abs_dmsd: max(&dmsd),
        mean_abs_dmsd: dmsd.iter().sum::<f64>() / n,
        max_z_mse: finite(max(&z_mse)),
        max_z_msd: finite(max(&z_msd)),
        underpowered: trials < MIN_POWERED_TRIALS,
        verdict: if within_fraction >= REQUIRED_FRACTION { "PASS" } else { "FAIL" },
    }
}

/// Runs theory and simulation on a shared time grid.
///
/// The RK4 step is the largest divisor of `1/N` not above `dt_max`, so every
/// simulation record time is an exact integration point.
pub fn compare_rows(
    params: &SystemParams,
    cfg: &SimConfig,
    dt_max: f64,
) -> Result<(Vec<CompareRow>, IntegratorConfig)> {
    let steps = cfg.steps();
    if steps == 0 {
        return Err(UsageError("t-end must cover at least one step".into()).into());
    }
    if !(dt_max.is_finite() && dt_max > 0.0) {
        return Err(UsageError(format!("dt must be finite and > 0, got {dt_max}")).into());
    }
    let per_step = (1.0 / (cfg.taps as f64 * dt_max)).ceil().max(1.0) as usize;
    let icfg = IntegratorConfig::new(
        1.0 / (cfg.taps * per_step) as f64,
        steps as f64 / cfg.taps as f64,
        per_step,
    );
    let theory = integrate(params, MacroState::ORIGIN, &icfg)?;
    let stats = run_ensemble(cfg, params)?;
    let rows = stats
        .points
        .iter()
        .map(|p| {
            let th = &theory.points[p.step];
            CompareRow {
                t: p.t,
                mse_theory: th.mse,
                mse_sim: p.mse.mean,
                mse_se: p.mse.se,
                msd_theory: th.msd_norm,
                msd_sim: p.msd_norm.mean,
                msd_se: p.msd_norm.se,
            }
        })
        .collect();
    Ok((rows, icfg))
}

pub fn compare(args: &CompareArgs) -> Result<i32> {
    let start = Instant::now();
    let r = Resolver::from_path(args.io.config.as_deref())?;
    let params = resolve_params(&r, &args.model)?;
    let cfg = resolve_sim(&r, &args.horizon, &args.sim)?;
    let dt_max = r.value(args.integrator.dt, "dt", IntegratorConfig::default().dt)?;
    let (rows, icfg) = compare_rows(&params, &cfg, dt_max)?;
    let summary = summarize(&rows, cfg.trials);

    let mut w = open_out(args.io.out.as_deref())?;
    writeln!(w, "t,mse_theory,mse_sim,mse_se,msd_theory,msd_sim,msd_se,abs_dmse,abs_dmsd")?;
    for x in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            Num(x.t),
            Num(x.mse_theory),
            Num(x.mse_sim),
            Num(x.mse_se),
            Num(x.msd_theory),
            Num(x.msd_sim),
            Num(x.msd_se),
            Num((x.mse_sim - x.mse_theory).abs()),
            Num((x.msd_sim - x.msd_theory).abs())
        )?;
    }
    w.flush()?;

    let text = serde_json::to_string_pretty(&summary)?;
    match (&args.summary, &args.io.out) {
        (Some(p), _) => write_text(p, &text)?,
        (None, Some(out)) => write_text(&sidecar(out, ".summary.json"), &text)?,
        (None, None) => eprintln!("{text}"),
    }
    let mut m = RunManifest::new("compare", start);
    m.params = Some(params);
    m.seed = Some(cfg.master_seed);
    m.sim = Some(cfg);
    m.integrator = Some(icfg);
    m.extra = json!({ "summary": summary });
    finish(args.io.out.as_deref(), m)?;
    Ok(if summary.verdict == "PASS" { 0 } else { 1 })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn steady(args: &SteadyArgs) -> Result<i32> {
    let start = Instant::now();
    let r = Resolver::from_path(args.io.config.as_deref())?;
    let params = resolve_params(&r, &args.model)?;
    let value = match steady_state(&params) {
        Ok(res) => serde_json::to_value(res)?,
        Err(Error::Stability { mu_rho2 }) => json!({ "regime": "unstable", "mu_rho2": mu_rho2 }),
        Err(e) => return Err(e.into()),
    };
    write_json(args.io.out.as_deref(), &value)?;
    let mut m = RunManifest::new("steady", start);
    m.params = Some(params);
    finish(args.io.out.as_deref(), m)?;
    Ok(0)
}

pub fn critical(args: &CriticalArgs) -> Result<i32> {
    let start = Instant::now();
    let r = Resolver::from_path(args.io.config.as_deref())?;
    let d = SystemParams::default();
    let params = SystemParams {
        rho2: r.value(args.model.rho2, "rho2", d.rho2)?,
        sigma_g2: r.value(args.model.sigma_g2, "sigma-g2", d.sigma_g2)?,
        ..d
    };
    params.validate().map_err(usage)?;
    write_json(args.io.out.as_deref(), &json!({ "S_C": critical_s(&params) }))?;
    let mut m = RunManifest::new("critical", start);
    m.params = Some(params);
    finish(args.io.out.as_deref(), m)?;
    Ok(0)
}

/// `from, from + step, ...` up to `to` inclusive, with the accumulated
/// round-off trimmed so grid values print cleanly.
pub fn s_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>, UsageError> {
    if !(from.is_finite() && to.is_finite() && step.is_finite()) || from < 0.0 || step <= 0.0 || to < from {
        return Err(UsageError(format!(
            "need 0 <= S-from <= S-to and S-step > 0, got {from}, {to}, {step}"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let s = from + i as f64 * step;
            format!("{s:.12}").parse().unwrap_or(s)
        })
        .collect())
}

pub fn sweep(args: &SweepArgs) -> Result<i32> {
    let start = Instant::now();
    let r = Resolver::from_path(args.io.config.as_deref())?;
    let params = resolve_params(&r, &args.model)?;
    let grid = s_grid(
        r.value(args.s_from, "S-from", 0.1)?,
        r.value(args.s_to, "S-to", 5.0)?,
        r.value(args.s_step, "S-step", 0.01)?,
    )?;
    let rows = sweep_s(&params, &grid)?;

    let mut failed = 0;
    let mut w = open_out(args.io.out.as_deref())?;
    writeln!(w, "S,regime,Q_star,r_star,cos_theta,mse,msd_norm")?;
    for (s, res) in &rows {
        match res {
            Ok(SteadyResult::Converged { q_star, r_star, mse, msd_norm, cos_theta, .. }) => {
                let [q, r, c, e, d] = [*q_star, *r_star, *cos_theta, *mse, *msd_norm].map(Num);
                writeln!(w, "{},converged,{q},{r},{c},{e},{d}", Num(*s))?
            }
            Ok(SteadyResult::Divergent { mse_asymptotic, cos_theta }) => {
                writeln!(w, "{},divergent,,,{},{},", Num(*s), Num(*cos_theta), Num(*mse_asymptotic))?
            }
            Err(Error::Stability { .. }) => writeln!(w, "{},unstable,,,,,", Num(*s))?,
            Err(e) => {
                failed += 1;
                eprintln!("S = {s}: {e}");
                writeln!(w, "{},error,,,,,", Num(*s))?
            }
        }
    }
    w.flush()?;
    let mut m = RunManifest::new("sweep", start);
    m.params = Some(params);
    m.extra = json!({ "S_grid": grid });
    finish(args.io.out.as_deref(), m)?;
    Ok(if failed == 0 { 0 } else { 1 })
}

/// Runs the moment check against `closed` and returns the report and the
/// exit code it maps to.
pub fn moments_check_with<F>(nodes: usize, closed: F) -> Result<(CheckReport, i32)>
where
    F: Fn(MomentKind, &SystemParams, MacroState) -> f64,
{
    let report = check_all_with(&ParamGrid::default(), &QuadConfig::with_nodes(nodes), closed)?;
    let code = if report.pass { 0 } else { 1 };
    Ok((report, code))
}

pub fn moments_check(args: &MomentsCheckArgs) -> Result<i32> {
    let start = Instant::now();
    let r = Resolver::from_path(args.io.config.as_deref())?;
    let nodes = r.value(args.nodes, "nodes", QuadConfig::default().nodes)?;
    if nodes < 8 {
        return Err(UsageError(format!("nodes must be >= 8, got {nodes}")).into());
    }
    let (report, code) = moments_check_with(nodes, closed_form)?;
    write_json(args.io.out.as_deref(), &serde_json::to_value(&report)?)?;
    let mut m = RunManifest::new("moments-check", start);
    m.extra = json!({ "nodes": nodes, "pass": report.pass });
    finish(args.io.out.as_deref(), m)?;
    Ok(code)
}
