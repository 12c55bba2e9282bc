use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use satlms::model::parse_saturation;
use satlms::simulator::InputModel;
use satlms::{Distribution, StatMode};

#[derive(Debug, Parser)]
#[command(name = "satlms", version, about = "Clipped-output LMS: order-parameter theory and Monte Carlo simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the (Q, r) ODEs and write the learning curve as CSV.
    Theory(TheoryArgs),
    /// Run the Monte Carlo ensemble and write per-time statistics as CSV.
    Simulate(SimulateArgs),
    /// Theory and simulation side by side, with a standard-error verdict.
    Compare(CompareArgs),
    /// Steady state (or divergent asymptotics) as JSON.
    Steady(SteadyArgs),
    /// Critical clipping level as JSON.
    Critical(CriticalArgs),
    /// Steady states over a grid of clipping levels as CSV.
    Sweep(SweepArgs),
    /// Check the closed-form moments against quadrature.
    MomentsCheck(MomentsCheckArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct IoFlags {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (default stdout). A JSON manifest is written to `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    /// Input power scale N sigma^2.
    #[arg(long)]
    pub rho2: Option<f64>,
    /// Variance of the unknown-system coefficients.
    #[arg(long = "sigma-g2")]
    pub sigma_g2: Option<f64>,
    /// Observation-noise variance.
    #[arg(long = "sigma-xi2")]
    pub sigma_xi2: Option<f64>,
    /// Clipping level; `inf` for the unclipped filter.
    #[arg(long = "S", value_parser = parse_saturation)]
    pub saturation: Option<f64>,
    /// LMS step size.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CriticalFlags {
    #[arg(long)]
    pub rho2: Option<f64>,
    #[arg(long = "sigma-g2")]
    pub sigma_g2: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HorizonFlag {
    /// Final time in units of t = n / N.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct IntegratorFlags {
    /// RK4 step.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimFlags {
    /// Tap count.
    #[arg(long = "N")]
    pub taps: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Recording interval in units of t.
    #[arg(long = "record-every")]
    pub record_every: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// mean | median_std | both
    #[arg(long)]
    pub stat: Option<StatMode>,
    /// gaussian | uniform | binary
    #[arg(long = "g-dist")]
    pub g_dist: Option<Distribution>,
    #[arg(long = "u-dist")]
    pub u_dist: Option<Distribution>,
    #[arg(long = "noise-dist")]
    pub noise_dist: Option<Distribution>,
    /// tap_delay | independent
    #[arg(long)]
    pub input: Option<InputModel>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub horizon: HorizonFlag,
    #[command(flatten)]
    pub integrator: IntegratorFlags,
    /// Write every k-th RK4 step.
    #[arg(long = "record-stride")]
    pub record_stride: Option<usize>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub horizon: HorizonFlag,
    #[command(flatten)]
    pub sim: SimFlags,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CompareArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub horizon: HorizonFlag,
    /// Upper bound on the RK4 step; the step used divides 1/N.
    #[command(flatten)]
    pub integrator: IntegratorFlags,
    #[command(flatten)]
    pub sim: SimFlags,
    /// Deviation summary JSON (default `<out>.summary.json`, or stderr
    /// without --out).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct CriticalArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub model: CriticalFlags,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    #[command(flatten)]
    pub io: IoFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long = "S-from")]
    pub s_from: Option<f64>,
    #[arg(long = "S-to")]
    pub s_to: Option<f64>,
    #[arg(long = "S-step")]
    pub s_step: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct MomentsCheckArgs {
    #[command(flatten)]
    pub io: IoFlags,
    /// Quadrature nodes per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
}
