//! Theory and simulation of an LMS adaptive filter whose output passes
//! through a clipping saturation.
//!
//! Two levels of description are provided:
//!
//! * [`simulator`]: the actual finite-`N` adaptive system, run as a seeded
//!   Monte Carlo ensemble.
//! * [`moments`], [`dynamics`], [`steady`]: the large-`N` description in
//!   terms of the order parameters `Q = w.w / N` and `r = g.w / N`, which obey
//!   two coupled deterministic ODEs.
//!
//! [`oracle`] checks the closed-form Gaussian averages by direct quadrature.

pub mod dynamics;
pub mod error;
pub mod model;
pub mod moments;
pub mod oracle;
pub mod simulator;
pub mod steady;

pub use dynamics::{integrate, IntegratorConfig};
pub use error::{Error, Result};
pub use model::{clip, cos_theta, MacroPoint, MacroState, MacroTrajectory, SystemParams};
pub use moments::MomentKind;
pub use oracle::{check_all, CheckReport, ParamGrid, QuadConfig};
pub use simulator::{run_ensemble, Distribution, EnsembleStats, InputModel, SimConfig, StatMode};
pub use steady::{critical_s, steady_state, sweep_s, SteadyResult};
