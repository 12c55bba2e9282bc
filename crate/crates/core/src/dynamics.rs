//! Deterministic learning dynamics of the order parameters and their
//! fixed-step RK4 integration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cos_theta, MacroPoint, MacroState, MacroTrajectory, SystemParams};
use crate::moments::{self, ClipTerms};

/// `dr/dt`
pub fn drdt(params: &SystemParams, state: MacroState) -> f64 {
    let erf = ClipTerms::new(params, state.q).erf;
    params.mu * params.rho2 * (params.sigma_g2 - state.r * erf)
}

/// `dQ/dt`
pub fn dqdt(params: &SystemParams, state: MacroState) -> f64 {
    let c = ClipTerms::new(params, state.q);
    let SystemParams {
        rho2,
        sigma_g2,
        sigma_xi2,
        mu,
        ..
    } = *params;
    let q = state.q.max(0.0);
    let r = state.r;
    let k = mu * rho2;
    k * (mu * (rho2 * q - 2.0 * rho2 * r) - 2.0 * q) * c.erf + k * mu * c.s2_erfc - k * mu * c.tail
        + k * (mu * (rho2 * sigma_g2 + sigma_xi2) + 2.0 * r)
}

/// Fixed-step integrator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `record_stride`-th step (the initial point is always kept).
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 50.0,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64, record_stride: usize) -> Self {
        Self {
            dt,
            t_end,
            record_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidParam { field, reason });
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt", format!("must be finite and > 0, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad("t_end", format!("must be finite and > 0, got {}", self.t_end));
        }
        if self.dt > self.t_end {
            return bad("dt", format!("dt = {} exceeds t_end = {}", self.dt, self.t_end));
        }
        if self.record_stride == 0 {
            return bad("record_stride", "must be >= 1".into());
        }
        Ok(())
    }

    /// Number of RK4 steps; `t_end` is rounded to the nearest multiple of `dt`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

fn rhs(params: &SystemParams, s: MacroState) -> MacroState {
    MacroState::new(dqdt(params, s), drdt(params, s))
}

fn axpy(base: MacroState, h: f64, k: MacroState) -> MacroState {
    MacroState::new(base.q + h * k.q, base.r + h * k.r)
}

/// One classical RK4 step of size `h`.
pub fn rk4_step(params: &SystemParams, s: MacroState, h: f64) -> MacroState {
    let k1 = rhs(params, s);
    let k2 = rhs(params, axpy(s, 0.5 * h, k1));
    let k3 = rhs(params, axpy(s, 0.5 * h, k2));
    let k4 = rhs(params, axpy(s, h, k3));
    MacroState::new(
        s.q + h / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q),
        s.r + h / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
    )
}

/// Builds the recorded point for `state` at time `t`.
pub fn observe(params: &SystemParams, t: f64, state: MacroState) -> MacroPoint {
    MacroPoint {
        t,
        state,
        mse: moments::mse(params, state),
        msd_norm: moments::msd_normalized(params, state),
        cos_theta: cos_theta(state, params),
    }
}

/// Integrates the `(Q, r)` system from `state0` at `t = 0` up to `cfg.t_end`.
pub fn integrate(
    params: &SystemParams,
    state0: MacroState,
    cfg: &IntegratorConfig,
) -> Result<MacroTrajectory> {
    params.validate()?;
    cfg.validate()?;
    if state0.q.is_nan() || state0.q < 0.0 || !state0.q.is_finite() || !state0.r.is_finite() {
        return Err(Error::InvalidParam {
            field: "state0",
            reason: format!("need finite Q >= 0 and finite r, got Q = {}, r = {}", state0.q, state0.r),
        });
    }

    let steps = cfg.steps();
    let mut traj = MacroTrajectory {
        points: Vec::with_capacity(steps / cfg.record_stride + 2),
        q_clamped: false,
    };
    traj.points.push(observe(params, 0.0, state0));

    let mut state = state0;
    for i in 1..=steps {
        let mut next = rk4_step(params, state, cfg.dt);
        let t = i as f64 * cfg.dt;
        if !(next.q.is_finite() && next.r.is_finite()) {
            return Err(Error::NonFinite { t, last: state });
        }
        if next.q < 0.0 {
            next.q = 0.0;
            traj.q_clamped = true;
        }
        state = next;
        if i % cfg.record_stride == 0 || i == steps {
            traj.points.push(observe(params, t, state));
        }
    }
    Ok(traj)
}
