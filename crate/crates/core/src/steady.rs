//! Fixed points of the learning dynamics, the divergent regime below the
//! critical clipping level, and the critical level itself.
//!
//! Above `S_C = sigma_g rho sqrt(pi/2)` the dynamics settle to a finite
//! `(Q*, r*)`. Setting `dr/dt = 0` gives `r(Q) = sigma_g^2 / erf(x(Q))`,
//! which reduces the fixed-point problem to one equation in `Q`; that
//! equation is bracketed by a geometric scan and refined by bisection. Roots
//! violating `r^2 <= sigma_g^2 Q` exist at large step sizes and are skipped.
//!
//! At or below `S_C` no root exists: `Q` grows without bound, `w` aligns with
//! `g`, and the MSE approaches a quadratic in `S` that does not involve `mu`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{dqdt, drdt};
use crate::error::{Error, Result};
use crate::model::{cos_theta, MacroState, SystemParams};
use crate::moments::{self, ClipTerms};

/// Lower end of the bracket scan, in units of `sigma_g^2`.
const SCAN_Q_MIN: f64 = 1e-3;
/// Upper end of the bracket scan, in units of `sigma_g^2`.
const SCAN_Q_MAX: f64 = 1e12;
const SCAN_FACTOR: f64 = 2.0;
/// Slack on `S_C` when a failed scan is accepted as genuine divergence.
const CRITICAL_SLACK: f64 = 1e-9;
/// Relative slack on `r^2 <= sigma_g^2 Q` when screening roots.
const PHYSICAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum SteadyResult {
    Converged {
        #[serde(rename = "Q_star")]
        q_star: f64,
        r_star: f64,
        mse: f64,
        msd_norm: f64,
        cos_theta: f64,
        /// Interval in `Q` across which the reduced residual changes sign.
        #[serde(skip)]
        bracket: (f64, f64),
    },
    /// `Q` and the MSD diverge; the MSE and `cos θ` have finite limits.
    Divergent { mse_asymptotic: f64, cos_theta: f64 },
}

impl SteadyResult {
    pub fn is_converged(&self) -> bool {
        matches!(self, SteadyResult::Converged { .. })
    }

    pub fn regime(&self) -> &'static str {
        match self {
            SteadyResult::Converged { .. } => "converged",
            SteadyResult::Divergent { .. } => "divergent",
        }
    }

    /// Steady (or asymptotic) MSE.
    pub fn mse(&self) -> f64 {
        match *self {
            SteadyResult::Converged { mse, .. } => mse,
            SteadyResult::Divergent { mse_asymptotic, .. } => mse_asymptotic,
        }
    }

    pub fn cos_theta(&self) -> f64 {
        match *self {
            SteadyResult::Converged { cos_theta, .. } | SteadyResult::Divergent { cos_theta, .. } => {
                cos_theta
            }
        }
    }

    pub fn state(&self) -> Option<MacroState> {
        match *self {
            SteadyResult::Converged { q_star, r_star, .. } => Some(MacroState::new(q_star, r_star)),
            SteadyResult::Divergent { .. } => None,
        }
    }
}

/// Critical clipping level `sigma_g rho sqrt(pi / 2)`.
pub fn critical_s(params: &SystemParams) -> f64 {
    params.sigma_g() * params.rho() * (PI / 2.0).sqrt()
}

/// Limit of the MSE for `S < S_C`, independent of the step size.
pub fn asymptotic_mse(params: &SystemParams) -> f64 {
    let s = params.saturation;
    let sr = params.sigma_g() * params.rho();
    s * s - 2.0 * sr * (2.0 / PI).sqrt() * s + sr * sr + params.sigma_xi2
}

/// Limit of `cos θ` for `S < S_C`; `w` aligns with `g` whatever the other
/// parameters.
pub fn asymptotic_cos_theta() -> f64 {
    1.0
}

/// Overlap that zeroes `dr/dt` at a given `Q`.
pub fn stationary_overlap(params: &SystemParams, q: f64) -> f64 {
    params.sigma_g2 / ClipTerms::new(params, q).erf
}

/// `dQ/dt` along the curve `dr/dt = 0`; its positive roots are the fixed
/// points.
pub fn reduced_residual(params: &SystemParams, q: f64) -> f64 {
    dqdt(params, MacroState::new(q, stationary_overlap(params, q)))
}

fn bisect(params: &SystemParams, mut lo: f64, mut hi: f64) -> (f64, (f64, f64)) {
    let mut f_lo = reduced_residual(params, lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = reduced_residual(params, mid);
        if f_mid == 0.0 {
            return (mid, (lo, hi));
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let root = if f_lo.abs() <= reduced_residual(params, hi).abs() {
        lo
    } else {
        hi
    };
    (root, (lo, hi))
}

/// True when `r^2 <= sigma_g^2 Q`, up to round-off.
fn is_physical(params: &SystemParams, state: MacroState) -> bool {
    state.r * state.r <= params.sigma_g2 * state.q * (1.0 + PHYSICAL_SLACK)
}

/// First root of the reduced residual that satisfies Cauchy-Schwarz, with
/// its bisection bracket. Roots with `r^2 > sigma_g^2 Q` appear at large
/// step sizes and are skipped.
fn scan_root(params: &SystemParams) -> Option<(f64, (f64, f64))> {
    let mut q = SCAN_Q_MIN * params.sigma_g2;
    let q_max = SCAN_Q_MAX * params.sigma_g2;
    let mut f = reduced_residual(params, q);
    while q < q_max {
        let next = q * SCAN_FACTOR;
        let f_next = reduced_residual(params, next);
        let found = if f == 0.0 {
            Some((q, (q, q)))
        } else if (f > 0.0) != (f_next > 0.0) {
            Some(bisect(params, q, next))
        } else {
            None
        };
        if let Some((root, bracket)) = found {
            if is_physical(params, MacroState::new(root, stationary_overlap(params, root))) {
                return Some((root, bracket));
            }
        }
        q = next;
        f = f_next;
    }
    None
}

/// Steady state of the learning dynamics.
pub fn steady_state(params: &SystemParams) -> Result<SteadyResult> {
    params.validate()?;
    let mu_rho2 = params.mu * params.rho2;
    if params.is_linear() && mu_rho2 >= 2.0 {
        return Err(Error::Stability { mu_rho2 });
    }

    let divergent = SteadyResult::Divergent {
        mse_asymptotic: asymptotic_mse(params),
        cos_theta: asymptotic_cos_theta(),
    };
    // With S = 0 the filter output is identically zero and r grows linearly.
    if params.saturation == 0.0 {
        return Ok(divergent);
    }

    match scan_root(params) {
        Some((q_star, bracket)) => {
            let state = MacroState::new(q_star, stationary_overlap(params, q_star));
            Ok(SteadyResult::Converged {
                q_star,
                r_star: state.r,
                mse: moments::mse(params, state),
                msd_norm: moments::msd_normalized(params, state),
                cos_theta: cos_theta(state, params).unwrap_or(f64::NAN),
                bracket,
            })
        }
        None if params.saturation < critical_s(params) + CRITICAL_SLACK => Ok(divergent),
        None => Err(Error::Solver(format!(
            "no physical root of the fixed-point residual for Q in [{:e}, {:e}] although S = {} > S_C = {}",
            SCAN_Q_MIN * params.sigma_g2,
            SCAN_Q_MAX * params.sigma_g2,
            params.saturation,
            critical_s(params)
        ))),
    }
}

/// Maximum of `|dr/dt|` and `|dQ/dt|` at a state.
pub fn stationarity_defect(params: &SystemParams, state: MacroState) -> f64 {
    drdt(params, state).abs().max(dqdt(params, state).abs())
}

/// Steady states over a grid of clipping levels, in grid order.
///
/// Per-point failures are returned in place and do not abort the sweep.
pub fn sweep_s(
    base: &SystemParams,
    s_grid: &[f64],
) -> Result<Vec<(f64, Result<SteadyResult>)>> {
    if let Some(bad) = s_grid.iter().find(|s| s.is_nan() || **s < 0.0) {
        return Err(Error::InvalidParam {
            field: "S_grid",
            reason: format!("values must be >= 0, got {bad}"),
        });
    }
    if s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam {
            field: "S_grid",
            reason: "grid must be strictly increasing".into(),
        });
    }
    Ok(s_grid
        .par_iter()
        .map(|&s| (s, steady_state(&base.with_saturation(s))))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(s: f64, mu: f64) -> SystemParams {
        SystemParams::new(1.0, 1.0, 0.0, s, mu)
    }

    #[test]
    fn critical_value() {
        assert_eq!(critical_s(&unit(1.0, 0.5)), (PI / 2.0).sqrt());
        assert_relative_eq!(critical_s(&unit(1.0, 0.5)), 1.2533141373155001, max_relative = 1e-15);
        let p = SystemParams { rho2: 4.0, ..unit(1.0, 0.5) };
        assert_relative_eq!(critical_s(&p), 2.0 * (PI / 2.0).sqrt(), max_relative = 1e-15);
        let p = SystemParams { sigma_g2: 0.25, ..unit(1.0, 0.5) };
        assert_relative_eq!(critical_s(&p), 0.5 * (PI / 2.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn asymptotic_mse_examples() {
        let s_min = (2.0 / PI).sqrt();
        assert_relative_eq!(asymptotic_mse(&unit(s_min, 0.5)), 1.0 - 2.0 / PI, max_relative = 1e-14);
        assert_eq!(asymptotic_mse(&unit(0.0, 0.5)), 1.0);
        let p = unit(0.8, 0.5).with_noise(1.0);
        assert_relative_eq!(asymptotic_mse(&p), 0.64 - 1.6 * s_min + 2.0, max_relative = 1e-14);
        assert_eq!(asymptotic_cos_theta(), 1.0);
    }

    #[test]
    fn linear_limit_fixed_points() {
        let sol = steady_state(&unit(f64::INFINITY, 0.5)).unwrap();
        let SteadyResult::Converged { q_star, r_star, mse, msd_norm, .. } = sol else {
            panic!("expected converged, got {sol:?}");
        };
        assert_relative_eq!(q_star, 1.0, max_relative = 1e-12);
        assert_eq!(r_star, 1.0);
        assert!(mse.abs() < 1e-12 && msd_norm.abs() < 1e-12);

        let sol = steady_state(&unit(f64::INFINITY, 0.5).with_noise(1.0)).unwrap();
        let SteadyResult::Converged { q_star, r_star, mse, .. } = sol else {
            panic!("expected converged, got {sol:?}");
        };
        assert_eq!(r_star, 1.0);
        assert_relative_eq!(q_star, 4.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(mse, 4.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn linear_limit_unstable_step() {
        assert!(matches!(
            steady_state(&unit(f64::INFINITY, 2.0)),
            Err(Error::Stability { .. })
        ));
    }

    #[test]
    fn below_critical_is_divergent() {
        let sol = steady_state(&unit(1.0, 0.5)).unwrap();
        assert_eq!(
            sol,
            SteadyResult::Divergent {
                mse_asymptotic: asymptotic_mse(&unit(1.0, 0.5)),
                cos_theta: 1.0
            }
        );
        assert!(!steady_state(&unit(0.0, 0.5)).unwrap().is_converged());
    }

    #[test]
    fn above_critical_converges_to_stationary_point() {
        for s in [1.4, 2.0, 3.0, 10.0] {
            for mu in [0.1, 0.5, 1.0] {
                let p = unit(s, mu);
                let sol = steady_state(&p).unwrap();
                let state = sol.state().expect("converged");
                assert!(stationarity_defect(&p, state) <= 1e-10, "S={s} mu={mu}: {sol:?}");
                assert!(state.r >= p.sigma_g2);
                let SteadyResult::Converged { bracket: (lo, hi), .. } = sol else { unreachable!() };
                assert!(lo <= state.q && state.q <= hi);
                let (f_lo, f_hi) = (reduced_residual(&p, lo), reduced_residual(&p, hi));
                assert!(f_lo * f_hi <= 0.0, "no sign change: {f_lo} {f_hi}");
            }
        }
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let p = unit(1.0, 0.5);
        assert!(sweep_s(&p, &[1.0, 1.0]).is_err());
        assert!(sweep_s(&p, &[-1.0, 1.0]).is_err());
        assert_eq!(sweep_s(&p, &[]).unwrap().len(), 0);
    }

    #[test]
    fn sweep_keeps_errors_in_place() {
        let p = unit(1.0, 2.5);
        let out = sweep_s(&p, &[1.0, f64::INFINITY]).unwrap();
        assert!(out[0].1.is_ok());
        assert!(matches!(out[1].1, Err(Error::Stability { .. })));
    }

    #[test]
    fn serializes_with_regime_tag() {
        let json = serde_json::to_value(steady_state(&unit(1.0, 0.5)).unwrap()).unwrap();
        assert_eq!(json["regime"], "divergent");
        assert_eq!(json["cos_theta"], 1.0);
        let json = serde_json::to_value(steady_state(&unit(3.0, 0.5)).unwrap()).unwrap();
        assert_eq!(json["regime"], "converged");
        assert!(json["Q_star"].is_f64());
        assert!(json.get("bracket").is_none());
    }
}
