//! Closed-form Gaussian averages over the output pair `(d, y)`.
//!
//! In the large-`N` limit `d = g.u` and `y = w.u` are jointly Gaussian with
//! zero mean and covariance `rho^2 [[sigma_g^2, r], [r, Q]]`. Every moment the
//! learning dynamics need reduces to the error function of
//!
//! ```text
//! x = S / sqrt(2 rho^2 Q)
//! ```
//!
//! plus a Gaussian tail term `S sqrt(2 rho^2 Q / pi) exp(-x^2)`.
//!
//! The `S^2 (1 - erf x)` pieces are evaluated through `erfc` so the clipped
//! second moment stays accurate when `x` is large.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{MacroState, SystemParams};

/// Beyond this argument the clipping is treated as absent.
pub const ERF_SATURATION_ARG: f64 = 40.0;

/// The error function.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// The three `S`-dependent factors shared by all clipped moments at a given
/// output variance `rho^2 Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ClipTerms {
    /// `erf(x)`
    pub erf: f64,
    /// `S^2 erfc(x)`
    pub s2_erfc: f64,
    /// `S sqrt(2 rho^2 Q / pi) exp(-x^2)`
    pub tail: f64,
}

impl ClipTerms {
    const LINEAR: ClipTerms = ClipTerms {
        erf: 1.0,
        s2_erfc: 0.0,
        tail: 0.0,
    };

    pub fn new(params: &SystemParams, q: f64) -> Self {
        let s = params.saturation;
        let var = params.rho2 * q.max(0.0);
        if s == 0.0 {
            return ClipTerms {
                erf: 0.0,
                s2_erfc: 0.0,
                tail: 0.0,
            };
        }
        if s.is_infinite() || var == 0.0 {
            return Self::LINEAR;
        }
        let x = s / (2.0 * var).sqrt();
        if x > ERF_SATURATION_ARG {
            return Self::LINEAR;
        }
        ClipTerms {
            erf: erf(x),
            s2_erfc: s * s * erfc(x),
            tail: s * (2.0 * var / PI).sqrt() * (-x * x).exp(),
        }
    }
}

/// The five sample means entering the learning dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentKind {
    D2,
    Fy2,
    Dfy,
    Dy,
    Yfy,
}

impl MomentKind {
    pub const ALL: [MomentKind; 5] = [
        MomentKind::D2,
        MomentKind::Fy2,
        MomentKind::Dfy,
        MomentKind::Dy,
        MomentKind::Yfy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MomentKind::D2 => "d2",
            MomentKind::Fy2 => "fy2",
            MomentKind::Dfy => "dfy",
            MomentKind::Dy => "dy",
            MomentKind::Yfy => "yfy",
        }
    }
}

impl fmt::Display for MomentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `<d^2> = rho^2 sigma_g^2`
pub fn d2(params: &SystemParams) -> f64 {
    params.rho2 * params.sigma_g2
}

/// `<f(y)^2>`, the second moment of the clipped filter output.
pub fn fy2(params: &SystemParams, q: f64) -> f64 {
    let c = ClipTerms::new(params, q);
    c.s2_erfc + params.rho2 * q.max(0.0) * c.erf - c.tail
}

/// `<d f(y)>`
pub fn dfy(params: &SystemParams, state: MacroState) -> f64 {
    params.rho2 * state.r * ClipTerms::new(params, state.q).erf
}

/// `<d y> = rho^2 r`
pub fn dy(params: &SystemParams, r: f64) -> f64 {
    params.rho2 * r
}

/// `<y f(y)>`
pub fn yfy(params: &SystemParams, q: f64) -> f64 {
    params.rho2 * q.max(0.0) * ClipTerms::new(params, q).erf
}

/// Dispatches to the closed form for `kind`.
pub fn closed_form(kind: MomentKind, params: &SystemParams, state: MacroState) -> f64 {
    match kind {
        MomentKind::D2 => d2(params),
        MomentKind::Fy2 => fy2(params, state.q),
        MomentKind::Dfy => dfy(params, state),
        MomentKind::Dy => dy(params, state.r),
        MomentKind::Yfy => yfy(params, state.q),
    }
}

/// Mean-square error `<e^2>` as a function of the order parameters.
pub fn mse(params: &SystemParams, state: MacroState) -> f64 {
    let c = ClipTerms::new(params, state.q);
    let rho2 = params.rho2;
    rho2 * params.sigma_g2 + c.s2_erfc + (rho2 * state.q.max(0.0) - 2.0 * rho2 * state.r) * c.erf
        - c.tail
        + params.sigma_xi2
}

/// Mean-square deviation `|g - w|^2` divided by `N`.
pub fn msd_normalized(params: &SystemParams, state: MacroState) -> f64 {
    params.sigma_g2 - 2.0 * state.r + state.q
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> SystemParams {
        SystemParams::new(1.0, 1.0, 0.0, 1.0, 0.5)
    }

    #[test]
    fn erf_matches_reference_values() {
        // mpmath, 30 digits
        let cases = [
            (0.1, 0.112462916018284892203275071744),
            (0.5, 0.520499877813046537682746653892),
            (1.0, 0.842700792949714869341220635083),
            (2.0, 0.995322265018952734162069256367),
            (3.5, 0.999999256901627658587254476316),
            (6.0, 0.999999999999999978480263287501),
        ];
        for (x, want) in cases {
            assert_relative_eq!(erf(x), want, max_relative = 1e-15);
        }
    }

    #[test]
    fn d2_and_dy_are_products() {
        assert_eq!(d2(&unit()), 1.0);
        assert_eq!(d2(&SystemParams::new(2.0, 3.0, 0.0, 1.0, 0.5)), 6.0);
        assert_eq!(dy(&unit(), 0.0), 0.0);
        assert_relative_eq!(dy(&SystemParams { rho2: 2.0, ..unit() }, 0.3), 0.6);
    }

    #[test]
    fn fy2_limits_and_reference() {
        let p = unit();
        assert_eq!(fy2(&p.with_saturation(f64::INFINITY), 2.5), 2.5);
        assert_eq!(fy2(&p.with_saturation(0.0), 1.0), 0.0);
        assert_eq!(fy2(&p, 0.0), 0.0);
        // 1-D quadrature of clip(y,1)^2 under N(0,1), mpmath at 30 digits
        assert_relative_eq!(fy2(&p, 1.0), 0.516058550961713300404339614129, max_relative = 1e-14);
    }

    #[test]
    fn dfy_and_yfy_reference() {
        let p = unit();
        assert_eq!(dfy(&p, MacroState::new(3.0, 0.0)), 0.0);
        assert_eq!(dfy(&p.with_saturation(f64::INFINITY), MacroState::new(1.0, 0.5)), 0.5);
        assert_eq!(dfy(&p, MacroState::new(0.0, 0.5)), 0.5);
        assert_eq!(dfy(&p.with_saturation(0.0), MacroState::new(1.0, 0.5)), 0.0);
        assert_relative_eq!(
            dfy(&p, MacroState::new(1.0, 0.5)),
            0.341344746068542948585232545632,
            max_relative = 1e-14
        );
        assert_eq!(yfy(&p.with_saturation(f64::INFINITY), 3.0), 3.0);
        assert_eq!(yfy(&p.with_saturation(0.0), 3.0), 0.0);
        assert_eq!(yfy(&p, 0.0), 0.0);
        assert_relative_eq!(yfy(&p, 1.0), 0.682689492137085897170465091264, max_relative = 1e-14);
    }

    #[test]
    fn mse_examples() {
        let p = unit();
        assert_eq!(mse(&p, MacroState::ORIGIN), 1.0);
        assert_eq!(mse(&p.with_saturation(f64::INFINITY), MacroState::new(1.0, 1.0)), 0.0);
        assert_eq!(mse(&p.with_saturation(0.0), MacroState::new(3.0, 0.7)), 1.0);
        let s = MacroState::new(1.0, 0.9);
        let composed = d2(&p) + fy2(&p, 1.0) - 2.0 * dfy(&p, s) + p.sigma_xi2;
        assert_relative_eq!(mse(&p, s), composed, max_relative = 1e-15);
    }

    #[test]
    fn msd_examples() {
        let p = unit();
        assert_eq!(msd_normalized(&p, MacroState::ORIGIN), 1.0);
        assert_eq!(msd_normalized(&p, MacroState::new(1.0, 1.0)), 0.0);
        assert_eq!(msd_normalized(&p, MacroState::new(4.0, 1.5)), 2.0);
    }

    #[test]
    fn huge_erf_argument_short_circuits_to_linear() {
        let p = unit().with_saturation(100.0);
        assert_eq!(fy2(&p, 1.0), 1.0);
        assert_eq!(yfy(&p, 1.0), 1.0);
    }

    fn ulps_apart(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / (scale.abs() * f64::EPSILON)
    }

    fn params_strategy() -> impl Strategy<Value = (SystemParams, f64, f64)> {
        (
            0.1..4.0f64,
            0.1..4.0f64,
            0.0..2.0f64,
            prop_oneof![Just(0.0), 0.0..6.0f64, Just(f64::INFINITY)],
            0.0..20.0f64,
            -1.0..=1.0f64,
        )
            .prop_map(|(rho2, sg2, xi2, s, q, frac)| {
                let r = frac * (sg2 * q).sqrt();
                (SystemParams::new(rho2, sg2, xi2, s, 0.5), q, r)
            })
    }

    proptest! {
        #[test]
        fn fy2_bounded((p, q, _r) in params_strategy()) {
            let v = fy2(&p, q);
            prop_assert!(v >= 0.0);
            let cap = (p.rho2 * q).min(p.saturation * p.saturation);
            prop_assert!(v <= cap * (1.0 + 1e-12) + 1e-300, "fy2 = {} > {}", v, cap);
        }

        #[test]
        fn fy2_monotone((p, q, _r) in params_strategy(), ds in 0.0..2.0f64, dq in 0.0..5.0f64) {
            let base = fy2(&p, q);
            let tol = 1e-13 * base.max(1.0);
            if p.saturation.is_finite() {
                prop_assert!(fy2(&p.with_saturation(p.saturation + ds), q) + tol >= base);
            }
            prop_assert!(fy2(&p, q + dq) + tol >= base);
        }

        #[test]
        fn dfy_cauchy_schwarz((p, q, r) in params_strategy()) {
            let s = MacroState::new(q, r);
            let lhs = dfy(&p, s).abs();
            let rhs = (d2(&p) * fy2(&p, q)).sqrt();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15, "{} > {}", lhs, rhs);
        }

        #[test]
        fn yfy_bounded((p, q, _r) in params_strategy()) {
            let v = yfy(&p, q);
            prop_assert!(v >= 0.0 && v <= p.rho2 * q);
        }

        #[test]
        fn mse_lower_bound_and_decomposition((p, q, r) in params_strategy()) {
            let s = MacroState::new(q, r);
            let m = mse(&p, s);
            let scale = d2(&p) + fy2(&p, q) + 2.0 * dfy(&p, s).abs() + p.sigma_xi2;
            prop_assert!(m >= p.sigma_xi2 - 1e-12 * scale, "mse {} < {}", m, p.sigma_xi2);
            let composed = d2(&p) + fy2(&p, q) - 2.0 * dfy(&p, s) + p.sigma_xi2;
            prop_assert!(ulps_apart(m, composed, scale) <= 4.0);
        }

        #[test]
        fn msd_nonnegative_under_cauchy_schwarz((p, q, r) in params_strategy()) {
            prop_assert!(msd_normalized(&p, MacroState::new(q, r)) >= -1e-12);
        }
    }
}
