//! Shared domain types: the parameter tuple every formula consumes, the
//! macroscopic order parameters `(Q, r)`, and the clipping nonlinearity.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Numerical slack allowed on `|cos θ| ≤ 1` for states produced by the ODE
/// integrator.
pub const COS_THETA_SLACK: f64 = 1e-9;

/// Macroscopic parameters of the adaptive system.
///
/// `saturation` may be `f64::INFINITY`, which denotes the linear (unclipped)
/// LMS filter. Every formula in this crate evaluates that case by its exact
/// limit rather than by pushing infinities through `erf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Input power scale `rho^2 = N sigma^2`.
    pub rho2: f64,
    /// Per-tap variance of the unknown system.
    pub sigma_g2: f64,
    /// Background noise variance.
    pub sigma_xi2: f64,
    /// Clipping level `S`.
    #[serde(
        rename = "S",
        serialize_with = "serialize_saturation",
        deserialize_with = "deserialize_saturation"
    )]
    pub saturation: f64,
    /// LMS step size.
    pub mu: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            rho2: 1.0,
            sigma_g2: 1.0,
            sigma_xi2: 0.0,
            saturation: 1.0,
            mu: 0.5,
        }
    }
}

impl SystemParams {
    pub fn new(rho2: f64, sigma_g2: f64, sigma_xi2: f64, saturation: f64, mu: f64) -> Self {
        Self {
            rho2,
            sigma_g2,
            sigma_xi2,
            saturation,
            mu,
        }
    }

    pub fn with_saturation(self, saturation: f64) -> Self {
        Self { saturation, ..self }
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }

    pub fn with_noise(self, sigma_xi2: f64) -> Self {
        Self { sigma_xi2, ..self }
    }

    /// `true` when the clipping level is the linear-limit sentinel.
    pub fn is_linear(&self) -> bool {
        self.saturation == f64::INFINITY
    }

    pub fn rho(&self) -> f64 {
        self.rho2.sqrt()
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g2.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if !v.is_finite() {
                return Err(invalid(field, format!("must be finite, got {v}")));
            }
            if v <= 0.0 {
                return Err(invalid(field, format!("must be > 0, got {v}")));
            }
            Ok(())
        }

        positive("rho2", self.rho2)?;
        positive("sigma_g2", self.sigma_g2)?;
        if !self.sigma_xi2.is_finite() || self.sigma_xi2 < 0.0 {
            return Err(invalid(
                "sigma_xi2",
                format!("must be finite and >= 0, got {}", self.sigma_xi2),
            ));
        }
        if self.saturation.is_nan() || self.saturation < 0.0 {
            return Err(invalid(
                "S",
                format!("must be >= 0 or inf, got {}", self.saturation),
            ));
        }
        positive("mu", self.mu)?;
        Ok(())
    }
}

fn invalid(field: &'static str, reason: String) -> Error {
    Error::InvalidParam { field, reason }
}

/// Serializes the clipping level as a JSON number, or the string `"inf"` for
/// the linear limit (JSON has no infinity).
pub fn serialize_saturation<S: Serializer>(value: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if value.is_infinite() {
        ser.serialize_str("inf")
    } else {
        ser.serialize_f64(*value)
    }
}

pub fn deserialize_saturation<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }
    match Repr::deserialize(de)? {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => parse_saturation(&s).map_err(serde::de::Error::custom),
    }
}

/// Parses a clipping level; `inf` (any case, optional sign `+`) is the linear
/// limit.
pub fn parse_saturation(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    match t.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        _ => t
            .parse::<f64>()
            .map_err(|e| format!("invalid saturation value `{t}`: {e}")),
    }
}

/// The clipping saturation nonlinearity `f`.
#[inline]
pub fn clip(x: f64, saturation: f64) -> f64 {
    if x > saturation {
        saturation
    } else if x < -saturation {
        -saturation
    } else {
        x
    }
}

/// Order parameters `Q = w.w / N` and `r = g.w / N`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MacroState {
    #[serde(rename = "Q")]
    pub q: f64,
    pub r: f64,
}

impl MacroState {
    pub const ORIGIN: MacroState = MacroState { q: 0.0, r: 0.0 };

    pub fn new(q: f64, r: f64) -> Self {
        Self { q, r }
    }
}

/// Cosine of the angle between `g` and `w`; `None` when `Q = 0`.
pub fn cos_theta(state: MacroState, params: &SystemParams) -> Option<f64> {
    if state.q > 0.0 {
        Some(state.r / (params.sigma_g() * state.q.sqrt()))
    } else {
        None
    }
}

/// One recorded point of a theory trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroPoint {
    pub t: f64,
    pub state: MacroState,
    pub mse: f64,
    pub msd_norm: f64,
    pub cos_theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MacroTrajectory {
    pub points: Vec<MacroPoint>,
    /// Set when round-off pushed `Q` below zero and it was clamped back.
    pub q_clamped: bool,
}

impl MacroTrajectory {
    pub fn last(&self) -> Option<&MacroPoint> {
        self.points.last()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point whose time is closest to `t`.
    pub fn at(&self, t: f64) -> Option<&MacroPoint> {
        self.points
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validate_accepts_nominal() {
        assert!(SystemParams::new(1.0, 1.0, 0.0, 1.0, 0.5).validate().is_ok());
        assert!(SystemParams::new(1.0, 1.0, 0.0, f64::INFINITY, 0.5)
            .validate()
            .is_ok());
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let base = SystemParams::default();
        let field = |p: SystemParams| match p.validate() {
            Err(Error::InvalidParam { field, .. }) => field,
            other => panic!("expected InvalidParam, got {other:?}"),
        };
        assert_eq!(field(SystemParams { rho2: 0.0, ..base }), "rho2");
        assert_eq!(field(SystemParams { mu: -0.1, ..base }), "mu");
        assert_eq!(field(SystemParams { sigma_g2: 0.0, ..base }), "sigma_g2");
        assert_eq!(field(SystemParams { sigma_xi2: -1.0, ..base }), "sigma_xi2");
        assert_eq!(field(base.with_saturation(-0.5)), "S");
        assert_eq!(field(base.with_saturation(f64::NAN)), "S");
        assert_eq!(field(SystemParams { rho2: f64::INFINITY, ..base }), "rho2");
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip(0.5, 1.0), 0.5);
        assert_eq!(clip(2.0, 1.0), 1.0);
        assert_eq!(clip(-3.0, 1.0), -1.0);
        assert_eq!(clip(7.0, 0.0), 0.0);
        assert_eq!(clip(-7.0, f64::INFINITY), -7.0);
    }

    #[test]
    fn cos_theta_examples() {
        let p = SystemParams::default();
        assert_eq!(cos_theta(MacroState::new(1.0, 1.0), &p), Some(1.0));
        assert_eq!(cos_theta(MacroState::new(4.0, 0.0), &p), Some(0.0));
        assert_eq!(cos_theta(MacroState::ORIGIN, &p), None);
    }

    #[test]
    fn saturation_serde_roundtrip() {
        let p = SystemParams::default().with_saturation(f64::INFINITY);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"S\":\"inf\""), "{json}");
        let back: SystemParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert_eq!(parse_saturation("Inf"), Ok(f64::INFINITY));
        assert_eq!(parse_saturation("1.5"), Ok(1.5));
        assert!(parse_saturation("abc").is_err());
    }

    proptest! {
        #[test]
        fn clip_is_odd(x in -1e3..1e3f64, s in 0.0..10.0f64) {
            prop_assert_eq!(clip(-x, s), -clip(x, s));
        }

        #[test]
        fn clip_is_idempotent_and_bounded(x in -1e3..1e3f64, s in 0.0..10.0f64) {
            let c = clip(x, s);
            prop_assert_eq!(clip(c, s), c);
            prop_assert!(c.abs() <= s);
        }

        #[test]
        fn clip_is_monotone(x in -1e3..1e3f64, dx in 0.0..10.0f64, s in 0.0..10.0f64, ds in 0.0..10.0f64) {
            prop_assert!(clip(x, s) <= clip(x + dx, s));
            if x > 0.0 {
                prop_assert!(clip(x, s) <= clip(x, s + ds));
            }
        }

        #[test]
        fn cos_theta_scale_invariant(q in 1e-3..1e3f64, frac in -1.0..1.0f64, c in 1e-2..1e2f64) {
            let p = SystemParams::default();
            let r = frac * q.sqrt();
            let a = cos_theta(MacroState::new(q, r), &p).unwrap();
            let b = cos_theta(MacroState::new(c * c * q, c * r), &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
