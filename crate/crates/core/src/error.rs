use thiserror::Error;

use crate::model::MacroState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("state became non-finite at t = {t}; last valid state Q = {}, r = {}", last.q, last.r)]
    NonFinite { t: f64, last: MacroState },

    #[error("mean-square unstable: mu * rho2 = {mu_rho2} >= 2 in the linear limit")]
    Stability { mu_rho2: f64 },

    #[error("steady-state solver failed: {0}")]
    Solver(String),

    #[error("covariance is not positive semi-definite: r^2 = {r2} > sigma_g2 * Q = {bound}")]
    Covariance { r2: f64, bound: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
