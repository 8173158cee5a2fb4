use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("pole placement direction vector is zero")]
    ZeroDirection,
    #[error("requested poles are not closed under complex conjugation")]
    NonConjugatePair,
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("state became non-finite at t = {t} s")]
    NonFiniteState { t: f64 },
    #[error("grid frequency {omega} rad/s is too close to zero")]
    ZeroFrequency { omega: f64 },
    #[error("power set-point {p_star} pu exceeds the static transfer limit (alpha_p * p* = {ratio})")]
    InfeasibleSetpoint { p_star: f64, ratio: f64 },
    #[error("grid flux set-point is singular")]
    SingularFlux,
    #[error("no closed-loop equilibrium found (residual {residual:e})")]
    NoEquilibrium { residual: f64 },
    #[error("no steady state in the final window (p varies by {spread} pu)")]
    NoSteadyState { spread: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
