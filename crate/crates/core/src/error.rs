use thiserror::Error;

pub type Result<T> = std::result::Result<T, CevError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CevError {
    #[error("invalid {name} = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: String,
    },

    #[error("beta = {beta} is outside the admissible interval (0, {upper}) for p = {p}")]
    BetaOutOfRange { p: f64, beta: f64, upper: f64 },

    #[error("stopping level {level} is not below the initial value x0 = {x0}; the path would stop at time 0")]
    LevelNotBelowStart { level: f64, x0: f64 },

    #[error("horizon t = {t} exceeds the simulation horizon t_max = {t_max}")]
    HorizonBeyondSimulation { t: f64, t_max: f64 },

    #[error("step count t_max/delta = {steps:e} overflows the step counter")]
    StepOverflow { steps: f64 },

    #[error("quadrature did not reach relative tolerance {rel_tol:e} ({detail})")]
    Quadrature { rel_tol: f64, detail: String },

    #[error("relative error undefined for exact value {0}")]
    ZeroReference(f64),
}

impl CevError {
    pub(crate) fn invalid(name: &'static str, value: f64, constraint: impl Into<String>) -> Self {
        CevError::InvalidParameter {
            name,
            value,
            constraint: constraint.into(),
        }
    }
}
