use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GeometryError {
    #[error("edge {edge} is degenerate (length {length:e} m)")]
    DegenerateEdge { edge: usize, length: f64 },
    #[error("head axis is (nearly) vertical; lateral direction undefined")]
    VerticalHeadAxis,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("newton solver failed at t = {time:.6} s: {detail}")]
    SolverFailure { time: f64, detail: String },
    #[error("singular linear system (pivot {pivot} vanished)")]
    Singular { pivot: usize },
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate circle fit (condition number {condition:e})")]
    DegenerateFit { condition: f64 },
    #[error("trajectory not yet steady: fit residual {residual:e} m exceeds {limit:e} m")]
    NotSteady { residual: f64, limit: f64 },
    #[error("switching trajectory is not periodic: displacement scatter {scatter:.3}")]
    NotPeriodic { scatter: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("quadrature did not converge (error estimate {estimate:e})")]
    Quadrature { estimate: f64 },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("degenerate motion primitive: {0}")]
    Degenerate(String),
    #[error("infeasible path: {0}")]
    Infeasible(String),
    #[error("edge {edge} is too short ({length:.4} m) for the turn corrections ({needed:.4} m)")]
    EdgeTooShort { edge: usize, length: f64, needed: f64 },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}
