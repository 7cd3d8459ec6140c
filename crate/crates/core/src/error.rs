use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input out of domain: {0}")]
    InputDomain(String),

    #[error("dissipator rates are singular at eps = {eps}")]
    SingularRate { eps: f64 },

    #[error("spectral gap {gap:.3e} below floor {floor:.3e} at t = {t}")]
    DegenerateSpectrum { t: f64, gap: f64, floor: f64 },

    #[error("integration left the Bloch ball at t = {t} (|a| = {norm})")]
    IntegrationDiverged { t: f64, norm: f64 },

    #[error("extremal branch undefined: {0}")]
    BranchUndefined(String),

    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        /// Shortest horizon for which the request becomes feasible, when known.
        min_horizon: Option<f64>,
    },

    #[error("costate required for this operation")]
    MissingCostate,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::InputDomain(msg.into())
}
