use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("branch {branch} has zero series impedance")]
    ZeroImpedance { branch: String },

    #[error("profile error: {0}")]
    Profile(String),

    #[error("horizon mismatch: expected {expected} steps, found {found}")]
    Horizon { expected: usize, found: usize },

    #[error("load flow did not converge after {iterations} iterations (worst mismatch {worst_mismatch:.3e} pu at bus {bus})")]
    NonConvergence {
        iterations: usize,
        worst_mismatch: f64,
        bus: String,
    },

    #[error("singular load-flow Jacobian")]
    SingularJacobian,

    #[error("step {t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("LP solver failed: {0}")]
    Solver(String),

    #[error("intervention period {period} is infeasible: {element} cannot be brought within limits")]
    Infeasible { period: usize, element: String },

    #[error("OPF stagnated on period {period} after {iterations} iterations (residual violation {violation:.3e} at {element})")]
    Stagnation {
        period: usize,
        iterations: usize,
        violation: f64,
        element: String,
    },

    #[error("state of charge mismatch at bus {bus}, step {step}: {diff:.3e} kWh")]
    SocMismatch { bus: String, step: usize, diff: f64 },

    #[error("{0}")]
    Invalid(String),

    #[error("config {key}: {msg}")]
    Config { key: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
