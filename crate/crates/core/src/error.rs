use thiserror::Error;

/// Errors raised anywhere in the simulation and identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("dimension mismatch: {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("non-physical parameters: {0}")]
    NonPhysical(String),

    #[error("simulation diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("source trajectory {source_index} has {len} control steps, shorter than horizon {horizon}")]
    TooShort {
        source_index: usize,
        len: usize,
        horizon: usize,
    },

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("foot-height constraint is insensitive to the active joints (|J| = {norm:e})")]
    SingularJacobian { norm: f64 },

    #[error("foot-height correction did not converge after {iterations} iterations (residual {residual:e})")]
    NonConverged { iterations: usize, residual: f64 },

    #[error("at timestep {timestep}: {source}")]
    AtTimestep {
        timestep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Strips iteration/timestep context wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::AtTimestep { source, .. } | Error::AtIteration { source, .. } => {
                source.root_cause()
            }
            other => other,
        }
    }

    /// True for failures of the numerics (divergence, bad gradients, QP failures)
    /// as opposed to malformed inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root_cause(),
            Error::Divergence { .. }
                | Error::NonFiniteGradient { .. }
                | Error::SingularJacobian { .. }
                | Error::NonConverged { .. }
                | Error::NonPhysical(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root_cause(), Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
