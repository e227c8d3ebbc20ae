use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate element {element}: volume {volume:e} mm^3")]
    DegenerateElement { element: usize, volume: f64 },

    #[error("boundary partition: {0}")]
    BoundaryPartition(String),

    #[error("{quantity} = {value} outside admissible range {range}")]
    Domain {
        quantity: &'static str,
        value: f64,
        range: String,
    },

    #[error("strain tensor is not symmetric (asymmetry {0:e})")]
    NonSymmetricStrain(f64),

    #[error("CG did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgMaxIter { iterations: usize, residual: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("load is not self-equilibrated: resultant/moment ratio {0:e}")]
    UnbalancedLoad(f64),

    #[error("no traction defined for loaded facet group {0}")]
    MissingTraction(u32),

    #[error("rigid-body modes are degenerate (nodes collinear)")]
    DegenerateRigidModes,

    #[error("invariant violated at step {step}, element/node {index}: {what}")]
    Invariant {
        step: usize,
        index: usize,
        what: String,
    },

    #[error("objective undefined: {0}")]
    Objective(String),

    #[error("config: {0}")]
    Config(String),

    #[error("at optimizer iteration {iteration}: {source}")]
    Iterate {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code: 2 for input and configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Iterate { source, .. } => source.exit_code(),
            Error::CgMaxIter { .. }
            | Error::NonFinite(_)
            | Error::NonSymmetricStrain(_)
            | Error::Invariant { .. }
            | Error::Objective(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
