use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solver failed: non-positive pivot {pivot:e} at equation {row} of {size}")]
    SolverFailure { row: usize, size: usize, pivot: f64 },

    #[error("off-diagonal conductivity {off_diagonal:e} exceeds orthotropic tolerance{}", params_suffix(.params))]
    SymmetryViolation {
        off_diagonal: f64,
        params: Option<(usize, usize, usize)>,
    },

    #[error("degenerate probes: |T_A - T_D| = {0:e}")]
    DegenerateProbes(f64),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("zero normalizer for the {0} term")]
    ZeroNormalizer(&'static str),

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing geometry for record {0}")]
    MissingGeometry(usize),

    #[error("unknown scenario '{name}' (valid: {valid})")]
    UnknownScenario { name: String, valid: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

fn params_suffix(params: &Option<(usize, usize, usize)>) -> String {
    match params {
        Some((t1, t2, t3)) => format!(" for t=({t1},{t2},{t3})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
