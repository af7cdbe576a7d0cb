use std::path::PathBuf;

/// Errors produced anywhere in the simulator, optimizer or training loop.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of a formula
    /// (non-positive frequency, gap width, distance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A condition value lies outside the configured range of a material model.
    #[error("condition {value} outside configured range [{min}, {max}]")]
    Range { value: f64, min: f64, max: f64 },

    /// The load impedance equals `-Z0`.
    #[error("reflection coefficient is singular: Z + Z0 = 0")]
    Singularity,

    /// The sensor array is larger than the antenna footprint (eta_ms > 1).
    #[error("geometry error: sensor area fraction eta_ms = {0} exceeds 1")]
    Geometry(f64),

    /// A structure vector outside the sampled hull of a correction table.
    #[error("structure {0:?} outside the correction table grid")]
    Extrapolation(Vec<f64>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    /// A pipeline stage failed; partial artifacts are left on disk.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }

    /// Whether the error stems from invalid input configuration rather than
    /// a numerical failure. Used by the CLI to choose its exit code.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Parse { .. } | Error::Dimension { .. } | Error::Empty(_) => {
                true
            }
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
