use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("no adjoint registered for recorded op `{0}`")]
    MissingAdjoint(&'static str),

    #[error("gradient of parameter {id} ({name}) contains NaN")]
    NanGradient { id: usize, name: String },

    #[error("invalid irreps layout `{input}`: {reason}")]
    LayoutParse { input: String, reason: String },

    #[error("layout mismatch at {slot}: {reason}")]
    LayoutMismatch { slot: String, reason: String },

    #[error("output slots reachable by no path: {0}")]
    UnreachableOutputs(String),

    #[error("degenerate direction (norm {0:e})")]
    DegenerateDirection(f64),

    #[error("gate mismatch: {0}")]
    Gate(String),

    #[error("infeasible layout: {0}")]
    InfeasibleLayout(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("simulation diverged: non-finite acceleration on particle {0}")]
    Diverged(usize),

    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
