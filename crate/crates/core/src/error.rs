use thiserror::Error;

use crate::mesh::{Cell, Vertex};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("pattern ratio must lie strictly inside (0, 1), got {0}")]
    InvalidRatio(f64),

    #[error("corner nodes {first:?} and {second:?} share cell {cell:?}")]
    CornerAdjacencyViolation {
        first: Vertex,
        second: Vertex,
        cell: Cell,
    },

    #[error("cell {0:?} is neither active nor a registered expansion cell")]
    NotAPatchCenter(Cell),

    #[error("Morley degrees of freedom are not consistent with a quadratic (relative residual {residual:.3e})")]
    InconsistentDofs { residual: f64 },

    #[error("the discrete space is empty (no interior cells)")]
    EmptySpace,

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("rate fit needs at least two finite positive samples, got {0}")]
    InsufficientData(usize),

    #[error("subdomain has zero area")]
    DegenerateSubdomain,

    #[error("singular Gram matrix: {0}")]
    SingularGram(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
