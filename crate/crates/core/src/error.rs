use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("degenerate part {name} (joints {parent} -> {child} coincide)")]
    DegeneratePart {
        name: String,
        parent: usize,
        child: usize,
    },

    #[error("point behind camera (depth {0})")]
    BehindCamera(f64),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("bad container: {0}")]
    Container(String),

    #[error("not enough samples: need at least {need}, got {got}")]
    NotEnoughSamples { need: usize, got: usize },

    #[error("no constraints: no residual is active for this stage")]
    NoConstraints,

    #[error("non-finite residual at the initial parameters")]
    NonFiniteResidual,

    #[error("singular system: damping exceeded {0:e}")]
    Singular(f64),

    #[error("joint set mismatch: {0}")]
    JointSetMismatch(String),

    #[error("flow provider failed: {0}")]
    Flow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
