use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inconsistent detunings: delta_ar = {delta_ar} but delta_al - delta_rl = {expected}")]
    InconsistentDetuning { delta_ar: f64, expected: f64 },

    #[error("singular expression: {0}")]
    Singular(&'static str),

    #[error("steady state is not unique ({null_dim} null vectors)")]
    DegenerateSteadyState { null_dim: usize },

    #[error("negative propagation time {0}")]
    NegativeTime(f64),

    #[error("density operator is not stationary (residual {residual:.3e})")]
    NotSteady { residual: f64 },

    #[error("empty-resonator transmission vanishes (critical coupling); input cannot be balanced")]
    Unbalanceable,

    #[error("unknown polarization label {0:?}")]
    UnknownLabel(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("grid is not strictly ascending")]
    UnsortedGrid,

    #[error("coincidence window [{lo} ns, {hi} ns] contains no bins")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("measurement settings are not informationally complete (rank {rank} < 9)")]
    RankDeficient { rank: usize },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("not a physical state: {0}")]
    NotPhysical(String),

    #[error("nonlinear phase undefined: off-diagonal magnitude {magnitude:.3e} below threshold")]
    UndefinedPhase { magnitude: f64 },

    #[error("input state is not normalized (norm² = {norm_sqr})")]
    Unnormalized { norm_sqr: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
