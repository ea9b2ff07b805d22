use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("row {dim} is degenerate (an entry is 0 or 1); the Fisher block is singular")]
    SingularFisher { dim: usize },

    #[error("cost model has no positive entry")]
    AllZeroCosts,

    #[error("empty batch")]
    EmptyBatch,

    #[error("sample {index} has zero probability under the mixture")]
    ZeroMixtureMass { index: usize },

    #[error("loss of sample {0} is not finite")]
    NonFiniteLoss(usize),

    #[error("projection floor {floor} is infeasible for a row of {k} categories")]
    InfeasibleFloor { floor: f64, k: usize },

    #[error("learning rate must be positive, got {0}")]
    NonPositiveLearningRate(f64),

    #[error("row {dim} contains a non-finite entry")]
    NonFinite { dim: usize },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),

    #[error("space has {0} architectures, more than the enumeration limit")]
    SpaceTooLarge(u128),

    #[error("no architecture found within the complexity band around {target}")]
    EmptyBand { target: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
