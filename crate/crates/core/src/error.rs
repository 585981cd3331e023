use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} exceeds the supported 63-bit range")]
    ModulusTooLarge(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("field too small: need {needed} distinct points but the modulus is {modulus}")]
    FieldTooSmall { needed: usize, modulus: u64 },
    #[error("wrong field: expected modulus {expected}, found {found}")]
    FieldMismatch { expected: u64, found: u64 },
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("duplicate evaluation point {0}")]
    DuplicatePoint(u64),
    #[error("not enough evaluations: have {have}, need {need}")]
    NotEnoughSamples { have: usize, need: usize },
    #[error("evaluations are inconsistent with a polynomial of degree < {degree_bound} (corrupted results)")]
    Inconsistent { degree_bound: usize },
    #[error("block counts must be positive")]
    ZeroBlocks,
    #[error("invalid partition parameters: {0}")]
    InvalidPartition(String),
    #[error("invalid recovery profile: {0}")]
    InvalidProfile(String),
    #[error("layer {layer}: threshold {threshold} does not match p*m*n + p - 1 = {expected}")]
    ThresholdMismatch {
        layer: usize,
        threshold: usize,
        expected: usize,
    },
    #[error("need >= {need} servers, only {available} available")]
    InsufficientServers { available: usize, need: usize },
    #[error("server {server} is missing task {task}")]
    MissingTask { server: usize, task: usize },
    #[error("unknown server id {0}")]
    UnknownServer(usize),
    #[error("layer {layer} task {task}: only {have} of {need} evaluations available")]
    InsufficientEvaluations {
        layer: usize,
        task: usize,
        have: usize,
        need: usize,
    },
    #[error("storage constraint infeasible: need C >= {required}")]
    Infeasible { required: f64 },
    #[error("invalid straggler distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
