use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MopError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("point {0} is too close to an interval endpoint")]
    Endpoint(f64),
    #[error("supports overlap: {0}")]
    Overlap(String),
    #[error("system is not normal at index ({0}, {1})")]
    Normality(usize, usize),
    #[error("root polish did not converge: {0}")]
    Convergence(String),
    #[error("multiple zero detected: {0}")]
    Zero(String),
    #[error("recurrence coefficient vanishes at ({0}, {1}), direction {2}")]
    ZeroWeight(usize, usize, usize),
    #[error("standing assumption violated: {0}")]
    Assumption(String),
    #[error("vertex {0} is not a joint of the eigenvalue")]
    Joint(usize),
    #[error("canonical vectors are not independent: rank {rank} of {expected}")]
    Rank { rank: usize, expected: usize },
    #[error("neutral vector met during indefinite orthogonalization (|[v,v]| = {0:e})")]
    NeutralVector(f64),
    #[error("series inversion lost all significant digits at order {0}")]
    Series(usize),
    #[error("point is within the guard band of a branch point: {0}")]
    Branch(String),
    #[error("invalid surface parameters: {0}")]
    InvalidSurface(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, MopError>;
