use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension out of range: {0}")]
    DimensionOutOfRange(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rank-deficient Slater coefficients: rank {rank} < {particles} particles")]
    RankDeficient { rank: usize, particles: usize },
    #[error("wrong sector: expected (d={expected_modes}, n={expected_particles}), got (d={modes}, n={particles})")]
    WrongSector {
        expected_modes: usize,
        expected_particles: usize,
        modes: usize,
        particles: usize,
    },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
