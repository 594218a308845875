use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dyadic arithmetic overflow")]
    Overflow,
    #[error("center is not on the dyadic lattice of level {0}")]
    NonDyadicCenter(i32),
    #[error("cell is not a member of the complex")]
    NotInComplex,
    #[error("operation undefined for a 0-dimensional cell")]
    ZeroDimCell,
    #[error("axiom ({axiom}) violated: {detail}")]
    AxiomViolation { axiom: &'static str, detail: String },
    #[error("complex too large: {cells} cells exceeds cap {cap}")]
    SizeCap { cells: usize, cap: usize },
    #[error("frame is not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),
    #[error("planes are at distance {0} (graph map undefined)")]
    DistanceOne(f64),
    #[error("linear map is singular (condition number {0:e})")]
    Singular(f64),
    #[error("need at least {needed} neighbours, have {got}")]
    InsufficientNeighbors { needed: usize, got: usize },
    #[error("integrand value {value} outside [1/{lambda}, {lambda}]")]
    IntegrandOutOfBounds { value: f64, lambda: f64 },
    #[error("no admissible center found in cell {cell} after {tries} tries")]
    CenterExhausted { cell: String, tries: usize },
    #[error("no center supplied for occupied cell {0}")]
    MissingCenter(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
