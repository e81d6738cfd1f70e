use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: need b > a, got a = {a}, b = {b}")]
    InvalidBounds { a: f64, b: f64 },

    #[error("invalid grid size {n}: at least 2 cells are required")]
    InvalidSize { n: usize },

    #[error("node x = {x} is not strictly inside ({a}, {b})")]
    DegenerateNode { x: f64, a: f64, b: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("regime error: {0}")]
    Regime(String),

    #[error("steady-state solve collapsed to the trivial minimizer (norm {norm:.3e})")]
    TrivialMinimizer { norm: f64 },

    #[error("mismatched trajectories: {0}")]
    MismatchedTrajectories(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
