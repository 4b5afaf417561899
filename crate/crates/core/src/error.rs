use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("formula `{formula}`: {message}")]
    Formula { formula: String, message: String },

    #[error("elliptic coefficient rejected: {0}")]
    Coefficient(String),

    #[error("kernel rejected: {0}")]
    Kernel(String),

    #[error("exterior tail quadrature did not converge at node {node} (x = {x:?}); error estimate {error:e}")]
    TailQuadrature { node: usize, x: [f64; 2], error: f64 },

    #[error("quadrature did not converge: estimated error {error:e} after {intervals} subintervals")]
    Quadrature { error: f64, intervals: usize },

    #[error("mollifier width {width:e} is under-resolved (needs at least 2h = {two_h:e}); refine the grid or lower n")]
    UnderResolvedMollifier { width: f64, two_h: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear solver stopped after {iterations} iterations with relative residual {residual:e}")]
    LinearNonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("fixed-point iteration stopped after {iterations} iterations (last relative step {last_step:e}, damping {damping}); try a smaller damping")]
    FixedPointNonConvergence {
        iterations: usize,
        last_step: f64,
        damping: f64,
    },

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("boundary strip of width {eps} contains no grid node")]
    EmptyStrip { eps: f64 },

    #[error("empty fitting window: {0}")]
    EmptyWindow(String),

    #[error("incomplete norm table: missing {0}")]
    IncompleteTable(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
