use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// `aᵢ(z_m) <= 0` for term `i` and sample `m` (both zero-based).
    #[error("positivity violated: a_{i}(z_{m}) = {value}")]
    Positivity { i: usize, m: usize, value: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("CFL condition violated: ratio {ratio:.6e} > bound {bound:.6e} ({kind})")]
    Cfl { kind: String, ratio: f64, bound: f64 },

    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("non-finite value at step {step}")]
    Instability { step: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
