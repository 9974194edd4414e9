use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must be factorizable turned out singular to working
    /// precision (e.g. an unconstrained Laplacian, or `I + G'C` at a
    /// resolution the fine space cannot support).
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A solve produced an unusable result.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Pins faer to sequential execution. The parallel LU in the linked faer
/// version returns wrong factors for a window of matrix sizes (observed
/// around n = 1500 with two rayon threads; solve residuals jump from 1e-12
/// to 1e+2 on random matrices). Sequential kernels are correct, nearly as
/// fast at our sizes, and keep every run bit-reproducible.
pub(crate) fn ensure_sequential_linalg() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}
