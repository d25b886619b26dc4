use alloc::string::String;

/// Errors reported by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input data does not satisfy an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An STFT or estimator configuration is unusable.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A covariance matrix could not be factorized even after diagonal loading.
    #[error("covariance matrix of bin {bin} is singular (loading up to {loading:e})")]
    SingularCovariance { bin: usize, loading: f64 },
    /// The bordered KKT matrix could not be solved.
    #[error("KKT system is singular (trace {trace:e}, smallest pivot {pivot:e})")]
    SingularKkt { trace: f64, pivot: f64 },
    /// The optimizer produced a non-finite offset.
    #[error("non-finite SRO estimate at outer iteration {iteration}: {state}")]
    NonFinite { iteration: usize, state: String },
}

pub type Result<T> = core::result::Result<T, Error>;
