use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} lies outside [{lo}, {hi}]")]
    OutOfDomain {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{0}")]
    Domain(String),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("parameter vectors {first} and {second} are identical")]
    DuplicateParameters { first: usize, second: usize },
    #[error("parameter {index} has zero spread across the library")]
    DegenerateLibrary { index: usize },
    #[error(
        "kernel matrix is ill-conditioned (condition estimate {estimate:.3e} > {limit:.1e}); \
         use a smaller gamma or a different library"
    )]
    IllConditioned { estimate: f64, limit: f64 },
    #[error("kernel matrix is not numerically positive definite; use a smaller gamma")]
    NotPositiveDefinite,
    #[error(
        "rejection sampling gave up after {attempts} rejections; parameter boxes are infeasible"
    )]
    SamplingExhausted { attempts: u64 },
    #[error("grid library is incomplete: {0}")]
    IncompleteGrid(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("every gamma candidate failed cross-validation; library too small or degenerate")]
    NoViableGamma,
}
