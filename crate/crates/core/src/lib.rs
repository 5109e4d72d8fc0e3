//! Gaussian-kernel surrogates for slow parametric spectrum generators.
//!
//! The crate is `no_std` (with `alloc`) so the numerical pieces can be
//! embedded anywhere; file formats, timing, parallel batches and the CLI live
//! in the `carsfit` companion crate.
//!
//! Pipeline, in the order the modules are usually used:
//!
//! * [`oracle`]: a deterministic synthetic spectrum generator (complex
//!   susceptibility with resonant lines and a non-resonant background) plus
//!   log-domain measurement noise.
//! * [`library`]: random simplex-constrained or gridded parameter sets and
//!   the spectral libraries built from them.
//! * [`kernel`]: the interpolating Gaussian-kernel surrogate
//!   `r̂(x) = W exp(-γ‖z(x) − Z‖²)` with an analytic Jacobian.
//! * [`tuning`]: cross-validated bandwidth selection.
//! * [`fitter`]: multi-start constrained least squares recovering parameters
//!   from a measured spectrum.
//! * [`lagrange`]: tensor-product Lagrange interpolation over a regular grid,
//!   the classical baseline.
//! * [`stats`]: box-plot summaries of recovery errors.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod fitter;
pub mod kernel;
pub mod lagrange;
pub mod library;
pub mod oracle;
pub mod params;
mod qp;
pub mod stats;
pub mod tuning;

pub use error::{Error, Result};
pub use fitter::{fit_spectrum, initial_points, FitOptions, FitProblem, FitResult, Surrogate};
pub use kernel::{kernel, squared_distances, train, Standardization, SurrogateModel, TrainOptions};
pub use lagrange::{build_lagrange, GridInterpolant};
pub use library::{
    build_library, grid_parameters, sample_physical_parameters, Sampling, SpectralLibrary,
};
pub use oracle::{add_noise, generate_spectrum, GridId, OracleConfig, Spectrum, WavenumberGrid};
pub use params::{Interval, ParameterSpace, ParameterVector};
pub use stats::{error_summary, BoxStats, ErrorSummary};
pub use tuning::{select_gamma, Aggregation, CvConfig, CvReport, ErrorMetric};
