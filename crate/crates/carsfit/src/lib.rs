//! Files, batch drivers, studies and the `carsfit` command-line tool built
//! on [`carsfit_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod cli;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;
pub mod studies;

pub use carsfit_core as core;
pub use error::{Error, Result};
