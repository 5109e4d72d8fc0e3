//! Parallel batch fitting of validation spectra.

use std::time::Instant;

use carsfit_core::oracle::validate_snr;
use carsfit_core::stats::summarize_estimates;
use carsfit_core::{
    add_noise, fit_spectrum, ErrorSummary, FitOptions, GridInterpolant, ParameterSpace,
    ParameterVector, Spectrum, Surrogate, WavenumberGrid,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formats::FitOutcome;

/// Seed for item `index` of a batch drawn from `base`.
pub fn item_seed(base: u64, index: usize) -> u64 {
    carsfit_core::tuning::split_seed(base, index)
}

/// Adds log-domain noise at `snr` to every spectrum; spectrum `i` uses
/// `item_seed(seed, i)`.
pub fn noisy_targets(
    spectra: &[Vec<f64>],
    grid: &WavenumberGrid,
    snr: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    validate_snr(snr)?;
    spectra
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let clean = Spectrum::new(s.clone(), grid)?;
            Ok(add_noise(&clean, snr, item_seed(seed, i))?.values)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub count: usize,
    pub failures: usize,
    pub converged: usize,
    /// Per-parameter absolute errors, present when truths were supplied.
    pub errors: Option<ErrorSummary>,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    /// One entry per input spectrum, in input order.
    pub outcomes: Vec<FitOutcome>,
    /// Per-fit wall time in seconds, in input order.
    pub fit_seconds: Vec<f64>,
    pub summary: BatchSummary,
}

impl BatchReport {
    pub fn median_fit_seconds(&self) -> Option<f64> {
        carsfit_core::stats::median(&self.fit_seconds)
    }
}

/// Fits every target independently (in parallel) and summarizes errors
/// against `truths` when given. A failed item is recorded, not fatal.
pub fn fit_batch<S: Surrogate + Sync + ?Sized>(
    targets: &[Vec<f64>],
    model: &S,
    space: &ParameterSpace,
    opts: &FitOptions,
    truths: Option<&[ParameterVector]>,
) -> Result<BatchReport> {
    if let Some(t) = truths {
        if t.len() != targets.len() {
            return Err(carsfit_core::Error::Domain(format!(
                "{} spectra but {} truth vectors",
                targets.len(),
                t.len()
            ))
            .into());
        }
    }
    let timed: Vec<(FitOutcome, f64)> = targets
        .par_iter()
        .map(|target| {
            let start = Instant::now();
            let outcome = fit_spectrum(model, target, space, opts).map_err(|e| e.to_string());
            let elapsed = start.elapsed();
            let outcome = outcome.map(|mut r| {
                r.wall_time = elapsed;
                r
            });
            (outcome, elapsed.as_secs_f64())
        })
        .collect();
    let (outcomes, fit_seconds): (Vec<FitOutcome>, Vec<f64>) = timed.into_iter().unzip();
    let summary = summarize(&outcomes, &space.names, truths)?;
    Ok(BatchReport {
        outcomes,
        fit_seconds,
        summary,
    })
}

/// [`fit_batch`] with the Lagrange baseline as the forward model.
pub fn fit_with_lagrange(
    targets: &[Vec<f64>],
    interp: &GridInterpolant,
    space: &ParameterSpace,
    opts: &FitOptions,
    truths: Option<&[ParameterVector]>,
) -> Result<BatchReport> {
    fit_batch(targets, interp, space, opts, truths)
}

fn summarize(
    outcomes: &[FitOutcome],
    names: &[String],
    truths: Option<&[ParameterVector]>,
) -> Result<BatchSummary> {
    let failures = outcomes.iter().filter(|o| o.is_err()).count();
    let converged = outcomes
        .iter()
        .filter(|o| o.as_ref().is_ok_and(|r| r.converged))
        .count();
    let errors = match truths {
        Some(truths) => {
            let (est, tru): (Vec<ParameterVector>, Vec<ParameterVector>) = outcomes
                .iter()
                .zip(truths)
                .filter_map(|(o, t)| o.as_ref().ok().map(|r| (r.x_star.clone(), t.clone())))
                .unzip();
            Some(summarize_estimates(names, &est, &tru)?)
        }
        None => None,
    };
    Ok(BatchSummary {
        count: outcomes.len(),
        failures,
        converged,
        errors,
    })
}
