//! Oracle calls with an emulated cost, library generation and parallel
//! cross-validation.

use std::thread;
use std::time::Instant;

use carsfit_core::oracle::oracle_cost_model;
use carsfit_core::tuning::{cv_error_on, cv_splits};
use carsfit_core::{
    generate_spectrum, CvConfig, CvReport, OracleConfig, ParameterSpace, ParameterVector, Sampling,
    SpectralLibrary, Spectrum, WavenumberGrid,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::Result;

/// Calls the synthetic generator, sleeping for the configured per-call
/// delay first so the generator behaves like an expensive physics code.
#[derive(Debug, Clone)]
pub struct OracleRunner {
    pub config: OracleConfig,
}

impl OracleRunner {
    pub fn new(config: OracleConfig) -> Result<Self> {
        config.validate()?;
        Ok(OracleRunner { config })
    }

    pub fn call(&self, params: &[f64], grid: &WavenumberGrid) -> Result<Spectrum> {
        let delay = oracle_cost_model(&self.config);
        if !delay.is_zero() {
            thread::sleep(delay);
        }
        Ok(generate_spectrum(params, grid, &self.config)?)
    }

    /// Spectra for all `params`, evaluated in parallel, in input order.
    pub fn call_many(
        &self,
        params: &[ParameterVector],
        grid: &WavenumberGrid,
    ) -> Result<Vec<Vec<f64>>> {
        params
            .par_iter()
            .map(|p| self.call(p, grid).map(|s| s.values))
            .collect()
    }

    pub fn library(
        &self,
        params: &[ParameterVector],
        space: &ParameterSpace,
        sampling: Sampling,
        grid: &WavenumberGrid,
    ) -> Result<SpectralLibrary> {
        let spectra = self.call_many(params, grid)?;
        let p = space.dim();
        let x = DMatrix::from_fn(p, params.len(), |i, j| {
            params[j].get(i).copied().unwrap_or(f64::NAN)
        });
        let r = DMatrix::from_fn(grid.len(), spectra.len(), |i, j| spectra[j][i]);
        Ok(SpectralLibrary::from_parts(
            x,
            r,
            grid.clone(),
            space.clone(),
            sampling,
        )?)
    }
}

/// Parallel version of [`carsfit_core::select_gamma`]; every (γ, split)
/// pair is independent and the report is assembled in grid order, so the
/// result is identical to the serial one.
pub fn select_gamma_parallel(lib: &SpectralLibrary, cfg: &CvConfig) -> Result<CvReport> {
    cfg.validate()?;
    let splits = cv_splits(lib.len(), cfg)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.gamma_grid.len())
        .flat_map(|g| (0..splits.len()).map(move |s| (g, s)))
        .collect();
    let errors: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, s)| cv_error_on(lib, cfg.gamma_grid[g], &splits[s], &cfg.train, cfg.metric))
        .collect();
    let per_iteration = errors.chunks(splits.len()).map(<[f64]>::to_vec).collect();
    Ok(CvReport::from_errors(
        cfg.gamma_grid.clone(),
        per_iteration,
        cfg.aggregation,
    )?)
}

/// Wall time of one call, in seconds.
pub fn time_call<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
