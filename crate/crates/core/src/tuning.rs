//! Cross-validated choice of the kernel bandwidth γ.
//!
//! For each candidate γ the library is split `iterations` times into a
//! training part (default 75%) and a test part; the surrogate is trained on
//! the first and scored on the second, and the scores are aggregated. The
//! chosen γ* minimizes the aggregate, ties going to the smaller γ. The same
//! splits are reused for every candidate.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{train_with, SurrogateModel, TrainOptions};
use crate::library::SpectralLibrary;
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// Mean absolute log-intensity difference per wavenumber.
    #[default]
    MeanAbsolute,
    MeanSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    /// Candidate bandwidths, strictly increasing.
    pub gamma_grid: Vec<f64>,
    pub iterations: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub metric: ErrorMetric,
    pub train: TrainOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            gamma_grid: log_grid(1e-4, 1e2, 25),
            iterations: 5,
            train_fraction: 0.75,
            seed: 0,
            aggregation: Aggregation::Mean,
            metric: ErrorMetric::MeanAbsolute,
            train: TrainOptions::default(),
        }
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return alloc::vec![lo];
    }
    let (a, b) = (libm::log10(lo), libm::log10(hi));
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else if i == 0 {
                lo
            } else {
                libm::pow(10.0, a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() {
            return Err(Error::Domain("gamma grid is empty".into()));
        }
        if self
            .gamma_grid
            .iter()
            .any(|g| !(*g > 0.0) || !g.is_finite())
        {
            return Err(Error::Domain(
                "gamma candidates must be positive and finite".into(),
            ));
        }
        if self.gamma_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain(
                "gamma grid must be strictly increasing".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::Domain(
                "at least one CV iteration is required".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Domain(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Index partition of a library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random split with `⌈fraction · n⌉` training indices (sorted) and the
/// remainder as test indices (sorted).
pub fn split(n: usize, train_fraction: f64, seed: u64) -> Result<CvSplit> {
    let n_train = libm::ceil(train_fraction * n as f64) as usize;
    if n_train < 2 || n_train >= n {
        return Err(Error::Domain(format!(
            "library of {n} entries cannot be split {n_train}/{} for cross-validation",
            n.saturating_sub(n_train)
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(CvSplit { train, test })
}

/// Seed for the `i`-th split of a CV run.
pub fn split_seed(base: u64, iteration: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(iteration as u64)
}

pub fn cv_splits(n: usize, cfg: &CvConfig) -> Result<Vec<CvSplit>> {
    (0..cfg.iterations)
        .map(|i| split(n, cfg.train_fraction, split_seed(cfg.seed, i)))
        .collect()
}

/// Test error of a model trained on `split.train` and scored on
/// `split.test`; `+∞` when training fails (e.g. ill-conditioned `K`).
pub fn cv_error_on(
    lib: &SpectralLibrary,
    gamma: f64,
    split: &CvSplit,
    opts: &TrainOptions,
    metric: ErrorMetric,
) -> f64 {
    let train_params = lib.params().select_columns(&split.train);
    let train_spectra = lib.spectra().select_columns(&split.train);
    let model = match SurrogateModel::fit(&train_params, &train_spectra, lib.grid(), gamma, opts) {
        Ok(m) => m,
        Err(_) => return f64::INFINITY,
    };
    let predicted = model.predict_many(&lib.params().select_columns(&split.test));
    let truth = lib.spectra().select_columns(&split.test);
    let diff = predicted - truth;
    let count = diff.len() as f64;
    let err = match metric {
        ErrorMetric::MeanAbsolute => diff.iter().map(|v| v.abs()).sum::<f64>() / count,
        ErrorMetric::MeanSquared => diff.iter().map(|v| v * v).sum::<f64>() / count,
    };
    if err.is_finite() {
        err
    } else {
        f64::INFINITY
    }
}

/// Single-split error with default training options and metric.
pub fn cv_error(lib: &SpectralLibrary, gamma: f64, split_seed: u64) -> Result<f64> {
    let cfg = CvConfig::default();
    let s = split(lib.len(), cfg.train_fraction, split_seed)?;
    Ok(cv_error_on(lib, gamma, &s, &cfg.train, cfg.metric))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub gammas: Vec<f64>,
    /// Aggregated error `E_γ` per candidate.
    pub errors: Vec<f64>,
    /// `per_iteration[g][i]` is `E_i` for candidate `g`.
    pub per_iteration: Vec<Vec<f64>>,
    pub aggregation: Aggregation,
    pub best_index: usize,
    pub gamma_star: f64,
}

impl CvReport {
    /// Aggregates per-split errors and picks the minimizer, ties to the
    /// smaller γ. Fails when every candidate is `+∞`.
    pub fn from_errors(
        gammas: Vec<f64>,
        per_iteration: Vec<Vec<f64>>,
        aggregation: Aggregation,
    ) -> Result<Self> {
        if gammas.len() != per_iteration.len() || gammas.is_empty() {
            return Err(Error::Dimension {
                what: "cv errors",
                expected: gammas.len(),
                got: per_iteration.len(),
            });
        }
        let errors: Vec<f64> = per_iteration
            .iter()
            .map(|e| {
                if e.iter().any(|v| !v.is_finite()) {
                    return f64::INFINITY;
                }
                match aggregation {
                    Aggregation::Mean => e.iter().sum::<f64>() / e.len() as f64,
                    Aggregation::Median => median(e).unwrap_or(f64::INFINITY),
                }
            })
            .collect();
        let mut best_index = None;
        for (i, &e) in errors.iter().enumerate() {
            if e.is_finite() && best_index.is_none_or(|b: usize| e < errors[b]) {
                best_index = Some(i);
            }
        }
        let best_index = best_index.ok_or(Error::NoViableGamma)?;
        Ok(CvReport {
            gamma_star: gammas[best_index],
            gammas,
            errors,
            per_iteration,
            aggregation,
            best_index,
        })
    }

    pub fn best_error(&self) -> f64 {
        self.errors[self.best_index]
    }
}

/// Runs the full grid serially.
pub fn select_gamma(lib: &SpectralLibrary, cfg: &CvConfig) -> Result<CvReport> {
    cfg.validate()?;
    let splits = cv_splits(lib.len(), cfg)?;
    let per_iteration = cfg
        .gamma_grid
        .iter()
        .map(|&g| {
            splits
                .iter()
                .map(|s| cv_error_on(lib, g, s, &cfg.train, cfg.metric))
                .collect()
        })
        .collect();
    CvReport::from_errors(cfg.gamma_grid.clone(), per_iteration, cfg.aggregation)
}

/// Trains on the whole library at the selected bandwidth.
pub fn fit_final(
    lib: &SpectralLibrary,
    gamma_star: f64,
    opts: &TrainOptions,
) -> Result<SurrogateModel> {
    train_with(lib, gamma_star, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_partitions_indices() {
        for n in [4, 10, 37, 200] {
            let s = split(n, 0.75, 9).unwrap();
            let expected_train = libm::ceil(0.75 * n as f64) as usize;
            assert_eq!(s.train.len(), expected_train);
            assert_eq!(s.test.len(), n - expected_train);
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert!(split(2, 0.75, 0).is_err());
    }

    #[test]
    fn ties_go_to_smaller_gamma() {
        let r = CvReport::from_errors(
            alloc::vec![0.1, 1.0, 10.0],
            alloc::vec![alloc::vec![2.0], alloc::vec![1.0], alloc::vec![1.0]],
            Aggregation::Mean,
        )
        .unwrap();
        assert_eq!(r.gamma_star, 1.0);
        assert_eq!(r.best_index, 1);
    }

    #[test]
    fn infinite_splits_disqualify() {
        let r = CvReport::from_errors(
            alloc::vec![0.1, 1.0],
            alloc::vec![alloc::vec![0.5, f64::INFINITY], alloc::vec![0.9, 0.9]],
            Aggregation::Mean,
        )
        .unwrap();
        assert_eq!(r.gamma_star, 1.0);
        assert!(r.errors[0].is_infinite());
        let all_bad = CvReport::from_errors(
            alloc::vec![0.1],
            alloc::vec![alloc::vec![f64::INFINITY]],
            Aggregation::Mean,
        );
        assert_eq!(all_bad.unwrap_err(), Error::NoViableGamma);
    }

    #[test]
    fn median_aggregation() {
        let r = CvReport::from_errors(
            alloc::vec![1.0],
            alloc::vec![alloc::vec![1.0, 2.0, 30.0]],
            Aggregation::Median,
        )
        .unwrap();
        assert_eq!(r.errors[0], 2.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-4, 1e2, 25);
        assert_eq!(g.len(), 25);
        assert_eq!((g[0], g[24]), (1e-4, 1e2));
        approx::assert_relative_eq!(g[4], 1e-3, max_relative = 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn config_validation() {
        let mut c = CvConfig::default();
        c.validate().unwrap();
        c.gamma_grid = alloc::vec![1.0, 0.5];
        assert!(c.validate().is_err());
        c = CvConfig {
            train_fraction: 1.0,
            ..CvConfig::default()
        };
        assert!(c.validate().is_err());
        c = CvConfig {
            iterations: 0,
            ..CvConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
