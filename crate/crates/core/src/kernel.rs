//! Interpolating Gaussian-kernel surrogate.
//!
//! With library parameters standardized to `Z` (`P × N`) and log-spectra `R`
//! (`M × N`), the surrogate is
//!
//! ```text
//! r̂(x) = W k(x),   k_n(x) = exp(−γ ‖z(x) − z⁽ⁿ⁾‖²)
//! ```
//!
//! where `W` solves the interpolation condition `W K = R` with
//! `K_ij = k(z⁽ⁱ⁾, z⁽ʲ⁾)`. Squared distances are evaluated through the
//! expansion `zᵀz − 2 Zᵀz + diag(ZᵀZ)` so a prediction costs two
//! matrix-vector products and `N` exponentials.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::library::SpectralLibrary;
use crate::oracle::WavenumberGrid;

/// Condition estimate above which [`train`] refuses the kernel matrix.
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

/// `exp(−γ ‖x − y‖²)`.
pub fn kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    libm::exp(-gamma * d2)
}

/// Squared distances from `x` to every column of `centers` via
/// `xᵀx − 2 Xᵀx + diag(XᵀX)`, with `sq_norms` holding `diag(XᵀX)`.
///
/// Cancellation can leave tiny negative values; those are clamped to zero.
pub fn squared_distances(x: &[f64], centers: &DMatrix<f64>, sq_norms: &[f64], out: &mut [f64]) {
    let p = centers.nrows();
    debug_assert_eq!(x.len(), p);
    debug_assert_eq!(sq_norms.len(), centers.ncols());
    debug_assert_eq!(out.len(), centers.ncols());
    let xx: f64 = x.iter().map(|v| v * v).sum();
    for ((o, col), &cc) in out
        .iter_mut()
        .zip(centers.as_slice().chunks_exact(p))
        .zip(sq_norms)
    {
        let dot: f64 = col.iter().zip(x).map(|(a, b)| a * b).sum();
        *o = f64::max(xx - 2.0 * dot + cc, 0.0);
    }
}

/// Column-wise `‖z⁽ⁿ⁾‖²`.
pub fn column_sq_norms(centers: &DMatrix<f64>) -> Vec<f64> {
    centers
        .column_iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    /// Subtract the library mean and divide by the library standard
    /// deviation, per parameter. γ is then in standardized units.
    #[default]
    ZScore,
    /// Use raw parameter units.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub standardization: Standardization,
    /// Added to the diagonal of `K`. Zero keeps exact interpolation.
    pub ridge: f64,
    /// Reject kernel matrices whose 1-norm condition estimate exceeds this.
    pub max_condition: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            standardization: Standardization::ZScore,
            ridge: 0.0,
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }
}

/// Per-parameter affine map `z = (x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each row of `params`.
    pub fn fit(params: &DMatrix<f64>, mode: Standardization) -> Result<Self> {
        let (p, n) = params.shape();
        if mode == Standardization::Identity {
            return Ok(Standardizer {
                mean: alloc::vec![0.0; p],
                scale: alloc::vec![1.0; p],
            });
        }
        let mut mean = Vec::with_capacity(p);
        let mut scale = Vec::with_capacity(p);
        for (i, row) in params.row_iter().enumerate() {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let sd = libm::sqrt(var);
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::DegenerateLibrary { index: i });
            }
            mean.push(mu);
            scale.push(sd);
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn apply_matrix(&self, params: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = params.clone();
        for mut col in z.column_iter_mut() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = (*v - self.mean[i]) / self.scale[i];
            }
        }
        z
    }
}

/// A trained surrogate. Immutable; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    weights: DMatrix<f64>,
    centers: DMatrix<f64>,
    center_sq_norms: Vec<f64>,
    gamma: f64,
    standardizer: Standardizer,
    grid: WavenumberGrid,
    lower: Vec<f64>,
    upper: Vec<f64>,
    condition: f64,
}

/// Result of [`SurrogateModel::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    /// `x` left the bounding box of the library parameters.
    pub extrapolated: bool,
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    Ok(())
}

/// Fits the surrogate to the whole library with default options.
pub fn train(lib: &SpectralLibrary, gamma: f64) -> Result<SurrogateModel> {
    train_with(lib, gamma, &TrainOptions::default())
}

pub fn train_with(
    lib: &SpectralLibrary,
    gamma: f64,
    opts: &TrainOptions,
) -> Result<SurrogateModel> {
    SurrogateModel::fit(lib.params(), lib.spectra(), lib.grid(), gamma, opts)
}

impl SurrogateModel {
    /// Solves `W K = R` for parameters `P × N` and spectra `M × N`.
    ///
    /// Columns of `params` must be distinct; [`SpectralLibrary`] guarantees it.
    pub fn fit(
        params: &DMatrix<f64>,
        spectra: &DMatrix<f64>,
        grid: &WavenumberGrid,
        gamma: f64,
        opts: &TrainOptions,
    ) -> Result<Self> {
        validate_gamma(gamma)?;
        if !(opts.ridge >= 0.0) {
            return Err(Error::Domain(format!(
                "ridge must be non-negative, got {}",
                opts.ridge
            )));
        }
        let n = params.ncols();
        if spectra.ncols() != n {
            return Err(Error::Dimension {
                what: "spectra columns",
                expected: n,
                got: spectra.ncols(),
            });
        }
        if spectra.nrows() != grid.len() {
            return Err(Error::Dimension {
                what: "spectra rows",
                expected: grid.len(),
                got: spectra.nrows(),
            });
        }
        let standardizer = Standardizer::fit(params, opts.standardization)?;
        let centers = standardizer.apply_matrix(params);
        let center_sq_norms = column_sq_norms(&centers);

        let mut k = DMatrix::<f64>::zeros(n, n);
        let mut d2 = alloc::vec![0.0; n];
        for j in 0..n {
            let zj: Vec<f64> = centers.column(j).iter().copied().collect();
            squared_distances(&zj, &centers, &center_sq_norms, &mut d2);
            for (i, &d) in d2.iter().enumerate() {
                k[(i, j)] = libm::exp(-gamma * d);
            }
            k[(j, j)] = 1.0 + opts.ridge;
        }
        // Expansion rounding leaves K asymmetric in the last bits.
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (k[(i, j)] + k[(j, i)]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        let norm1 = one_norm(&k);
        let chol = Cholesky::new(k).ok_or(Error::NotPositiveDefinite)?;
        let min_pivot = chol.l_dirty().diagonal().min();
        if !(min_pivot > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let condition = norm1 * inverse_one_norm_estimate(&chol, n);
        if !condition.is_finite() || condition > opts.max_condition {
            return Err(Error::IllConditioned {
                estimate: condition,
                limit: opts.max_condition,
            });
        }
        // K symmetric: W K = R  ⇔  K Wᵀ = Rᵀ.
        let weights = chol.solve(&spectra.transpose()).transpose();
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weight solve"));
        }
        let (lower, upper) = bounding_box(params);
        Ok(SurrogateModel {
            weights,
            centers,
            center_sq_norms,
            gamma,
            standardizer,
            grid: grid.clone(),
            lower,
            upper,
            condition,
        })
    }

    /// Reassembles a model from stored parts (used by the file loaders).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        weights: DMatrix<f64>,
        centers: DMatrix<f64>,
        gamma: f64,
        standardizer: Standardizer,
        grid: WavenumberGrid,
        lower: Vec<f64>,
        upper: Vec<f64>,
        condition: f64,
    ) -> Result<Self> {
        validate_gamma(gamma)?;
        let (p, n) = centers.shape();
        let check = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Dimension {
                    what,
                    expected,
                    got,
                })
            }
        };
        check("weight rows", grid.len(), weights.nrows())?;
        check("weight columns", n, weights.ncols())?;
        check("standardizer mean", p, standardizer.mean.len())?;
        check("standardizer scale", p, standardizer.scale.len())?;
        check("lower bounds", p, lower.len())?;
        check("upper bounds", p, upper.len())?;
        if standardizer.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Domain("standardizer scales must be positive".into()));
        }
        if weights.iter().chain(centers.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model data"));
        }
        let center_sq_norms = column_sq_norms(&centers);
        Ok(SurrogateModel {
            weights,
            centers,
            center_sq_norms,
            gamma,
            standardizer,
            grid,
            lower,
            upper,
            condition,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `M × N`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Standardized library parameters, `P × N`.
    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn grid(&self) -> &WavenumberGrid {
        &self.grid
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// 1-norm condition estimate of `K` recorded at training time.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn n_params(&self) -> usize {
        self.centers.nrows()
    }

    pub fn n_centers(&self) -> usize {
        self.centers.ncols()
    }

    pub fn n_wavenumbers(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_extrapolation(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(v, (lo, hi))| v < lo || v > hi)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        let mut z = alloc::vec![0.0; x.len()];
        self.standardizer.apply(x, &mut z);
        z
    }

    /// Kernel vector `k(x)` for a raw parameter vector.
    pub fn kernel_vector(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        self.kernel_vector_z(&z)
    }

    fn kernel_vector_z(&self, z: &[f64]) -> Vec<f64> {
        let mut k = alloc::vec![0.0; self.n_centers()];
        squared_distances(z, &self.centers, &self.center_sq_norms, &mut k);
        for v in &mut k {
            *v = libm::exp(-self.gamma * *v);
        }
        k
    }

    /// Writes `r̂(x)` into `out` (length `M`).
    pub fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let k = DVector::from_vec(self.kernel_vector(x));
        let mut view = nalgebra::DVectorViewMut::from_slice(out, self.n_wavenumbers());
        view.gemv(1.0, &self.weights, &k, 0.0);
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.n_params() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.n_params(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction input"));
        }
        let mut values = alloc::vec![0.0; self.n_wavenumbers()];
        self.predict_into(x, &mut values);
        Ok(Prediction {
            values,
            extrapolated: self.is_extrapolation(x),
        })
    }

    /// Predictions for every column of `params` (`P × K`), as `M × K`.
    pub fn predict_many(&self, params: &DMatrix<f64>) -> DMatrix<f64> {
        let cols = params.ncols();
        let mut kmat = DMatrix::<f64>::zeros(self.n_centers(), cols);
        for (j, x) in params.column_iter().enumerate() {
            let xs: Vec<f64> = x.iter().copied().collect();
            kmat.column_mut(j).copy_from_slice(&self.kernel_vector(&xs));
        }
        &self.weights * kmat
    }

    /// Writes `r̂(x)` into `values` and `∂r̂/∂x` (`M × P`, raw units) into
    /// `jac`, sharing the kernel evaluation.
    ///
    /// `∂r̂/∂x_p = Σ_n W_mn k_n (−2γ) (z_p − Z_pn) / scale_p`.
    pub fn predict_with_jacobian(&self, x: &[f64], values: &mut [f64], jac: &mut DMatrix<f64>) {
        let p = self.n_params();
        let n = self.n_centers();
        let z = self.standardize(x);
        let k = self.kernel_vector_z(&z);
        let mut a = DMatrix::<f64>::zeros(n, p);
        for (j, (kn, col)) in k
            .iter()
            .zip(self.centers.as_slice().chunks_exact(p))
            .enumerate()
        {
            let c = -2.0 * self.gamma * kn;
            for d in 0..p {
                a[(j, d)] = c * (z[d] - col[d]) / self.standardizer.scale[d];
            }
        }
        let kv = DVector::from_vec(k);
        let mut view = nalgebra::DVectorViewMut::from_slice(values, self.n_wavenumbers());
        view.gemv(1.0, &self.weights, &kv, 0.0);
        if jac.shape() != (self.n_wavenumbers(), p) {
            *jac = DMatrix::zeros(self.n_wavenumbers(), p);
        }
        jac.gemm(1.0, &self.weights, &a, 0.0);
    }

    /// `∂r̂/∂x` at `x`, `M × P`.
    pub fn predict_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut values = alloc::vec![0.0; self.n_wavenumbers()];
        let mut jac = DMatrix::zeros(self.n_wavenumbers(), self.n_params());
        self.predict_with_jacobian(x, &mut values, &mut jac);
        jac
    }
}

fn bounding_box(params: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    params
        .row_iter()
        .map(|row| {
            row.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        })
        .unzip()
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager–Higham estimate of `‖K⁻¹‖₁` for symmetric positive definite `K`,
/// using only solves with the Cholesky factor.
fn inverse_one_norm_estimate(chol: &Cholesky<f64, Dyn>, n: usize) -> f64 {
    let l1 = |v: &DVector<f64>| v.iter().map(|x| x.abs()).sum::<f64>();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = chol.solve(&x);
        estimate = l1(&y);
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = chol.solve(&xi);
        let j = z.iamax();
        if z[j].abs() <= z.dot(&x) || j == last_j {
            break;
        }
        last_j = j;
        x.fill(0.0);
        x[j] = 1.0;
    }
    // Alternating-sign probe catches cases the power-like iteration misses.
    if n > 1 {
        let b = DVector::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n - 1) as f64)
        });
        let alt = 2.0 * l1(&chol.solve(&b)) / (3.0 * n as f64);
        estimate = estimate.max(alt);
    }
    estimate
}
