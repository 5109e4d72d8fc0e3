//! Parameter sampling and spectral libraries.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{generate_spectrum, OracleConfig, WavenumberGrid};
use crate::params::{ParameterSpace, ParameterVector};

/// Rejections tolerated by [`sample_physical_parameters`] before giving up.
pub const MAX_REJECTIONS: u64 = 1_000_000;

const CLOSURE_SLACK: f64 = 1e-13;

/// How a library's parameters were chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    Random { seed: u64 },
    Grid { levels: Vec<usize> },
    Explicit,
}

/// Uniform draws from the physical region: inside every box and, when the
/// space has mole fractions, on the simplex `Σ x = 1`.
///
/// All coordinates but the closing mole fraction are drawn uniformly in
/// their boxes; the closing one is set to one minus the others and the draw
/// is kept only if that value lies in its box.
pub fn sample_physical_parameters(
    n: usize,
    space: &ParameterSpace,
    seed: u64,
) -> Result<Vec<ParameterVector>> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    space.validate()?;
    let closing = space.mole_fractions.last().copied();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut rejections = 0u64;
    while out.len() < n {
        let mut x: Vec<f64> = space
            .bounds
            .iter()
            .map(|b| {
                if b.lo == b.hi {
                    b.lo
                } else {
                    b.lo + (b.hi - b.lo) * rng.random::<f64>()
                }
            })
            .collect();
        if let Some(c) = closing {
            let others: f64 = space
                .mole_fractions
                .iter()
                .filter(|&&i| i != c)
                .map(|&i| x[i])
                .sum();
            let closing_value = 1.0 - others;
            let b = space.bounds[c];
            // Rounding in `1 − Σ` must not reject draws on a box edge.
            if closing_value < b.lo - CLOSURE_SLACK || closing_value > b.hi + CLOSURE_SLACK {
                rejections += 1;
                if rejections >= MAX_REJECTIONS {
                    return Err(Error::SamplingExhausted {
                        attempts: rejections,
                    });
                }
                continue;
            }
            x[c] = b.clamp(closing_value);
        }
        out.push(ParameterVector(x));
    }
    Ok(out)
}

/// Evenly spaced values (endpoints included) on every axis, combined as a
/// full tensor product. The last axis varies fastest.
///
/// No simplex constraint is applied, so gridded libraries contain
/// nonphysical mixtures.
pub fn grid_parameters(levels: &[usize], space: &ParameterSpace) -> Result<Vec<ParameterVector>> {
    if levels.len() != space.dim() {
        return Err(Error::Dimension {
            what: "grid levels",
            expected: space.dim(),
            got: levels.len(),
        });
    }
    if let Some(l) = levels.iter().find(|&&l| l < 2) {
        return Err(Error::Domain(format!(
            "every axis needs at least 2 levels, got {l}"
        )));
    }
    space.validate()?;
    let nodes: Vec<Vec<f64>> = levels
        .iter()
        .zip(&space.bounds)
        .map(|(&l, b)| axis_nodes(b.lo, b.hi, l))
        .collect();
    let total: usize = levels.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = alloc::vec![0usize; levels.len()];
    for _ in 0..total {
        out.push(ParameterVector(
            idx.iter().zip(&nodes).map(|(&i, axis)| axis[i]).collect(),
        ));
        for d in (0..levels.len()).rev() {
            idx[d] += 1;
            if idx[d] < levels[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(out)
}

/// `levels` evenly spaced values from `lo` to `hi`, both exact.
pub fn axis_nodes(lo: f64, hi: f64, levels: usize) -> Vec<f64> {
    let step = (hi - lo) / (levels - 1) as f64;
    (0..levels)
        .map(|i| {
            if i + 1 == levels {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect()
}

/// Paired parameter (`P × N`) and log-spectrum (`M × N`) matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    params: DMatrix<f64>,
    spectra: DMatrix<f64>,
    grid: WavenumberGrid,
    space: ParameterSpace,
    sampling: Sampling,
}

impl SpectralLibrary {
    /// Assembles a library from already computed matrices, enforcing the
    /// shape and distinctness invariants.
    pub fn from_parts(
        params: DMatrix<f64>,
        spectra: DMatrix<f64>,
        grid: WavenumberGrid,
        space: ParameterSpace,
        sampling: Sampling,
    ) -> Result<Self> {
        space.validate()?;
        if params.nrows() != space.dim() {
            return Err(Error::Dimension {
                what: "library parameter rows",
                expected: space.dim(),
                got: params.nrows(),
            });
        }
        if spectra.nrows() != grid.len() {
            return Err(Error::Dimension {
                what: "library spectrum rows",
                expected: grid.len(),
                got: spectra.nrows(),
            });
        }
        if spectra.ncols() != params.ncols() {
            return Err(Error::Dimension {
                what: "library spectrum columns",
                expected: params.ncols(),
                got: spectra.ncols(),
            });
        }
        if params.ncols() < 2 {
            return Err(Error::Domain(format!(
                "a library needs at least 2 entries, got {}",
                params.ncols()
            )));
        }
        if params.iter().chain(spectra.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("library data"));
        }
        check_distinct(&params)?;
        Ok(SpectralLibrary {
            params,
            spectra,
            grid,
            space,
            sampling,
        })
    }

    pub fn len(&self) -> usize {
        self.params.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.params.ncols() == 0
    }

    pub fn n_params(&self) -> usize {
        self.params.nrows()
    }

    pub fn n_wavenumbers(&self) -> usize {
        self.spectra.nrows()
    }

    /// `P × N`, column `n` is the `n`-th parameter vector.
    pub fn params(&self) -> &DMatrix<f64> {
        &self.params
    }

    /// `M × N`, column `n` is the `n`-th log-spectrum.
    pub fn spectra(&self) -> &DMatrix<f64> {
        &self.spectra
    }

    pub fn grid(&self) -> &WavenumberGrid {
        &self.grid
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn sampling(&self) -> &Sampling {
        &self.sampling
    }

    pub fn parameter(&self, n: usize) -> ParameterVector {
        ParameterVector(self.params.column(n).iter().copied().collect())
    }

    pub fn spectrum(&self, n: usize) -> &[f64] {
        let m = self.spectra.nrows();
        &self.spectra.as_slice()[n * m..(n + 1) * m]
    }

    /// Sub-library of the given columns, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let params = self.params.select_columns(indices);
        let spectra = self.spectra.select_columns(indices);
        SpectralLibrary::from_parts(
            params,
            spectra,
            self.grid.clone(),
            self.space.clone(),
            Sampling::Explicit,
        )
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Errors on the first pair of identical columns, reporting both indices.
fn check_distinct(params: &DMatrix<f64>) -> Result<()> {
    let p = params.nrows();
    let data = params.as_slice();
    let col = |n: usize| &data[n * p..(n + 1) * p];
    let mut order: Vec<usize> = (0..params.ncols()).collect();
    order.sort_by(|&a, &b| lexicographic(col(a), col(b)).then(a.cmp(&b)));
    for w in order.windows(2) {
        // total_cmp separates 0.0 from -0.0; treat them as equal too.
        if col(w[0]).iter().zip(col(w[1])).all(|(x, y)| x == y) {
            return Err(Error::DuplicateParameters {
                first: w[0].min(w[1]),
                second: w[0].max(w[1]),
            });
        }
    }
    Ok(())
}

/// Runs the oracle at every parameter vector.
pub fn build_library(
    params: &[ParameterVector],
    space: &ParameterSpace,
    sampling: Sampling,
    grid: &WavenumberGrid,
    cfg: &OracleConfig,
) -> Result<SpectralLibrary> {
    cfg.validate()?;
    let p = space.dim();
    for x in params {
        if x.len() != p {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: p,
                got: x.len(),
            });
        }
    }
    let pm = DMatrix::from_iterator(
        p,
        params.len(),
        params.iter().flat_map(|x| x.iter().copied()),
    );
    check_distinct(&pm)?;
    let mut spectra = DMatrix::zeros(grid.len(), params.len());
    for (n, x) in params.iter().enumerate() {
        let s = generate_spectrum(x, grid, cfg)?;
        spectra.column_mut(n).copy_from_slice(&s.values);
    }
    SpectralLibrary::from_parts(pm, spectra, grid.clone(), space.clone(), sampling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{cars, Interval};

    #[test]
    fn collapsed_boxes_give_the_point() {
        let mut space = ParameterSpace::cars();
        for (i, v) in [1000.0, 0.5, 0.2, 0.1, 0.2].into_iter().enumerate() {
            space.bounds[i] = Interval::new(v, v);
        }
        let pts = sample_physical_parameters(1, &space, 0).unwrap();
        let x = &pts[0];
        assert_eq!(&x[..4], &[1000.0, 0.5, 0.2, 0.1]);
        approx::assert_abs_diff_eq!(x[4], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn default_samples_are_physical() {
        let space = ParameterSpace::cars();
        let pts = sample_physical_parameters(250, &space, 42).unwrap();
        assert_eq!(pts.len(), 250);
        for x in &pts {
            space.check_box(x).unwrap();
            assert!(space.simplex_residual(x).abs() <= 1e-12);
        }
    }

    #[test]
    fn infeasible_boxes_exhaust() {
        let mut space = ParameterSpace::cars();
        // Only the measure-zero point (0.85, 0, 0, 0.15) can close the sum.
        space.bounds[cars::N2] = Interval::new(0.25, 0.85);
        space.bounds[cars::H2] = Interval::new(0.0, 0.0);
        space.bounds[cars::O2] = Interval::new(0.0, 0.0);
        space.bounds[cars::H2O] = Interval::new(0.15, 0.15);
        let err = sample_physical_parameters(1, &space, 1).unwrap_err();
        assert_eq!(
            err,
            Error::SamplingExhausted {
                attempts: MAX_REJECTIONS
            }
        );
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(sample_physical_parameters(0, &ParameterSpace::cars(), 1).is_err());
    }

    #[test]
    fn grid_sizes() {
        let space = ParameterSpace::cars();
        let g = grid_parameters(&[2; 5], &space).unwrap();
        assert_eq!(g.len(), 32);
        for x in &g {
            for (v, b) in x.iter().zip(&space.bounds) {
                assert!(*v == b.lo || *v == b.hi);
            }
        }
        assert_eq!(grid_parameters(&[4; 5], &space).unwrap().len(), 1024);
    }

    #[test]
    fn one_dimensional_grid() {
        let g = grid_parameters(&[3], &ParameterSpace::unit(1)).unwrap();
        let v: Vec<f64> = g.iter().map(|x| x[0]).collect();
        assert_eq!(v, [0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_rejects_single_level() {
        assert!(grid_parameters(&[2, 1], &ParameterSpace::unit(2)).is_err());
        assert!(grid_parameters(&[2], &ParameterSpace::unit(2)).is_err());
    }

    #[test]
    fn build_matches_oracle() {
        let space = ParameterSpace::cars();
        let grid = WavenumberGrid::uniform(64).unwrap();
        let cfg = OracleConfig::default();
        let pts = sample_physical_parameters(2, &space, 5).unwrap();
        let lib = build_library(&pts, &space, Sampling::Random { seed: 5 }, &grid, &cfg).unwrap();
        assert_eq!(lib.len(), 2);
        for (n, x) in pts.iter().enumerate() {
            assert_eq!(
                lib.spectrum(n),
                &generate_spectrum(x, &grid, &cfg).unwrap().values[..]
            );
            assert_eq!(&lib.parameter(n), x);
        }
    }

    #[test]
    fn duplicates_are_named() {
        let space = ParameterSpace::cars();
        let grid = WavenumberGrid::uniform(16).unwrap();
        let mut pts = sample_physical_parameters(4, &space, 9).unwrap();
        pts[3] = pts[1].clone();
        let err = build_library(
            &pts,
            &space,
            Sampling::Explicit,
            &grid,
            &OracleConfig::default(),
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::DuplicateParameters {
                first: 1,
                second: 3
            }
        );
    }

    #[test]
    fn single_entry_library_rejected() {
        let space = ParameterSpace::cars();
        let grid = WavenumberGrid::uniform(16).unwrap();
        let pts = sample_physical_parameters(1, &space, 9).unwrap();
        assert!(build_library(
            &pts,
            &space,
            Sampling::Explicit,
            &grid,
            &OracleConfig::default()
        )
        .is_err());
    }
}
