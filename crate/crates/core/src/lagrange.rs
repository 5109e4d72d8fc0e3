//! Tensor-product Lagrange interpolation over a full regular grid.
//!
//! Per-axis basis values use the barycentric form
//! `L_j(t) = (w_j / (t − t_j)) / Σ_k w_k / (t − t_k)` with
//! `w_j = 1 / Π_{k≠j} (t_j − t_k)`, and the interpolant is
//! `Σ_nodes spectrum(node) · Π_axes L_{axis, node}(x_axis)`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fitter::Surrogate;
use crate::kernel::Prediction;
use crate::library::{axis_nodes, Sampling, SpectralLibrary};
use crate::oracle::WavenumberGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct GridInterpolant {
    nodes: Vec<Vec<f64>>,
    bary: Vec<Vec<f64>>,
    /// `M × Π levels`, node multi-indices in row-major order.
    values: DMatrix<f64>,
    grid: Option<WavenumberGrid>,
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &t)| nodes[j] - t)
                .product();
            1.0 / prod
        })
        .collect()
}

/// Node values for every grid axis; tolerance used to match library entries.
fn node_tolerance(axis: &[f64]) -> f64 {
    let span = axis[axis.len() - 1] - axis[0];
    1e-9 * f64::max(1.0, span.abs())
}

/// Builds the interpolant from a gridded library, checking that every grid
/// node appears exactly once.
pub fn build_lagrange(lib: &SpectralLibrary) -> Result<GridInterpolant> {
    let Sampling::Grid { levels } = lib.sampling() else {
        return Err(Error::Domain(
            "Lagrange interpolation needs a library with grid sampling".into(),
        ));
    };
    let space = lib.space();
    if levels.len() != space.dim() {
        return Err(Error::Dimension {
            what: "grid levels",
            expected: space.dim(),
            got: levels.len(),
        });
    }
    if let Some(b) = levels
        .iter()
        .zip(&space.bounds)
        .find(|(l, b)| **l < 2 || !(b.hi > b.lo))
    {
        return Err(Error::Domain(format!("degenerate grid axis {b:?}")));
    }
    let nodes: Vec<Vec<f64>> = levels
        .iter()
        .zip(&space.bounds)
        .map(|(&l, b)| axis_nodes(b.lo, b.hi, l))
        .collect();
    let total: usize = levels.iter().product();
    let mut slot: Vec<Option<usize>> = alloc::vec![None; total];
    for n in 0..lib.len() {
        let x = lib.parameter(n);
        let mut flat = 0;
        for (d, axis) in nodes.iter().enumerate() {
            let tol = node_tolerance(axis);
            let Some(i) = axis.iter().position(|t| (t - x[d]).abs() <= tol) else {
                return Err(Error::IncompleteGrid(format!(
                    "library entry {n} has {} = {} which is not a grid node",
                    space.names[d], x[d]
                )));
            };
            flat = flat * levels[d] + i;
        }
        if let Some(prev) = slot[flat] {
            return Err(Error::IncompleteGrid(format!(
                "grid node {:?} appears twice (entries {prev} and {n})",
                multi_index(flat, levels)
            )));
        }
        slot[flat] = Some(n);
    }
    if let Some(missing) = slot.iter().position(Option::is_none) {
        let idx = multi_index(missing, levels);
        let coords: Vec<f64> = idx.iter().zip(&nodes).map(|(&i, a)| a[i]).collect();
        return Err(Error::IncompleteGrid(format!(
            "grid node {idx:?} at {coords:?} is missing"
        )));
    }
    let m = lib.n_wavenumbers();
    let mut values = DMatrix::zeros(m, total);
    for (flat, n) in slot.iter().enumerate() {
        values
            .column_mut(flat)
            .copy_from_slice(lib.spectrum(n.expect("checked above")));
    }
    let mut interp = GridInterpolant::from_nodes(nodes, values)?;
    interp.grid = Some(lib.grid().clone());
    Ok(interp)
}

fn multi_index(mut flat: usize, levels: &[usize]) -> Vec<usize> {
    let mut idx = alloc::vec![0; levels.len()];
    for d in (0..levels.len()).rev() {
        idx[d] = flat % levels[d];
        flat /= levels[d];
    }
    idx
}

impl GridInterpolant {
    /// Interpolant over explicit per-axis nodes; `values` columns follow the
    /// row-major node order (last axis fastest).
    pub fn from_nodes(nodes: Vec<Vec<f64>>, values: DMatrix<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Domain("grid needs at least one axis".into()));
        }
        for axis in &nodes {
            if axis.len() < 2 || axis.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Domain(
                    "grid axes need at least 2 strictly increasing nodes".into(),
                ));
            }
        }
        let total: usize = nodes.iter().map(Vec::len).product();
        if values.ncols() != total {
            return Err(Error::Dimension {
                what: "grid values",
                expected: total,
                got: values.ncols(),
            });
        }
        let bary = nodes.iter().map(|a| barycentric_weights(a)).collect();
        Ok(GridInterpolant {
            nodes,
            bary,
            values,
            grid: None,
        })
    }

    pub fn levels(&self) -> Vec<usize> {
        self.nodes.iter().map(Vec::len).collect()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn grid(&self) -> Option<&WavenumberGrid> {
        self.grid.as_ref()
    }

    fn basis(&self, axis: usize, t: f64, out: &mut [f64]) {
        let nodes = &self.nodes[axis];
        let w = &self.bary[axis];
        if let Some(j) = nodes.iter().position(|&tj| tj == t) {
            out.fill(0.0);
            out[j] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for ((o, &tj), &wj) in out.iter_mut().zip(nodes).zip(w) {
            *o = wj / (t - tj);
            denom += *o;
        }
        for o in out.iter_mut() {
            *o /= denom;
        }
    }

    /// Tensor-product weight of every node at `x`.
    fn node_weights(&self, x: &[f64]) -> DVector<f64> {
        let mut weights = DVector::from_element(1, 1.0);
        for (axis, nodes) in self.nodes.iter().enumerate() {
            let mut b = alloc::vec![0.0; nodes.len()];
            self.basis(axis, x[axis], &mut b);
            let mut next = DVector::zeros(weights.len() * b.len());
            for (i, &wi) in weights.iter().enumerate() {
                for (j, &bj) in b.iter().enumerate() {
                    next[i * b.len() + j] = wi * bj;
                }
            }
            weights = next;
        }
        weights
    }

    pub fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let w = self.node_weights(x);
        let mut view = nalgebra::DVectorViewMut::from_slice(out, self.values.nrows());
        view.gemv(1.0, &self.values, &w, 0.0);
    }

    pub fn is_extrapolation(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.nodes)
            .any(|(v, a)| *v < a[0] || *v > a[a.len() - 1])
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.nodes.len() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.nodes.len(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction input"));
        }
        let mut values = alloc::vec![0.0; self.values.nrows()];
        self.predict_into(x, &mut values);
        Ok(Prediction {
            values,
            extrapolated: self.is_extrapolation(x),
        })
    }
}

impl Surrogate for GridInterpolant {
    fn n_params(&self) -> usize {
        self.nodes.len()
    }

    fn n_wavenumbers(&self) -> usize {
        self.values.nrows()
    }

    fn evaluate(&self, x: &[f64], out: &mut [f64]) {
        self.predict_into(x, out);
    }

    /// Central differences with a step proportional to each axis' span.
    fn evaluate_with_jacobian(&self, x: &[f64], values: &mut [f64], jac: &mut DMatrix<f64>) {
        let m = self.values.nrows();
        let p = self.nodes.len();
        self.predict_into(x, values);
        if jac.shape() != (m, p) {
            *jac = DMatrix::zeros(m, p);
        }
        let mut xp = x.to_vec();
        let mut plus = alloc::vec![0.0; m];
        let mut minus = alloc::vec![0.0; m];
        for (d, axis) in self.nodes.iter().enumerate() {
            let h = 6e-6 * (axis[axis.len() - 1] - axis[0]);
            xp[d] = x[d] + h;
            self.predict_into(&xp, &mut plus);
            xp[d] = x[d] - h;
            self.predict_into(&xp, &mut minus);
            xp[d] = x[d];
            for (i, (a, b)) in plus.iter().zip(&minus).enumerate() {
                jac[(i, d)] = (a - b) / (2.0 * h);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_1d() {
        let interp = GridInterpolant::from_nodes(
            alloc::vec![alloc::vec![0.0, 1.0]],
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        let mut out = [0.0];
        interp.predict_into(&[0.5], &mut out);
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn quadratic_1d_three_nodes() {
        let f = |t: f64| 3.0 * t * t - t + 2.0;
        let nodes = alloc::vec![0.0, 0.5, 1.0];
        let vals: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
        let interp =
            GridInterpolant::from_nodes(alloc::vec![nodes], DMatrix::from_row_slice(1, 3, &vals))
                .unwrap();
        assert_eq!(interp.levels(), [3]);
        for t in [-0.3, 0.1, 0.77, 1.4] {
            let mut out = [0.0];
            interp.predict_into(&[t], &mut out);
            assert!((out[0] - f(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(
            GridInterpolant::from_nodes(alloc::vec![alloc::vec![0.0]], DMatrix::zeros(1, 1))
                .is_err()
        );
        assert!(GridInterpolant::from_nodes(
            alloc::vec![alloc::vec![1.0, 0.0]],
            DMatrix::zeros(1, 2)
        )
        .is_err());
        assert!(GridInterpolant::from_nodes(
            alloc::vec![alloc::vec![0.0, 1.0]],
            DMatrix::zeros(1, 3)
        )
        .is_err());
    }

    #[test]
    fn extrapolation_flagged() {
        let interp = GridInterpolant::from_nodes(
            alloc::vec![alloc::vec![0.0, 1.0]],
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        )
        .unwrap();
        assert!(interp.predict(&[1.5]).unwrap().extrapolated);
        assert!(!interp.predict(&[0.5]).unwrap().extrapolated);
    }
}
