//! Parameter vectors and the box/simplex domain they live in.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Indices and default ranges of the five-parameter combustion problem:
/// temperature followed by the N2, H2, O2 and H2O mole fractions.
pub mod cars {
    pub const TEMPERATURE: usize = 0;
    pub const N2: usize = 1;
    pub const H2: usize = 2;
    pub const O2: usize = 3;
    pub const H2O: usize = 4;
    pub const P: usize = 5;

    pub const NAMES: [&str; P] = ["T", "x_N2", "x_H2", "x_O2", "x_H2O"];
    pub const BOUNDS: [(f64, f64); P] = [
        (500.0, 2500.0),
        (0.25, 0.85),
        (0.0, 0.60),
        (0.0, 0.30),
        (0.0, 0.40),
    ];
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }
}

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParameterVector(values)
    }

    /// Five-parameter combustion vector `(T, x_N2, x_H2, x_O2, x_H2O)`.
    pub fn cars(t: f64, n2: f64, h2: f64, o2: f64, h2o: f64) -> Self {
        ParameterVector(alloc::vec![t, n2, h2, o2, h2o])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

/// Named per-parameter boxes, optionally with a subset of coordinates that
/// must sum to one (mole fractions).
///
/// The last entry of `mole_fractions` is the closing species: random sampling
/// draws the others and sets it to one minus their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub names: Vec<String>,
    pub bounds: Vec<Interval>,
    #[serde(default)]
    pub mole_fractions: Vec<usize>,
}

/// Tolerance on `Σ mole fractions = 1` for a vector to count as physical.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

impl ParameterSpace {
    /// Plain box without a simplex constraint.
    pub fn boxed(names: Vec<String>, bounds: Vec<Interval>) -> Result<Self> {
        let space = ParameterSpace {
            names,
            bounds,
            mole_fractions: Vec::new(),
        };
        space.validate()?;
        Ok(space)
    }

    /// Temperature plus four mole fractions, with the default boxes.
    pub fn cars() -> Self {
        ParameterSpace {
            names: cars::NAMES.iter().map(|s| s.to_string()).collect(),
            bounds: cars::BOUNDS
                .iter()
                .map(|&(lo, hi)| Interval::new(lo, hi))
                .collect(),
            mole_fractions: alloc::vec![cars::N2, cars::H2, cars::O2, cars::H2O],
        }
    }

    /// Unit hypercube `[0, 1]^p` with generic names, no simplex.
    pub fn unit(p: usize) -> Self {
        ParameterSpace {
            names: (0..p).map(|i| format!("x{i}")).collect(),
            bounds: alloc::vec![Interval::new(0.0, 1.0); p],
            mole_fractions: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn has_simplex(&self) -> bool {
        !self.mole_fractions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::Domain("parameter space has no dimensions".into()));
        }
        if self.names.len() != self.bounds.len() {
            return Err(Error::Dimension {
                what: "parameter names",
                expected: self.bounds.len(),
                got: self.names.len(),
            });
        }
        for (name, b) in self.names.iter().zip(&self.bounds) {
            if !(b.lo.is_finite() && b.hi.is_finite()) || b.lo > b.hi {
                return Err(Error::Domain(format!(
                    "invalid box for `{name}`: [{}, {}]",
                    b.lo, b.hi
                )));
            }
        }
        let mut seen = alloc::vec![false; self.dim()];
        for &i in &self.mole_fractions {
            if i >= self.dim() || seen[i] {
                return Err(Error::Domain(format!("invalid mole-fraction index {i}")));
            }
            seen[i] = true;
        }
        if self.has_simplex() {
            let lo: f64 = self.mole_fractions.iter().map(|&i| self.bounds[i].lo).sum();
            let hi: f64 = self.mole_fractions.iter().map(|&i| self.bounds[i].hi).sum();
            if lo > 1.0 + SIMPLEX_TOLERANCE || hi < 1.0 - SIMPLEX_TOLERANCE {
                return Err(Error::Domain(format!(
                    "mole-fraction boxes cannot sum to one (sum of lows {lo}, sum of highs {hi})"
                )));
            }
        }
        Ok(())
    }

    /// Checks dimension and box membership.
    pub fn check_box(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (i, (&v, b)) in x.iter().zip(&self.bounds).enumerate() {
            if !b.contains(v) {
                return Err(Error::OutOfDomain {
                    name: self.names[i].clone(),
                    value: v,
                    lo: b.lo,
                    hi: b.hi,
                });
            }
        }
        Ok(())
    }

    /// `Σ mole fractions − 1` (zero for spaces without a simplex).
    pub fn simplex_residual(&self, x: &[f64]) -> f64 {
        if !self.has_simplex() {
            return 0.0;
        }
        self.mole_fractions.iter().map(|&i| x[i]).sum::<f64>() - 1.0
    }

    /// In the box, and on the simplex when the space has one.
    pub fn is_physical(&self, x: &[f64]) -> bool {
        self.check_box(x).is_ok() && libm::fabs(self.simplex_residual(x)) <= SIMPLEX_TOLERANCE
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(Interval::center).collect()
    }

    /// Euclidean projection onto the box intersected with the simplex
    /// hyperplane. Coordinates outside `mole_fractions` are only clamped.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = x
            .iter()
            .zip(&self.bounds)
            .map(|(&v, b)| b.clamp(v))
            .collect();
        if !self.has_simplex() {
            return out;
        }
        // x_i(τ) = clamp(x_i − τ) is non-increasing in τ; bisect for Σ = 1.
        let sum_at = |tau: f64| -> f64 {
            self.mole_fractions
                .iter()
                .map(|&i| self.bounds[i].clamp(x[i] - tau))
                .sum()
        };
        let mut lo = -1.0;
        let mut hi = 1.0;
        for &i in &self.mole_fractions {
            let b = self.bounds[i];
            lo = f64::min(lo, x[i] - b.hi - 1.0);
            hi = f64::max(hi, x[i] - b.lo + 1.0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sum_at(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * (1.0 + libm::fabs(mid)) {
                break;
            }
        }
        let tau = 0.5 * (lo + hi);
        for &i in &self.mole_fractions {
            out[i] = self.bounds[i].clamp(x[i] - tau);
        }
        self.repair_sum(&mut out);
        out
    }

    /// Moves the remaining `Σ − 1` onto mole fractions with slack so the
    /// equality holds to rounding. Box bounds are never violated.
    pub fn repair_sum(&self, x: &mut [f64]) {
        if !self.has_simplex() {
            return;
        }
        for _ in 0..4 {
            let excess = self.simplex_residual(x);
            if excess == 0.0 {
                return;
            }
            for &i in &self.mole_fractions {
                let b = self.bounds[i];
                let target = b.clamp(x[i] - self.simplex_residual(x));
                x[i] = target;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cars_space_is_valid() {
        let s = ParameterSpace::cars();
        s.validate().unwrap();
        assert_eq!(s.dim(), 5);
        assert!(s.has_simplex());
    }

    #[test]
    fn infeasible_simplex_boxes_are_rejected() {
        let mut s = ParameterSpace::cars();
        s.bounds[cars::N2] = Interval::new(0.9, 1.0);
        s.bounds[cars::H2] = Interval::new(0.2, 0.6);
        assert!(matches!(s.validate(), Err(Error::Domain(_))));
    }

    #[test]
    fn projection_lands_on_simplex_inside_box() {
        let s = ParameterSpace::cars();
        let p = s.project(&s.center());
        assert!(s.is_physical(&p), "{p:?}");
        // Center (0.55, 0.3, 0.15, 0.2) sums to 1.2; equal shift of 0.05.
        approx::assert_abs_diff_eq!(p[cars::N2], 0.50, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(p[cars::H2], 0.25, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(p[cars::O2], 0.10, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(p[cars::H2O], 0.15, epsilon = 1e-12);
        assert_eq!(p[cars::TEMPERATURE], 1500.0);
    }

    #[test]
    fn projection_respects_clamped_coordinates() {
        let s = ParameterSpace::cars();
        let p = s.project(&[3000.0, 0.1, 0.9, 0.0, 0.4]);
        assert!(s.is_physical(&p), "{p:?}");
        assert_eq!(p[0], 2500.0);
    }

    #[test]
    fn check_box_names_offender() {
        let s = ParameterSpace::cars();
        let err = s.check_box(&[100.0, 0.5, 0.2, 0.1, 0.2]).unwrap_err();
        match err {
            Error::OutOfDomain { name, .. } => assert_eq!(name, "T"),
            e => panic!("unexpected {e:?}"),
        }
    }
}
