//! Box-plot statistics of recovery errors.
//!
//! Quartiles use linear interpolation between order statistics, inclusive of
//! the endpoints (position `p (n − 1)` in the sorted sample). Whiskers reach
//! the most extreme observations within 1.5 IQR of the box; anything beyond
//! is an outlier.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitter::FitResult;
use crate::params::ParameterVector;

/// Quantile `p ∈ [0, 1]` of an ascending, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile_sorted(&v, 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub min: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    /// `None` for an empty sample.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside = || {
            v.iter()
                .copied()
                .filter(|x| *x >= fence_lo && *x <= fence_hi)
        };
        Some(BoxStats {
            count: v.len(),
            median: quantile_sorted(&v, 0.5),
            q1,
            q3,
            iqr,
            whisker_low: inside().fold(f64::INFINITY, f64::min),
            whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
            min: v[0],
            max: v[v.len() - 1],
            outliers: v
                .iter()
                .copied()
                .filter(|x| *x < fence_lo || *x > fence_hi)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterErrors {
    pub name: String,
    /// Absolute errors `|x̂ − x|`, in input order.
    pub errors: Vec<f64>,
    pub stats: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub parameters: Vec<ParameterErrors>,
}

impl ErrorSummary {
    pub fn median(&self, index: usize) -> Option<f64> {
        self.parameters.get(index)?.stats.as_ref().map(|s| s.median)
    }
}

/// Per-parameter absolute-error statistics from estimates and truths.
pub fn summarize_estimates(
    names: &[String],
    estimates: &[ParameterVector],
    truths: &[ParameterVector],
) -> Result<ErrorSummary> {
    if estimates.len() != truths.len() {
        return Err(Error::Domain(format!(
            "{} results but {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Ok(ErrorSummary::default());
    }
    let p = names.len();
    for v in estimates.iter().chain(truths) {
        if v.len() != p {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: p,
                got: v.len(),
            });
        }
    }
    let parameters = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let errors: Vec<f64> = estimates
                .iter()
                .zip(truths)
                .map(|(e, t)| libm::fabs(e[i] - t[i]))
                .collect();
            ParameterErrors {
                name: name.clone(),
                stats: BoxStats::from_values(&errors),
                errors,
            }
        })
        .collect();
    Ok(ErrorSummary { parameters })
}

pub fn error_summary(
    names: &[String],
    results: &[FitResult],
    truths: &[ParameterVector],
) -> Result<ErrorSummary> {
    let estimates: Vec<ParameterVector> = results.iter().map(|r| r.x_star.clone()).collect();
    summarize_estimates(names, &estimates, truths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_with_outlier() {
        let s = BoxStats::from_values(&[4.0, 100.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3, s.iqr), (2.0, 3.0, 4.0, 2.0));
        assert_eq!((s.whisker_low, s.whisker_high), (1.0, 4.0));
        assert_eq!(s.outliers, [100.0]);
    }

    #[test]
    fn single_value() {
        let s = BoxStats::from_values(&[7.5]).unwrap();
        assert_eq!((s.median, s.iqr, s.q1, s.q3), (7.5, 0.0, 7.5, 7.5));
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn zero_errors() {
        let names: Vec<String> = ["a", "b"].iter().map(|s| (*s).into()).collect();
        let v = alloc::vec![ParameterVector::new(alloc::vec![1.0, 2.0]); 3];
        let s = summarize_estimates(&names, &v, &v).unwrap();
        for p in &s.parameters {
            let st = p.stats.as_ref().unwrap();
            assert_eq!(
                (st.median, st.q1, st.q3, st.iqr, st.max),
                (0.0, 0.0, 0.0, 0.0, 0.0)
            );
        }
    }

    #[test]
    fn length_mismatch() {
        let names: Vec<String> = alloc::vec!["a".into()];
        let v = alloc::vec![ParameterVector::new(alloc::vec![1.0])];
        assert!(summarize_estimates(&names, &v, &[]).is_err());
        assert!(summarize_estimates(&names, &[], &[])
            .unwrap()
            .parameters
            .is_empty());
    }

    #[test]
    fn interpolated_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(median(&[]), None);
    }
}
