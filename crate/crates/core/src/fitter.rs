//! Parameter recovery: `x* = argmin_{x ∈ 𝒳} ‖s − r̂(x)‖²` over the box,
//! with the mole fractions constrained to sum to one.
//!
//! Each start runs a projected Levenberg–Marquardt iteration. Every step
//! solves a bound- and equality-constrained quadratic model of the residual
//! (the least-squares subproblem of SQP), so iterates stay exactly feasible.
//! Variables are rescaled to `[0, 1]` by their box widths.

use alloc::vec::Vec;
use core::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::SurrogateModel;
use crate::library::sample_physical_parameters;
use crate::params::{ParameterSpace, ParameterVector};
use crate::qp;

/// Anything that maps parameters to a spectrum and can differentiate it.
pub trait Surrogate {
    fn n_params(&self) -> usize;
    fn n_wavenumbers(&self) -> usize;
    fn evaluate(&self, x: &[f64], out: &mut [f64]);
    /// Fills `values` with `r̂(x)` and `jac` (`M × P`) with `∂r̂/∂x`.
    fn evaluate_with_jacobian(&self, x: &[f64], values: &mut [f64], jac: &mut DMatrix<f64>);
}

impl Surrogate for SurrogateModel {
    fn n_params(&self) -> usize {
        SurrogateModel::n_params(self)
    }

    fn n_wavenumbers(&self) -> usize {
        SurrogateModel::n_wavenumbers(self)
    }

    fn evaluate(&self, x: &[f64], out: &mut [f64]) {
        self.predict_into(x, out);
    }

    fn evaluate_with_jacobian(&self, x: &[f64], values: &mut [f64], jac: &mut DMatrix<f64>) {
        self.predict_with_jacobian(x, values, jac);
    }
}

impl<S: Surrogate + ?Sized> Surrogate for &S {
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn n_wavenumbers(&self) -> usize {
        (**self).n_wavenumbers()
    }
    fn evaluate(&self, x: &[f64], out: &mut [f64]) {
        (**self).evaluate(x, out)
    }
    fn evaluate_with_jacobian(&self, x: &[f64], values: &mut [f64], jac: &mut DMatrix<f64>) {
        (**self).evaluate_with_jacobian(x, values, jac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Projected-gradient (KKT) tolerance, relative to `1 + ‖s − r̂‖²`.
    pub kkt_tolerance: f64,
    /// Relative objective change below which a start is considered stalled.
    pub objective_tolerance: f64,
    /// Scaled step length below which a start is considered stalled.
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 5,
            seed: 0,
            max_iterations: 200,
            kkt_tolerance: 1e-8,
            objective_tolerance: 1e-15,
            step_tolerance: 1e-12,
        }
    }
}

/// Everything one fit needs.
#[derive(Debug, Clone)]
pub struct FitProblem<'a, S: ?Sized> {
    pub target: &'a [f64],
    pub model: &'a S,
    pub space: &'a ParameterSpace,
    pub options: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: ParameterVector,
    pub x: ParameterVector,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub x_star: ParameterVector,
    /// `‖s − r̂(x*)‖²`.
    pub residual: f64,
    /// Iterations used by the winning start.
    pub iterations: usize,
    pub converged: bool,
    /// Index of the winning start.
    pub best_start: usize,
    /// Filled in by timed drivers; zero otherwise.
    pub wall_time: Duration,
    pub starts: Vec<StartOutcome>,
}

/// First point is the box center projected onto the feasible set; the rest
/// are random physical draws.
pub fn initial_points(
    space: &ParameterSpace,
    starts: usize,
    seed: u64,
) -> Result<Vec<ParameterVector>> {
    if starts == 0 {
        return Err(Error::Domain("at least one start is required".into()));
    }
    space.validate()?;
    let mut out = Vec::with_capacity(starts);
    out.push(ParameterVector(space.project(&space.center())));
    if starts > 1 {
        out.extend(sample_physical_parameters(starts - 1, space, seed)?);
    }
    Ok(out)
}

impl<'a, S: Surrogate + ?Sized> FitProblem<'a, S> {
    pub fn solve(&self) -> Result<FitResult> {
        fit_spectrum(self.model, self.target, self.space, &self.options)
    }
}

/// Runs every start and keeps the feasible local minimum with the smallest
/// residual (earliest start on ties).
pub fn fit_spectrum<S: Surrogate + ?Sized>(
    model: &S,
    target: &[f64],
    space: &ParameterSpace,
    opts: &FitOptions,
) -> Result<FitResult> {
    if target.len() != model.n_wavenumbers() {
        return Err(Error::Dimension {
            what: "target spectrum",
            expected: model.n_wavenumbers(),
            got: target.len(),
        });
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target spectrum"));
    }
    if space.dim() != model.n_params() {
        return Err(Error::Dimension {
            what: "parameter space",
            expected: model.n_params(),
            got: space.dim(),
        });
    }
    if opts.max_iterations == 0 {
        return Err(Error::Domain("max_iterations must be positive".into()));
    }
    let starts = initial_points(space, opts.starts, opts.seed)?;
    let solver = Solver::new(model, target, space, opts);
    let outcomes: Vec<StartOutcome> = starts.into_iter().map(|s| solver.run(s)).collect();
    let (best_start, best) = outcomes
        .iter()
        .enumerate()
        .fold(None::<(usize, &StartOutcome)>, |acc, (i, o)| match acc {
            Some((_, b)) if !(o.residual < b.residual) => acc,
            _ => Some((i, o)),
        })
        .expect("at least one start");
    Ok(FitResult {
        x_star: best.x.clone(),
        residual: best.residual,
        iterations: best.iterations,
        converged: best.converged,
        best_start,
        wall_time: Duration::ZERO,
        starts: outcomes.clone(),
    })
}

struct Solver<'a, S: ?Sized> {
    model: &'a S,
    target: &'a [f64],
    space: &'a ParameterSpace,
    opts: &'a FitOptions,
    lo: Vec<f64>,
    width: Vec<f64>,
    /// Simplex equality in scaled coordinates: `a·u = b`.
    eq: DMatrix<f64>,
}

impl<'a, S: Surrogate + ?Sized> Solver<'a, S> {
    fn new(
        model: &'a S,
        target: &'a [f64],
        space: &'a ParameterSpace,
        opts: &'a FitOptions,
    ) -> Self {
        let p = space.dim();
        let lo: Vec<f64> = space.bounds.iter().map(|b| b.lo).collect();
        let width: Vec<f64> = space.bounds.iter().map(|b| b.width()).collect();
        let eq = if space.has_simplex() {
            let mut row = DMatrix::zeros(1, p);
            for &i in &space.mole_fractions {
                row[(0, i)] = width[i];
            }
            row
        } else {
            DMatrix::zeros(0, p)
        };
        Solver {
            model,
            target,
            space,
            opts,
            lo,
            width,
            eq,
        }
    }

    fn to_x(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut x: Vec<f64> = (0..u.len())
            .map(|i| self.lo[i] + self.width[i] * u[i])
            .collect();
        // Snap to the exact feasible set; only rounding is removed here.
        for (v, b) in x.iter_mut().zip(&self.space.bounds) {
            *v = b.clamp(*v);
        }
        self.space.repair_sum(&mut x);
        x
    }

    fn to_u(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| {
            if self.width[i] > 0.0 {
                (x[i] - self.lo[i]) / self.width[i]
            } else {
                0.0
            }
        })
    }

    fn objective(&self, x: &[f64], buf: &mut [f64]) -> f64 {
        self.model.evaluate(x, buf);
        buf.iter()
            .zip(self.target)
            .map(|(p, s)| (p - s) * (p - s))
            .sum()
    }

    /// Residual `r̂ − s`, its squared norm and the scaled Jacobian.
    fn linearize(&self, x: &[f64], res: &mut DVector<f64>, jac: &mut DMatrix<f64>) -> f64 {
        self.model
            .evaluate_with_jacobian(x, res.as_mut_slice(), jac);
        for (r, s) in res.iter_mut().zip(self.target) {
            *r -= s;
        }
        for (j, mut col) in jac.column_iter_mut().enumerate() {
            col *= self.width[j];
        }
        res.norm_squared()
    }

    fn step_bounds(&self, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = u.len();
        let lower = DVector::from_fn(p, |i, _| if self.width[i] > 0.0 { -u[i] } else { 0.0 });
        let upper = DVector::from_fn(p, |i, _| if self.width[i] > 0.0 { 1.0 - u[i] } else { 0.0 });
        (lower, upper)
    }

    /// `‖P(u − g) − u‖∞`: zero exactly at KKT points.
    fn stationarity(&self, u: &DVector<f64>, grad: &DVector<f64>) -> f64 {
        let (lower, upper) = self.step_bounds(u);
        let h = DMatrix::identity(u.len(), u.len());
        match qp::solve(&h, grad, &self.eq, &lower, &upper) {
            Ok(d) => d.amax(),
            Err(_) => f64::INFINITY,
        }
    }

    fn run(&self, start: ParameterVector) -> StartOutcome {
        let p = self.space.dim();
        let m = self.target.len();
        let mut x = self.to_x(&self.to_u(&start));
        let mut u = self.to_u(&x);
        let mut res = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, p);
        let mut trial = alloc::vec![0.0; m];
        let mut f = self.linearize(&x, &mut res, &mut jac);
        let mut lambda = 1e-3;
        let mut nu = 2.0;
        let mut converged = false;
        let mut iterations = 0;

        while iterations < self.opts.max_iterations {
            iterations += 1;
            let grad = jac.tr_mul(&res);
            let jtj = jac.tr_mul(&jac);
            if f == 0.0 || self.stationarity(&u, &grad) <= self.opts.kkt_tolerance * (1.0 + f) {
                converged = true;
                break;
            }
            let diag_max = jtj.diagonal().max().max(f64::MIN_POSITIVE);
            let (lower, upper) = self.step_bounds(&u);
            let mut accepted = false;
            let mut stalled = false;
            for _ in 0..40 {
                let mut h = jtj.clone();
                for i in 0..p {
                    h[(i, i)] += lambda * jtj[(i, i)].max(1e-10 * diag_max);
                }
                let Ok(d) = qp::solve(&h, &grad, &self.eq, &lower, &upper) else {
                    lambda *= 10.0;
                    continue;
                };
                if d.amax() <= self.opts.step_tolerance {
                    stalled = true;
                    break;
                }
                // Predicted decrease of ½‖r‖² under the Gauss–Newton model.
                let predicted = -(grad.dot(&d) + 0.5 * d.dot(&(&jtj * &d)));
                let x_new = self.to_x(&(&u + &d));
                let f_new = self.objective(&x_new, &mut trial);
                let rho = if predicted > 0.0 {
                    0.5 * (f - f_new) / predicted
                } else {
                    -1.0
                };
                if f_new < f && rho > 1e-4 {
                    let rel = (f - f_new) / f.max(f64::MIN_POSITIVE);
                    x = x_new;
                    u = self.to_u(&x);
                    f = self.linearize(&x, &mut res, &mut jac);
                    lambda *= f64::max(1.0 / 3.0, 1.0 - libm::pow(2.0 * rho - 1.0, 3.0));
                    nu = 2.0;
                    accepted = true;
                    if rel <= self.opts.objective_tolerance {
                        stalled = true;
                    }
                    break;
                }
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e30 {
                    stalled = true;
                    break;
                }
            }
            if stalled || !accepted {
                // No further decrease is possible in floating point; accept
                // the point if it is first-order stationary to a looser
                // tolerance.
                let grad = jac.tr_mul(&res);
                converged = f == 0.0
                    || self.stationarity(&u, &grad) <= 1e3 * self.opts.kkt_tolerance * (1.0 + f);
                break;
            }
        }
        let residual = self.objective(&x, &mut trial);
        StartOutcome {
            start,
            x: ParameterVector(x),
            residual,
            iterations,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{cars, Interval};

    /// Linear map `r(x) = A x + c` on a 2-D box: the constrained minimum is
    /// available in closed form for checking.
    struct Linear {
        a: DMatrix<f64>,
        c: DVector<f64>,
    }

    impl Surrogate for Linear {
        fn n_params(&self) -> usize {
            self.a.ncols()
        }
        fn n_wavenumbers(&self) -> usize {
            self.a.nrows()
        }
        fn evaluate(&self, x: &[f64], out: &mut [f64]) {
            let v = &self.a * DVector::from_column_slice(x) + &self.c;
            out.copy_from_slice(v.as_slice());
        }
        fn evaluate_with_jacobian(&self, x: &[f64], values: &mut [f64], jac: &mut DMatrix<f64>) {
            self.evaluate(x, values);
            *jac = self.a.clone();
        }
    }

    #[test]
    fn initial_points_are_feasible_and_reproducible() {
        let space = ParameterSpace::cars();
        let one = initial_points(&space, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].0, space.project(&space.center()));
        let a = initial_points(&space, 5, 3).unwrap();
        let b = initial_points(&space, 5, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| space.is_physical(x)));
        assert!(initial_points(&space, 0, 3).is_err());
    }

    #[test]
    fn unconstrained_linear_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let c = DVector::zeros(3);
        let model = Linear { a: a.clone(), c };
        let truth = DVector::from_vec(alloc::vec![0.3, 0.6]);
        let target = &a * &truth;
        let space = ParameterSpace::unit(2);
        let fit = fit_spectrum(&model, target.as_slice(), &space, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.x_star[0] - 0.3).abs() < 1e-10 && (fit.x_star[1] - 0.6).abs() < 1e-10);
        assert!(fit.residual < 1e-20);
    }

    #[test]
    fn simplex_constrained_projection() {
        // r(x) = x on three mole fractions: the fit is the Euclidean
        // projection of the target onto {Σx = 1} ∩ box.
        let model = Linear {
            a: DMatrix::identity(3, 3),
            c: DVector::zeros(3),
        };
        let space = ParameterSpace {
            names: alloc::vec!["a".into(), "b".into(), "c".into()],
            bounds: alloc::vec![Interval::new(0.0, 1.0); 3],
            mole_fractions: alloc::vec![0, 1, 2],
        };
        let target = [0.9, 0.5, -0.2];
        let fit = fit_spectrum(&model, &target, &space, &FitOptions::default()).unwrap();
        // Projection: c hits 0, then a and b share the 0.4 excess equally.
        let expected = [0.7, 0.3, 0.0];
        for (x, e) in fit.x_star.iter().zip(expected) {
            assert!((x - e).abs() < 1e-10, "{:?}", fit.x_star);
        }
        assert!((fit.x_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn winner_has_smallest_residual() {
        let model = Linear {
            a: DMatrix::identity(3, 3),
            c: DVector::zeros(3),
        };
        let space = ParameterSpace {
            names: alloc::vec!["a".into(), "b".into(), "c".into()],
            bounds: alloc::vec![Interval::new(0.0, 1.0); 3],
            mole_fractions: alloc::vec![0, 1, 2],
        };
        let opts = FitOptions {
            starts: 4,
            ..FitOptions::default()
        };
        let fit = fit_spectrum(&model, &[0.2, 0.2, 0.2], &space, &opts).unwrap();
        assert_eq!(fit.starts.len(), 4);
        assert!(fit.starts.iter().all(|s| fit.residual <= s.residual));
        let first_best = fit
            .starts
            .iter()
            .position(|s| s.residual == fit.residual)
            .unwrap();
        assert_eq!(first_best, fit.best_start);
    }

    #[test]
    fn rejects_mismatched_target() {
        let model = Linear {
            a: DMatrix::identity(5, 5),
            c: DVector::zeros(5),
        };
        let space = ParameterSpace::cars();
        assert!(matches!(
            fit_spectrum(&model, &[0.0; 3], &space, &FitOptions::default()),
            Err(Error::Dimension { .. })
        ));
        let mut bad = ParameterSpace::cars();
        bad.bounds[cars::N2] = Interval::new(0.95, 1.0);
        bad.bounds[cars::H2] = Interval::new(0.1, 0.6);
        assert!(fit_spectrum(&model, &[0.0; 5], &bad, &FitOptions::default()).is_err());
    }

    #[test]
    fn fixed_parameter_stays_put() {
        let model = Linear {
            a: DMatrix::identity(2, 2),
            c: DVector::zeros(2),
        };
        let space = ParameterSpace::boxed(
            alloc::vec!["a".into(), "b".into()],
            alloc::vec![Interval::new(0.0, 1.0), Interval::new(0.4, 0.4)],
        )
        .unwrap();
        let fit = fit_spectrum(&model, &[0.25, 0.9], &space, &FitOptions::default()).unwrap();
        assert_eq!(fit.x_star[1], 0.4, "{fit:?}");
        assert!((fit.x_star[0] - 0.25).abs() < 1e-9, "{fit:?}");
        let _ = alloc::format!("{fit:?}");
    }
}
