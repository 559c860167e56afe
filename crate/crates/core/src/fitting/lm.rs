//! Dense Levenberg-Marquardt with multiplicative diagonal damping.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping above this value means the damped system could not be factored.
pub const MAX_LAMBDA: f64 = 1e12;

/// A nonlinear least-squares problem `min sum r(x)^2`.
pub trait LeastSquares {
    fn params(&self) -> usize;

    /// Residuals at `x`, plus the Jacobian when `jacobian` is set.
    fn evaluate(
        &self,
        x: &DVector<f64>,
        jacobian: bool,
    ) -> Result<(DVector<f64>, Option<DMatrix<f64>>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmSettings {
    pub max_iter: usize,
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            ftol: 1e-9,
            xtol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub x: DVector<f64>,
    pub initial_cost: f64,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    pub converged: bool,
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub fn solve_lm<P: LeastSquares + ?Sized>(
    problem: &P,
    x0: DVector<f64>,
    settings: &LmSettings,
) -> Result<LmReport> {
    if x0.len() != problem.params() {
        return Err(Error::Dimension(format!(
            "initial point has {} entries, problem has {} parameters",
            x0.len(),
            problem.params()
        )));
    }
    if !finite(&x0) {
        return Err(Error::NonFiniteResidual);
    }
    let (mut r, jac) = problem.evaluate(&x0, true)?;
    if !finite(&r) {
        return Err(Error::NonFiniteResidual);
    }
    let mut jac = jac.ok_or_else(|| Error::Dimension("problem returned no Jacobian".into()))?;
    if jac.nrows() != r.len() || jac.ncols() != x0.len() {
        return Err(Error::Dimension(format!(
            "Jacobian is {}x{}, expected {}x{}",
            jac.nrows(),
            jac.ncols(),
            r.len(),
            x0.len()
        )));
    }
    let mut x = x0;
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut lambda = settings.lambda0;
    let mut iterations = 0;
    let n = x.len();

    if cost == 0.0 || n == 0 {
        return Ok(LmReport {
            x,
            initial_cost,
            cost,
            iterations,
            converged: true,
        });
    }

    while iterations < settings.max_iter {
        let jtj = jac.tr_mul(&jac);
        let g = jac.tr_mul(&r);
        let diag_max = jtj.diagonal().max().max(1.0);
        // zero columns (parameters nothing depends on) still get damped
        let floor = 1e-12 * diag_max;
        let accepted = loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= settings.lambda_up;
                if lambda > MAX_LAMBDA {
                    return Err(Error::Singular(lambda));
                }
                continue;
            };
            let delta = -chol.solve(&g);
            if delta.norm() < settings.xtol * (x.norm() + settings.xtol) {
                return Ok(LmReport {
                    x,
                    initial_cost,
                    cost,
                    iterations,
                    converged: true,
                });
            }
            let candidate = &x + &delta;
            let (r_new, _) = problem.evaluate(&candidate, false)?;
            let cost_new = r_new.norm_squared();
            if finite(&r_new) && cost_new < cost {
                lambda = (lambda * settings.lambda_down).max(1e-15);
                break Some((candidate, r_new, cost_new));
            }
            lambda *= settings.lambda_up;
            if lambda > MAX_LAMBDA {
                break None;
            }
        };
        let Some((candidate, r_new, cost_new)) = accepted else {
            // no descent direction left at any damping
            return Ok(LmReport {
                x,
                initial_cost,
                cost,
                iterations,
                converged: false,
            });
        };
        iterations += 1;
        let relative = (cost - cost_new) / cost;
        x = candidate;
        cost = cost_new;
        if cost == 0.0 || relative < settings.ftol {
            return Ok(LmReport {
                x,
                initial_cost,
                cost,
                iterations,
                converged: true,
            });
        }
        let (r_next, jac_next) = problem.evaluate(&x, true)?;
        debug_assert_eq!(r_next, r_new);
        r = r_next;
        jac = jac_next.ok_or_else(|| Error::Dimension("problem returned no Jacobian".into()))?;
    }
    Ok(LmReport {
        x,
        initial_cost,
        cost,
        iterations,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Closure<F>(usize, F);

    impl<F> LeastSquares for Closure<F>
    where
        F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
    {
        fn params(&self) -> usize {
            self.0
        }

        fn evaluate(
            &self,
            x: &DVector<f64>,
            jacobian: bool,
        ) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
            let (r, j) = (self.1)(x);
            Ok((r, jacobian.then_some(j)))
        }
    }

    #[test]
    fn linear_problem_solves_quickly() {
        let p = Closure(1, |x: &DVector<f64>| {
            (
                DVector::from_element(1, x[0] - 3.0),
                DMatrix::from_element(1, 1, 1.0),
            )
        });
        let rep = solve_lm(&p, DVector::zeros(1), &LmSettings::default()).unwrap();
        assert!((rep.x[0] - 3.0).abs() < 1e-9);
        assert!(rep.iterations <= 3);
        assert!(rep.converged);
    }

    #[test]
    fn rosenbrock_reaches_optimum() {
        let p = Closure(2, |x: &DVector<f64>| {
            let r = DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
            let j = DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]);
            (r, j)
        });
        let rep = solve_lm(
            &p,
            DVector::from_vec(vec![-1.2, 1.0]),
            &LmSettings::default(),
        )
        .unwrap();
        assert!(
            (rep.x[0] - 1.0).abs() < 1e-6 && (rep.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            rep.x
        );
    }

    #[test]
    fn nan_start_is_rejected() {
        let p = Closure(1, |x: &DVector<f64>| {
            (
                DVector::from_element(1, x[0]),
                DMatrix::from_element(1, 1, 1.0),
            )
        });
        let err = solve_lm(
            &p,
            DVector::from_element(1, f64::NAN),
            &LmSettings::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("non-finite residual"));
    }

    #[test]
    fn unused_parameters_stay_put() {
        let p = Closure(2, |x: &DVector<f64>| {
            (
                DVector::from_element(1, x[0] - 1.0),
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            )
        });
        let rep = solve_lm(
            &p,
            DVector::from_vec(vec![0.0, 5.0]),
            &LmSettings::default(),
        )
        .unwrap();
        assert!((rep.x[0] - 1.0).abs() < 1e-9);
        assert_eq!(rep.x[1], 5.0);
    }
}
