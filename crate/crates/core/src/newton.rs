//! Damped Newton iteration with Armijo backtracking, plus the multistart
//! clustering shared by the equilibrium-equation and causal-model solvers.

use crate::linalg;
use crate::scalar::{max_dist, max_norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions<T> {
    pub residual_tol: T,
    pub max_iters: usize,
    pub armijo_c: T,
    pub min_backtrack: T,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        NewtonOptions {
            residual_tol: T::of(1e-10),
            max_iters: 200,
            armijo_c: T::of(1e-4),
            min_backtrack: T::of(1e-6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution<T> {
    pub x: Vec<T>,
    pub residual_norm: T,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonFailure {
    SingularJacobian,
    LineSearchStalled,
    MaxIterations,
    EvalFailed,
}

/// One damped Newton run. `residual` and `jacobian` report evaluation
/// failures (division by zero, degenerate mechanisms) as `Err(())`; such
/// failures during the line search shorten the step instead of aborting.
pub fn damped_newton<T: Scalar>(
    start: &[T],
    residual: &mut dyn FnMut(&[T], &mut [T]) -> Result<(), ()>,
    jacobian: &mut dyn FnMut(&[T], &mut [Vec<T>]) -> Result<(), ()>,
    opts: &NewtonOptions<T>,
) -> Result<NewtonSolution<T>, NewtonFailure> {
    let n = start.len();
    if n == 0 {
        return Ok(NewtonSolution {
            x: Vec::new(),
            residual_norm: T::zero(),
            iterations: 0,
        });
    }
    let mut x = start.to_vec();
    let mut g = vec![T::zero(); n];
    residual(&x, &mut g).map_err(|()| NewtonFailure::EvalFailed)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(NewtonFailure::EvalFailed);
    }
    let mut phi = half_sq_norm(&g);
    if max_norm(&g) < opts.residual_tol {
        return Ok(NewtonSolution {
            x,
            residual_norm: max_norm(&g),
            iterations: 0,
        });
    }
    let mut jac = vec![vec![T::zero(); n]; n];
    let mut g_trial = vec![T::zero(); n];
    for iter in 1..=opts.max_iters {
        jacobian(&x, &mut jac).map_err(|()| NewtonFailure::EvalFailed)?;
        let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
        let delta = linalg::solve(jac.clone(), rhs).map_err(|_| NewtonFailure::SingularJacobian)?;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(NewtonFailure::SingularJacobian);
        }
        let mut alpha = T::one();
        loop {
            let x_trial: Vec<T> = x
                .iter()
                .zip(&delta)
                .map(|(&xi, &di)| xi + alpha * di)
                .collect();
            let ok = residual(&x_trial, &mut g_trial).is_ok()
                && g_trial.iter().all(|v| v.is_finite());
            if ok {
                let phi_trial = half_sq_norm(&g_trial);
                // Sufficient decrease on phi = ||g||^2 / 2, whose directional
                // derivative along the Newton step is -2 phi.
                if phi_trial <= phi * (T::one() - T::of(2.0) * opts.armijo_c * alpha) {
                    x = x_trial;
                    g.copy_from_slice(&g_trial);
                    phi = phi_trial;
                    break;
                }
            }
            alpha = alpha * T::of(0.5);
            if alpha < opts.min_backtrack {
                return Err(NewtonFailure::LineSearchStalled);
            }
        }
        if max_norm(&g) < opts.residual_tol {
            return Ok(NewtonSolution {
                x,
                residual_norm: max_norm(&g),
                iterations: iter,
            });
        }
    }
    Err(NewtonFailure::MaxIterations)
}

fn half_sq_norm<T: Scalar>(g: &[T]) -> T {
    g.iter().fold(T::zero(), |acc, &v| acc + v * v) * T::of(0.5)
}

/// Cluster converged solutions: lexicographic sort, then greedy merge of
/// points within `tol` in max-norm. Order-independent by construction;
/// returns cluster representatives with member counts.
pub fn cluster_solutions<T: Scalar>(mut solutions: Vec<Vec<T>>, tol: T) -> Vec<(Vec<T>, usize)> {
    solutions.sort_by(|a, b| {
        a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut clusters: Vec<(Vec<T>, usize)> = Vec::new();
    for sol in solutions {
        match clusters
            .iter_mut()
            .find(|(rep, _)| max_dist(rep, &sol) < tol)
        {
            Some((_, count)) => *count += 1,
            None => clusters.push((sol, 1)),
        }
    }
    clusters
}
