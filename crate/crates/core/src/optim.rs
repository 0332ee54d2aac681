//! Limited-memory BFGS with a backtracking (sufficient-decrease) line search.
//!
//! The objective may refuse evaluation at a point (overflow guard); the line
//! search treats such points as infinitely bad and keeps shrinking the step.

use std::collections::VecDeque;

use serde::Serialize;

/// Knobs for the quasi-Newton descent.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Convergence threshold on the gradient norm reported by the problem.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Number of stored (s, y) correction pairs.
    pub memory: usize,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo_c1: f64,
    /// Multiplicative step shrink factor.
    pub backtrack: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            gradient_tolerance: 1e-6,
            max_iterations: 500,
            memory: 20,
            armijo_c1: 1e-4,
            backtrack: 0.5,
        }
    }
}

/// What happened during a fit.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizerReport {
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub converged: bool,
    pub objective_value: f64,
}

pub(crate) trait Problem {
    fn dim(&self) -> usize;

    /// Objective value only. `None` marks a point outside the evaluable
    /// domain. Implementations may cache state for a following `eval_fg`
    /// call at the same point.
    fn eval_f(&mut self, x: &[f64]) -> Option<f64>;

    /// Objective value and gradient.
    fn eval_fg(&mut self, x: &[f64], grad: &mut [f64]) -> Option<f64>;

    /// Gradient norm used for the convergence decision. Defaults to the
    /// Euclidean norm; problems optimized in transformed coordinates
    /// override this to report the norm of the original parameterization.
    fn convergence_norm(&mut self, grad: &[f64]) -> f64 {
        grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize starting from `x0`. Returns the best point found and a report.
/// Accepted steps strictly decrease the objective.
pub(crate) fn minimize<P: Problem>(
    problem: &mut P,
    x0: Vec<f64>,
    cfg: &OptimizerConfig,
) -> (Vec<f64>, OptimizerReport) {
    let n = problem.dim();
    debug_assert_eq!(x0.len(), n);

    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut f = match problem.eval_fg(&x, &mut grad) {
        Some(v) => v,
        None => {
            return (
                x,
                OptimizerReport {
                    iterations: 0,
                    final_gradient_norm: f64::INFINITY,
                    converged: false,
                    objective_value: f64::INFINITY,
                },
            );
        }
    };

    // (s, y, rho) correction pairs, oldest first
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut grad_new = vec![0.0; n];
    let mut alphas = vec![0.0; cfg.memory];

    let mut gnorm = problem.convergence_norm(&grad);
    let mut iterations = 0;

    while gnorm >= cfg.gradient_tolerance && iterations < cfg.max_iterations {
        // two-loop recursion for the search direction
        for (d, g) in dir.iter_mut().zip(&grad) {
            *d = -g;
        }
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alphas[k] = a;
            for (d, yk) in dir.iter_mut().zip(y) {
                *d -= a * yk;
            }
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for d in dir.iter_mut() {
                *d *= gamma;
            }
        }
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            let coef = alphas[k] - beta;
            for (d, sk) in dir.iter_mut().zip(s) {
                *d += coef * sk;
            }
        }

        // enforce a descent direction
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            for (d, g) in dir.iter_mut().zip(&grad) {
                *d = -g;
            }
            slope = -dot(&grad, &grad);
            history.clear();
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            if let Some(f_new) = problem.eval_f(&x_new) {
                if f_new <= f + cfg.armijo_c1 * step * slope && f_new < f {
                    accepted = Some(f_new);
                    break;
                }
            }
            step *= cfg.backtrack;
        }
        let Some(f_new) = accepted else {
            // no acceptable step: the iterate is as good as this method gets
            break;
        };

        let f_checked = problem.eval_fg(&x_new, &mut grad_new);
        debug_assert!(f_checked.is_some());

        // curvature update; reuse the oldest pair's buffers when full
        let (mut s, mut y) = if history.len() == cfg.memory {
            let (s, y, _) = history.pop_front().expect("non-empty history");
            (s, y)
        } else {
            (vec![0.0; n], vec![0.0; n])
        };
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = grad_new[i] - grad[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            history.push_back((s, y, 1.0 / sy));
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut grad, &mut grad_new);
        f = f_new;
        gnorm = problem.convergence_norm(&grad);
        iterations += 1;
    }

    let converged = gnorm < cfg.gradient_tolerance;
    (
        x,
        OptimizerReport {
            iterations,
            final_gradient_norm: gnorm,
            converged,
            objective_value: f,
        },
    )
}
