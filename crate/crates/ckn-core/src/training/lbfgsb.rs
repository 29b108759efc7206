//! Bound-constrained limited-memory quasi-Newton minimizer.
//!
//! Projected-gradient variant of L-BFGS: the search direction is built by the
//! standard two-loop recursion on a reduced gradient (components at active
//! bounds that push outward are zeroed), and a backtracking Armijo line
//! search runs along the projected path `x(alpha) = P(x + alpha d)`. Accepted
//! objective values are non-increasing by construction, and bound-constrained
//! coordinates hold their bounds exactly at every accepted iterate.

use std::collections::VecDeque;

use crate::error::{CknError, Result};

#[derive(Debug, Clone)]
pub struct Options {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop when the infinity norm of the projected gradient step
    /// `P(x - g) - x` drops to this level.
    pub pg_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_iters: 4000,
            memory: 10,
            pg_tol: 1e-8,
            c1: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Accepted iterations.
    pub iterations: usize,
    /// True when the projected-gradient tolerance was reached.
    pub converged: bool,
    /// True when the line search could not find a decrease; the best iterate
    /// so far is returned instead of an error.
    pub line_search_failed: bool,
    /// Objective value at the start plus after every accepted step.
    pub trace: Vec<f64>,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: returns `H g` for the implicit inverse-Hessian
/// estimate built from the `(s, y)` history.
fn two_loop(
    g: &[f64],
    s_hist: &VecDeque<Vec<f64>>,
    y_hist: &VecDeque<Vec<f64>>,
    rho: &VecDeque<f64>,
) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        alpha[i] = rho[i] * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let last = k - 1;
        let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q
}

/// Minimizes `f` subject to elementwise bounds. `f` returns the objective
/// value and its gradient. Use `f64::NEG_INFINITY` / `f64::INFINITY` for
/// unbounded coordinates.
pub fn minimize<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &Options) -> Result<Solution>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    if lower.len() != n || upper.len() != n {
        return Err(CknError::invalid("bound arrays must match variable count"));
    }
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(CknError::invalid("lower bound exceeds upper bound"));
    }
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(CknError::InvalidStart(
            "objective or gradient is not finite at the initial point".into(),
        ));
    }
    let mut trace = vec![fx];
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::new();
    let mut rho: VecDeque<f64> = VecDeque::new();

    let mut iterations = 0;
    let mut converged = false;
    let mut line_search_failed = false;

    for iter in 0..opts.max_iters {
        // projected-gradient stationarity measure
        let pg_norm = x
            .iter()
            .zip(&g)
            .zip(lower.iter().zip(upper))
            .map(|((&xi, &gi), (&li, &ui))| ((xi - gi).clamp(li, ui) - xi).abs())
            .fold(0.0f64, f64::max);
        if pg_norm <= opts.pg_tol {
            converged = true;
            break;
        }

        // reduced gradient: freeze coordinates at an active bound whose
        // gradient pushes outward
        let mut gr = g.clone();
        for i in 0..n {
            if (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0) {
                gr[i] = 0.0;
            }
        }
        let mut d: Vec<f64> = two_loop(&gr, &s_hist, &y_hist, &rho)
            .into_iter()
            .map(|v| -v)
            .collect();
        for i in 0..n {
            if gr[i] == 0.0 && ((x[i] <= lower[i]) || (x[i] >= upper[i])) {
                d[i] = 0.0;
            }
        }
        if dot(&d, &g) >= 0.0 {
            // not a descent direction; fall back to steepest descent
            d = gr.iter().map(|v| -v).collect();
        }

        let mut alpha = if iter == 0 {
            let g_inf = gr.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (1.0 / g_inf.max(1.0)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut xn, lower, upper);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let slope = dot(&g, &step);
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            if slope < 0.0 {
                let (fn_, gn) = f(&xn);
                if fn_.is_finite() && fn_ <= fx + opts.c1 * slope {
                    let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy = dot(&step, &yv);
                    let s_norm = dot(&step, &step).sqrt();
                    let y_norm = dot(&yv, &yv).sqrt();
                    if sy > 1e-10 * s_norm * y_norm {
                        s_hist.push_back(step);
                        y_hist.push_back(yv);
                        rho.push_back(1.0 / sy);
                        if s_hist.len() > opts.memory {
                            s_hist.pop_front();
                            y_hist.pop_front();
                            rho.pop_front();
                        }
                    }
                    x = xn;
                    fx = fn_;
                    g = gn;
                    trace.push(fx);
                    iterations = iter + 1;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            line_search_failed = true;
            break;
        }
    }

    Ok(Solution {
        x,
        value: fx,
        iterations,
        converged,
        line_search_failed,
        trace,
    })
}
