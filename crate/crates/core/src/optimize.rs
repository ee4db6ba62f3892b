//! Dense BFGS with Armijo backtracking.

use crate::error::{Error, Result};
use crate::numeric::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsParams {
    /// Objective decrease over the last iteration considered converged.
    pub tol: f64,
    /// Gradient norm considered converged.
    pub gtol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective value after each iteration (starting point first).
    pub history: Vec<f64>,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
/// Consecutive iterations with a decrease at rounding level that count as
/// a stalled search.
const STALL_ITERATIONS: usize = 8;

/// Minimizes `f` from `x0`.
///
/// Converged means both the gradient norm is below `gtol` and the last
/// decrease is below `tol`. A line search that can no longer decrease `f`
/// (or only at rounding level for several iterations) ends the run early
/// with `converged` reflecting the gradient test only.
/// Running out of iterations is an error.
///
/// Objective failures during the line search (e.g. overflow on a wild trial
/// point) shrink the step instead of aborting.
pub fn minimize_bfgs(
    x0: Vec<f64>,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    mut grad: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    params: &BfgsParams,
) -> Result<BfgsOutcome> {
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut g = vec![0.0; n];
    if n > 0 {
        grad(&x, &mut g)?;
    }
    let mut history = vec![fx];
    let mut gnorm = norm(&g);
    if gnorm < params.gtol {
        return Ok(BfgsOutcome {
            x,
            f: fx,
            grad_norm: gnorm,
            iterations: 0,
            history,
            converged: true,
        });
    }

    let mut hinv = identity(n);
    let mut scaled = false;
    let mut d = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];
    let mut flat = 0;

    for iter in 1..=params.max_iter {
        mat_vec(&hinv, &g, &mut d);
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hinv = identity(n);
            scaled = false;
            for i in 0..n {
                d[i] = -g[i];
            }
            slope = -gnorm * gnorm;
        }

        let mut alpha = if scaled { 1.0 } else { 1.0 / gnorm.max(1.0) };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            for i in 0..n {
                xt[i] = x[i] + alpha * d[i];
            }
            match f(&xt) {
                Ok(ft) if ft.is_finite() && ft <= fx + ARMIJO_C1 * alpha * slope => {
                    accepted = Some(ft);
                    break;
                }
                Ok(ft) if ft.is_finite() => {
                    let denom = 2.0 * (ft - fx - slope * alpha);
                    let trial = if denom > 0.0 { -slope * alpha * alpha / denom } else { 0.5 * alpha };
                    alpha = trial.clamp(0.1 * alpha, 0.5 * alpha);
                }
                _ => alpha *= 0.1,
            }
        }
        let Some(ft) = accepted else {
            return Ok(BfgsOutcome {
                x,
                f: fx,
                grad_norm: gnorm,
                iterations: iter - 1,
                history,
                converged: gnorm < params.gtol,
            });
        };

        grad(&xt, &mut gt)?;
        for i in 0..n {
            s[i] = xt[i] - x[i];
            y[i] = gt[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-16 * norm(&s) * norm(&y) && sy > 0.0 {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|v| *v *= gamma);
                scaled = true;
            }
            mat_vec(&hinv, &y, &mut hy);
            let yhy = dot(&y, &hy);
            let a = (sy + yhy) / (sy * sy);
            for i in 0..n {
                let row = &mut hinv[i * n..(i + 1) * n];
                for j in 0..n {
                    row[j] += a * s[i] * s[j] - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }

        let decrease = fx - ft;
        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        fx = ft;
        gnorm = norm(&g);
        history.push(fx);
        let converged = gnorm < params.gtol && decrease < params.tol;
        flat = if decrease <= 4.0 * f64::EPSILON * (1.0 + fx.abs()) { flat + 1 } else { 0 };
        if converged || flat >= STALL_ITERATIONS {
            return Ok(BfgsOutcome {
                x,
                f: fx,
                grad_norm: gnorm,
                iterations: iter,
                history,
                converged,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "BFGS",
        iterations: params.max_iter,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&m[i * n..(i + 1) * n], v);
    }
}
