//! Viscosity solution `u(t, x) = inf_y A(t, y, x, phi(y))` of the contact
//! Cauchy problem, with the minimization restricted to the ball of radius
//! `mu(t) t` around `x`.

mod datum;
mod diagnostics;

pub use datum::{builtin_datum, InitialDatum, BUILTIN_DATA};
pub use diagnostics::{
    initial_condition_check, pde_residual, InitialConditionReport, PdeResidual, ResidualEntry,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact_system::ContactSystem;
use crate::error::{precondition, Result};
use crate::herglotz::{check_time, fundamental_direct, FundamentalResult, OptimizerParams};
use crate::numeric::{distance, golden_section};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    /// Curve segments used for every fundamental solution.
    pub segments: usize,
    /// Coarse grid points per axis across the search ball.
    pub grid_points: usize,
    /// Stopping width of the local refinement in `y`.
    pub ytol: f64,
    /// Best coarse points handed to the local refinement.
    pub refine_candidates: usize,
    pub optimizer: OptimizerParams,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            segments: 16,
            grid_points: 33,
            ytol: 1e-6,
            refine_candidates: 3,
            optimizer: OptimizerParams::default(),
        }
    }
}

/// `mu(t)`: the largest of the four sign-case radii, with `C = theta0_bar(0)`
/// and `C2 = sup|phi| * 2K`.
pub fn mu_radius(system: &ContactSystem, datum: &InitialDatum, t: f64) -> f64 {
    let g = system.growth();
    let e = (2.0 * g.k * t).exp();
    let c = g.c_const();
    let c2 = datum.sup_abs * 2.0 * g.k;
    let slope = datum.lip + 1.0;
    let far = g.theta0_conjugate(e * slope) / e;
    let near = g.theta0_conjugate(slope);
    [
        g.c0 + c2 + c + far,
        e * (g.c0 + c2 + c) + near,
        g.c0 + c + far,
        e * (g.c0 + c) + near,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

/// Outcome of one `(t, x)` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValuePoint {
    pub u: f64,
    pub y_star: Vec<f64>,
    /// `mu(t) t`.
    pub radius: f64,
    /// The objective at `y = x`, an upper bound for `u`.
    pub a_at_x: f64,
    pub best: FundamentalResult,
}

type Evaluation = (f64, FundamentalResult);

/// Coarse grid over the ball followed by golden-section refinement of the
/// best few grid points. `x` itself is always a candidate.
fn search_ball(
    x: &[f64],
    radius: f64,
    search: &SearchParams,
    eval: &(dyn Fn(&[f64]) -> Result<Evaluation> + Sync),
) -> Result<(Vec<f64>, Evaluation, f64)> {
    let dim = x.len();
    let g = search.grid_points.max(2);
    let mut candidates = vec![x.to_vec()];
    if radius > 0.0 {
        let axis: Vec<f64> = (0..g).map(|i| -radius + 2.0 * radius * i as f64 / (g - 1) as f64).collect();
        match dim {
            1 => candidates.extend(axis.iter().map(|o| vec![x[0] + o])),
            _ => {
                for a in &axis {
                    for b in &axis {
                        if (a * a + b * b).sqrt() <= radius {
                            candidates.push(vec![x[0] + a, x[1] + b]);
                        }
                    }
                }
            }
        }
    }
    let values: Vec<Evaluation> = candidates.par_iter().map(|y| eval(y)).collect::<Result<_>>()?;
    let at_x = values[0].0;

    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| values[i].0.total_cmp(&values[j].0).then(i.cmp(&j)));
    let mut best_idx = order[0];
    if radius == 0.0 {
        let (y, e) = (candidates.swap_remove(best_idx), values.into_iter().nth(best_idx).expect("index in range"));
        return Ok((y, e, at_x));
    }

    let spacing = 2.0 * radius / (g - 1) as f64;
    let value_at = |y: &[f64]| eval(y).map(|(v, _)| v);
    let refined: Vec<(Vec<f64>, f64)> = order
        .iter()
        .take(search.refine_candidates)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| refine(x, radius, spacing, &candidates[i], values[i].0, search, &value_at))
        .collect::<Result<_>>()?;

    let mut best_y = candidates[best_idx].clone();
    let mut best_val = values[best_idx].0;
    for (y, v) in refined {
        if v < best_val {
            best_val = v;
            best_y = y;
            best_idx = usize::MAX;
        }
    }
    let best = if best_idx == usize::MAX {
        eval(&best_y)?
    } else {
        values.into_iter().nth(best_idx).expect("index in range")
    };
    Ok((best_y, best, at_x))
}

fn refine(
    x: &[f64],
    radius: f64,
    spacing: f64,
    start: &[f64],
    start_val: f64,
    search: &SearchParams,
    value_at: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
) -> Result<(Vec<f64>, f64)> {
    let dim = x.len();
    let mut y = start.to_vec();
    let mut val = start_val;
    let cycles = if dim == 1 { 1 } else { 20 };
    for _ in 0..cycles {
        let mut moved = 0.0_f64;
        for i in 0..dim {
            // Chord of the ball along axis i through the current point.
            let off: f64 = (0..dim).filter(|&j| j != i).map(|j| (y[j] - x[j]).powi(2)).sum();
            let half = (radius * radius - off).max(0.0).sqrt();
            let lo = (y[i] - spacing).max(x[i] - half);
            let hi = (y[i] + spacing).min(x[i] + half);
            if hi - lo <= search.ytol {
                continue;
            }
            let mut probe = y.clone();
            let (c, v) = golden_section(
                |c| {
                    probe[i] = c;
                    value_at(&probe)
                },
                lo,
                hi,
                search.ytol,
                200,
            )?;
            if v < val {
                moved = moved.max((c - y[i]).abs());
                y[i] = c;
                val = v;
            }
        }
        if moved <= search.ytol {
            break;
        }
    }
    Ok((y, val))
}

fn check_point(system: &ContactSystem, x: &[f64]) -> Result<()> {
    if x.len() != system.dim() {
        return precondition("point dimension does not match the system");
    }
    if x.iter().any(|v| !v.is_finite()) {
        return precondition("point must be finite");
    }
    Ok(())
}

/// `u(t, x)` and a minimizing `y`.
pub fn solve_value(
    system: &ContactSystem,
    datum: &InitialDatum,
    t: f64,
    x: &[f64],
    search: &SearchParams,
) -> Result<ValuePoint> {
    check_time(t)?;
    check_point(system, x)?;
    let radius = mu_radius(system, datum, t) * t;
    let eval = |y: &[f64]| -> Result<Evaluation> {
        let r = fundamental_direct(system, t, y, x, datum.eval(y), search.segments, &search.optimizer)?;
        Ok((r.a, r))
    };
    let (y_star, (u, best), a_at_x) = search_ball(x, radius, search, &eval)?;
    Ok(ValuePoint {
        u,
        y_star,
        radius,
        a_at_x,
        best,
    })
}

/// `inf_y phi(y) + A_t(y, x)` for a Lagrangian that does not depend on `u`.
pub fn lax_oleinik_classical(
    l0: &ContactSystem,
    datum: &InitialDatum,
    t: f64,
    x: &[f64],
    search: &SearchParams,
) -> Result<ValuePoint> {
    if l0.k() != 0.0 {
        return precondition(format!("classical formula needs K = 0, system declares {}", l0.k()));
    }
    check_time(t)?;
    check_point(l0, x)?;
    let radius = mu_radius(l0, datum, t) * t;
    let eval = |y: &[f64]| -> Result<Evaluation> {
        let r = fundamental_direct(l0, t, y, x, 0.0, search.segments, &search.optimizer)?;
        Ok((datum.eval(y) + r.a, r))
    };
    let (y_star, (u, best), a_at_x) = search_ball(x, radius, search, &eval)?;
    Ok(ValuePoint {
        u,
        y_star,
        radius,
        a_at_x,
        best,
    })
}

/// Table of `u(t, x)` over `times x points`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueGrid {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Points per axis when `points` is a tensor grid (first axis slowest).
    pub shape: Vec<usize>,
    /// `values[i][j]` is `u(times[i], points[j])`.
    pub values: Vec<Vec<f64>>,
    pub argmins: Vec<Vec<Vec<f64>>>,
    pub radius_used: Vec<f64>,
}

/// Uniform tensor grid with `resolution` points per axis on the box
/// `[lo, hi]`, first axis slowest.
pub fn tensor_grid(lo: &[f64], hi: &[f64], resolution: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = lo.len();
    let coord = |i: usize, k: usize| {
        if resolution == 1 {
            0.5 * (lo[i] + hi[i])
        } else {
            lo[i] + (hi[i] - lo[i]) * k as f64 / (resolution - 1) as f64
        }
    };
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for i in 0..dim {
        points = points
            .into_iter()
            .flat_map(|p| {
                (0..resolution).map(move |k| {
                    let mut q = p.clone();
                    q.push(coord(i, k));
                    q
                })
            })
            .collect();
    }
    (points, vec![resolution; dim])
}

/// [`solve_value`] on every `(t, x)`; the table does not depend on how the
/// work is scheduled.
pub fn solve_value_grid(
    system: &ContactSystem,
    datum: &InitialDatum,
    times: &[f64],
    points: &[Vec<f64>],
    shape: &[usize],
    search: &SearchParams,
) -> Result<ValueGrid> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return precondition("times must be non-empty and strictly increasing");
    }
    let tasks: Vec<(usize, usize)> = (0..times.len()).flat_map(|i| (0..points.len()).map(move |j| (i, j))).collect();
    let results: Vec<ValuePoint> = tasks
        .par_iter()
        .map(|&(i, j)| solve_value(system, datum, times[i], &points[j], search))
        .collect::<Result<_>>()?;
    let mut values = vec![Vec::with_capacity(points.len()); times.len()];
    let mut argmins = vec![Vec::with_capacity(points.len()); times.len()];
    for (&(i, _), r) in tasks.iter().zip(results) {
        values[i].push(r.u);
        argmins[i].push(r.y_star);
    }
    Ok(ValueGrid {
        times: times.to_vec(),
        points: points.to_vec(),
        shape: shape.to_vec(),
        values,
        argmins,
        radius_used: times.iter().map(|&t| mu_radius(system, datum, t) * t).collect(),
    })
}

/// True when `y_star` lies in the search ball and does at least as well as
/// staying at `x`.
pub fn is_localized(point: &ValuePoint, x: &[f64]) -> bool {
    distance(&point.y_star, x) <= point.radius * (1.0 + 1e-12) && point.u <= point.a_at_x
}
