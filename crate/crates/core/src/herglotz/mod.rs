//! Fundamental solution `h(t, x, y, u)` of the Herglotz problem and
//! `A = h + u`, computed by direct minimization over curves and by
//! shooting along characteristics, plus the checks that tie the two
//! together.

mod direct;
mod shooting;

pub use direct::fundamental_direct;
pub use shooting::{
    fundamental_shooting, lie_step_field, shoot, shoot_path, CharacteristicState, ShootingParams,
    StateDerivative,
};

use serde::{Deserialize, Serialize};

use crate::caratheodory::{integrate_cost, CostTrajectory, Curve};
use crate::contact_system::{ContactSystem, Growth, MAX_DIM};
use crate::error::{precondition, Result};
use crate::numeric::norm;

/// Shortest horizon accepted by the solvers.
pub const T_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerParams {
    pub tol: f64,
    pub gtol: f64,
    pub max_iter: usize,
    /// Central-difference step on node coordinates.
    pub fd_step: f64,
    /// RK4 substeps per curve segment.
    pub substeps: usize,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            gtol: 1e-6,
            max_iter: 2000,
            fd_step: 1e-6,
            substeps: crate::caratheodory::DEFAULT_SUBSTEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FundamentalResult {
    pub h: f64,
    pub a: f64,
    pub minimizer: Curve,
    pub trajectory: CostTrajectory,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    pub converged: bool,
    pub grad_norm: f64,
    /// Starting dual `p0` when the result comes from shooting.
    pub initial_dual: Option<Vec<f64>>,
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t > T_MIN) || !t.is_finite() {
        return precondition(format!("horizon must exceed {T_MIN:e}, got {t}"));
    }
    Ok(())
}

/// Evaluates `e^{E(0)} u + int_0^t e^{E(s)} (L - u_xi L_u) ds` with
/// `E(s) = int_s^t L_u`, along `curve` with `u_xi` from the cost equation.
///
/// Samples are taken at twice the requested substep density so that
/// Simpson panels never cross a segment boundary.
pub fn fundamental_exponential(
    system: &ContactSystem,
    curve: &Curve,
    u: f64,
    substeps_per_segment: usize,
) -> Result<f64> {
    let fine = 2 * substeps_per_segment.max(1);
    let traj = integrate_cost(system, curve, u, fine)?;
    let dim = curve.dim();
    let segments = curve.segments();
    let delta = traj.step();
    let m = segments * fine;

    // Integrands with the velocity of the owning segment; at a shared node
    // the left and right segments see different velocities.
    let mut l_u = vec![[0.0; 2]; m + 1];
    let mut g = vec![[0.0; 2]; m + 1];
    let mut vel = [0.0; MAX_DIM];
    let mut pos = [0.0; MAX_DIM];
    for k in 0..segments {
        curve.velocity(k, &mut vel);
        let start = curve.node(k);
        let end = curve.node(k + 1);
        for j in 0..=fine {
            let theta = j as f64 / fine as f64;
            for i in 0..dim {
                pos[i] = start[i] + theta * (end[i] - start[i]);
            }
            let idx = k * fine + j;
            let side = usize::from(j == fine);
            let uj = traj.samples[idx];
            let lu = system.l_u(&pos[..dim], uj, &vel[..dim]);
            l_u[idx][side] = lu;
            g[idx][side] = system.value(&pos[..dim], uj, &vel[..dim]) - uj * lu;
        }
    }
    // Value at sample `idx` as seen from segment `k`.
    let at = |f: &[[f64; 2]], k: usize, idx: usize| f[idx][usize::from(idx == (k + 1) * fine)];

    // F(s) = int_0^s L_u on every sample: Simpson on even samples, the
    // three-point start rule (5, 8, -1)/12 on odd ones.
    let mut cum = vec![0.0; m + 1];
    for k in 0..segments {
        let base = k * fine;
        for j in (0..fine).step_by(2) {
            let (a, b, c) = (at(&l_u, k, base + j), at(&l_u, k, base + j + 1), at(&l_u, k, base + j + 2));
            cum[base + j + 1] = cum[base + j] + delta * (5.0 * a + 8.0 * b - c) / 12.0;
            cum[base + j + 2] = cum[base + j] + delta * (a + 4.0 * b + c) / 3.0;
        }
    }
    let total = cum[m];
    let weight = |idx: usize| (total - cum[idx]).exp();

    let mut integral = 0.0;
    for k in 0..segments {
        let base = k * fine;
        for j in (0..fine).step_by(2) {
            let f = |i: usize| weight(i) * at(&g, k, i);
            integral += delta * (f(base + j) + 4.0 * f(base + j + 1) + f(base + j + 2)) / 3.0;
        }
    }
    let value = total.exp() * u + integral;
    crate::caratheodory::check_finite(value, curve.t_final())
}

/// Largest residual `|d/ds L_v - L_x - L_u L_v|` over interior segment
/// midpoints, with `L_v` differenced between neighbouring midpoints.
pub fn herglotz_residual(system: &ContactSystem, curve: &Curve, traj: &CostTrajectory) -> Result<f64> {
    let n = curve.segments();
    if n < 4 {
        return precondition(format!("residual needs at least 4 segments, got {n}"));
    }
    let dim = curve.dim();
    let dt = curve.step();
    let mut lv = vec![[0.0; MAX_DIM]; n];
    let mut rhs = vec![[0.0; MAX_DIM]; n];
    let mut pos = [0.0; MAX_DIM];
    let mut vel = [0.0; MAX_DIM];
    let mut lx = [0.0; MAX_DIM];
    for k in 0..n {
        let (a, b) = (curve.node(k), curve.node(k + 1));
        for i in 0..dim {
            pos[i] = 0.5 * (a[i] + b[i]);
        }
        curve.velocity(k, &mut vel);
        let u = traj.at_time((k as f64 + 0.5) * dt);
        let (pos, vel) = (&pos[..dim], &vel[..dim]);
        system.l_v(pos, u, vel, &mut lv[k][..dim]);
        system.l_x(pos, u, vel, &mut lx[..dim]);
        let lu = system.l_u(pos, u, vel);
        for i in 0..dim {
            rhs[k][i] = lx[i] + lu * lv[k][i];
        }
    }
    let mut worst = 0.0_f64;
    for k in 1..n - 1 {
        let mut r = [0.0; MAX_DIM];
        for i in 0..dim {
            r[i] = (lv[k + 1][i] - lv[k - 1][i]) / (2.0 * dt) - rhs[k][i];
        }
        worst = worst.max(norm(&r[..dim]));
    }
    Ok(worst)
}

/// Envelope of `A(t, x, y, u)` implied by the growth conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FundamentalBounds {
    /// Lower bound valid for every `y`.
    pub lower: f64,
    /// Upper bound valid on the diagonal `y = x`.
    pub upper_diagonal: f64,
}

pub fn fundamental_bounds(growth: &Growth, t: f64, u: f64) -> FundamentalBounds {
    let k = growth.k;
    let grow = (k * t).exp();
    let shrink = (-k * t).exp();
    let c = growth.c_const();
    let lower = if u <= 0.0 { grow * u } else { shrink * u } - growth.c0 * t * grow;
    let upper_diagonal = if u <= 0.0 { shrink * u } else { grow * u } + c * t * grow;
    FundamentalBounds { lower, upper_diagonal }
}

/// Value of `A(s, x, xi(s), u)` recomputed from scratch next to the value
/// `u_xi(s)` read off a minimizing trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitCheck {
    pub s: f64,
    pub along: f64,
    pub recomputed: f64,
}

impl SplitCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.along - self.recomputed).abs() / self.recomputed.abs().max(1e-6)
    }
}

/// Re-solves the problem on the first `node` segments of `result`'s
/// minimizer, on the same grid, and compares with the trajectory value.
pub fn dynamic_programming_check(
    system: &ContactSystem,
    result: &FundamentalResult,
    node: usize,
    opt: &OptimizerParams,
) -> Result<SplitCheck> {
    let curve = &result.minimizer;
    if node < 2 || node > curve.segments() {
        return precondition(format!("split node {node} outside 2..={}", curve.segments()));
    }
    if result.trajectory.segments != curve.segments() {
        return precondition("trajectory and minimizer grids differ");
    }
    let s = curve.step() * node as f64;
    let sub = fundamental_direct(system, s, curve.start(), curve.node(node), result.trajectory.u0, node, opt)?;
    Ok(SplitCheck {
        s,
        along: result.trajectory.at_node(node),
        recomputed: sub.a,
    })
}

/// Both sides of `A(s1 + s2, x, xi(s1 + s2), u) = A(s2, xi(s1), xi(s1 + s2), u_xi(s1))`
/// with `s1, s2` given as node counts on the minimizer's grid.
pub fn semigroup_check(
    system: &ContactSystem,
    result: &FundamentalResult,
    n1: usize,
    n2: usize,
    opt: &OptimizerParams,
) -> Result<(f64, f64)> {
    let curve = &result.minimizer;
    let end = n1 + n2;
    if n1 == 0 || n2 < 2 || end < 2 || end > curve.segments() {
        return precondition("invalid split of the minimizer grid");
    }
    let dt = curve.step();
    let u = result.trajectory.u0;
    let whole = fundamental_direct(system, dt * end as f64, curve.start(), curve.node(end), u, end, opt)?;
    let mid_u = result.trajectory.at_node(n1);
    let tail = fundamental_direct(system, dt * n2 as f64, curve.node(n1), curve.node(end), mid_u, n2, opt)?;
    Ok((whole.a, tail.a))
}

#[cfg(test)]
pub(crate) fn discounted_closed_form(lambda: f64, t: f64, dist: f64, u: f64) -> f64 {
    let decay = (-lambda * t).exp() * u;
    if lambda == 0.0 {
        decay + dist * dist / (2.0 * t)
    } else {
        decay + lambda * dist * dist / (2.0 * ((lambda * t).exp() - 1.0))
    }
}
