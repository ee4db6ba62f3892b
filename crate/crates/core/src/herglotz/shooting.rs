//! Characteristics of the contact Hamiltonian and the two-point shooting
//! problem `xi(t; p0) = y`.

use serde::{Deserialize, Serialize};

use super::{check_time, FundamentalResult};
use crate::caratheodory::{CostTrajectory, Curve, OVERFLOW_LIMIT};
use crate::contact_system::{HamiltonianSystem, MAX_DIM};
use crate::error::{precondition, Error, Result};
use crate::numeric::{norm, solve_small};

/// Packed `[xi, p, u]`.
const PACKED: usize = 2 * MAX_DIM + 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacteristicState {
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
    pub u: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDerivative {
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootingParams {
    /// RK4 steps from 0 to t.
    pub steps: usize,
    /// Starting duals per axis.
    pub grid_per_axis: usize,
    /// Half-width of the starting grid; `None` means `2|y - x|/t + 5`.
    pub p_max: Option<f64>,
    /// Accepted endpoint miss, relative to `1 + |y|`.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub fd_step: f64,
}

impl Default for ShootingParams {
    fn default() -> Self {
        Self {
            steps: 256,
            grid_per_axis: 9,
            p_max: None,
            newton_tol: 1e-10,
            max_newton: 50,
            fd_step: 1e-7,
        }
    }
}

const TIE_TOL: f64 = 1e-12;

fn field(hs: &HamiltonianSystem, dim: usize, y: &[f64], out: &mut [f64]) {
    let (xi, rest) = y.split_at(dim);
    let (p, u) = rest.split_at(dim);
    let u = u[0];
    let mut hp = [0.0; MAX_DIM];
    let mut hx = [0.0; MAX_DIM];
    hs.h_p(xi, u, p, &mut hp[..dim]);
    hs.h_x(xi, u, p, &mut hx[..dim]);
    let hu = hs.h_u(xi, u, p);
    let h = hs.value(xi, u, p);
    let mut pv = 0.0;
    for i in 0..dim {
        out[i] = hp[i];
        out[dim + i] = -hx[i] - hu * p[i];
        pv += p[i] * hp[i];
    }
    out[2 * dim] = pv - h;
}

/// Right-hand side of the characteristic system:
/// `(H_p, -H_x - H_u p, <p, H_p> - H)`.
pub fn lie_step_field(hs: &HamiltonianSystem, state: &CharacteristicState) -> StateDerivative {
    let dim = hs.dim();
    let mut y = [0.0; PACKED];
    pack(state, dim, &mut y);
    let mut d = [0.0; PACKED];
    field(hs, dim, &y[..2 * dim + 1], &mut d[..2 * dim + 1]);
    StateDerivative {
        xi: d[..dim].to_vec(),
        p: d[dim..2 * dim].to_vec(),
        u: d[2 * dim],
    }
}

fn pack(state: &CharacteristicState, dim: usize, y: &mut [f64]) {
    y[..dim].copy_from_slice(&state.xi);
    y[dim..2 * dim].copy_from_slice(&state.p);
    y[2 * dim] = state.u;
}

fn unpack(y: &[f64], dim: usize, s: f64) -> CharacteristicState {
    CharacteristicState {
        xi: y[..dim].to_vec(),
        p: y[dim..2 * dim].to_vec(),
        u: y[2 * dim],
        s,
    }
}

/// Integrates the characteristic system, handing every state to `sink`.
fn integrate(
    hs: &HamiltonianSystem,
    t: f64,
    x: &[f64],
    u0: f64,
    p0: &[f64],
    steps: usize,
    mut sink: impl FnMut(&[f64]),
) -> Result<[f64; PACKED]> {
    let dim = hs.dim();
    let m = 2 * dim + 1;
    let mut y = [0.0; PACKED];
    y[..dim].copy_from_slice(x);
    y[dim..2 * dim].copy_from_slice(p0);
    y[2 * dim] = u0;
    sink(&y[..m]);
    let h = t / steps as f64;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = ([0.0; PACKED], [0.0; PACKED], [0.0; PACKED], [0.0; PACKED], [0.0; PACKED]);
    for step in 0..steps {
        field(hs, dim, &y[..m], &mut k1[..m]);
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        field(hs, dim, &tmp[..m], &mut k2[..m]);
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        field(hs, dim, &tmp[..m], &mut k3[..m]);
        for i in 0..m {
            tmp[i] = y[i] + h * k3[i];
        }
        field(hs, dim, &tmp[..m], &mut k4[..m]);
        for i in 0..m {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(&bad) = y[..m].iter().find(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            return Err(Error::Overflow {
                at: h * (step + 1) as f64,
                value: bad,
            });
        }
        sink(&y[..m]);
    }
    Ok(y)
}

fn check_shoot_args(hs: &HamiltonianSystem, t: f64, x: &[f64], p0: &[f64], steps: usize) -> Result<()> {
    check_time(t)?;
    if x.len() != hs.dim() || p0.len() != hs.dim() {
        return precondition("state dimension does not match the Hamiltonian");
    }
    if steps == 0 {
        return precondition("need at least one integration step");
    }
    Ok(())
}

/// State at time `t` of the characteristic from `(x, p0, u0)`.
pub fn shoot(
    hs: &HamiltonianSystem,
    t: f64,
    x: &[f64],
    u0: f64,
    p0: &[f64],
    steps: usize,
) -> Result<CharacteristicState> {
    check_shoot_args(hs, t, x, p0, steps)?;
    let y = integrate(hs, t, x, u0, p0, steps, |_| {})?;
    Ok(unpack(&y, hs.dim(), t))
}

/// Every RK4 state of the characteristic, `steps + 1` entries.
pub fn shoot_path(
    hs: &HamiltonianSystem,
    t: f64,
    x: &[f64],
    u0: f64,
    p0: &[f64],
    steps: usize,
) -> Result<Vec<CharacteristicState>> {
    check_shoot_args(hs, t, x, p0, steps)?;
    let dim = hs.dim();
    let h = t / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    integrate(hs, t, x, u0, p0, steps, |y| {
        let s = h * states.len() as f64;
        states.push(unpack(y, dim, s));
    })?;
    Ok(states)
}

struct Root {
    p0: Vec<f64>,
    u_final: f64,
    iterations: usize,
    misses: Vec<f64>,
}

fn endpoint_miss(
    hs: &HamiltonianSystem,
    t: f64,
    x: &[f64],
    y: &[f64],
    u: f64,
    p0: &[f64],
    steps: usize,
    out: &mut [f64],
) -> Result<f64> {
    let dim = hs.dim();
    let end = integrate(hs, t, x, u, p0, steps, |_| {})?;
    for i in 0..dim {
        out[i] = end[i] - y[i];
    }
    Ok(end[2 * dim])
}

/// Damped Newton on `p0 -> xi(t; p0) - y`; `None` when it does not converge.
fn newton_from(
    hs: &HamiltonianSystem,
    t: f64,
    x: &[f64],
    y: &[f64],
    u: f64,
    start: &[f64],
    params: &ShootingParams,
) -> Option<Root> {
    let dim = hs.dim();
    let tol = params.newton_tol * (1.0 + norm(y));
    let mut p = [0.0; MAX_DIM];
    p[..dim].copy_from_slice(start);
    let mut miss = [0.0; MAX_DIM];
    let mut u_final = endpoint_miss(hs, t, x, y, u, &p[..dim], params.steps, &mut miss).ok()?;
    let mut res = norm(&miss[..dim]);
    let mut misses = vec![res];
    for iter in 0..params.max_newton {
        if res <= tol {
            return Some(Root {
                p0: p[..dim].to_vec(),
                u_final,
                iterations: iter,
                misses,
            });
        }
        let mut jac = [0.0; MAX_DIM * MAX_DIM];
        let mut plus = [0.0; MAX_DIM];
        let mut minus = [0.0; MAX_DIM];
        for j in 0..dim {
            let h = params.fd_step * (1.0 + p[j].abs());
            let mut probe = p;
            probe[j] = p[j] + h;
            endpoint_miss(hs, t, x, y, u, &probe[..dim], params.steps, &mut plus).ok()?;
            probe[j] = p[j] - h;
            endpoint_miss(hs, t, x, y, u, &probe[..dim], params.steps, &mut minus).ok()?;
            for i in 0..dim {
                jac[i * dim + j] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        let mut step = [0.0; MAX_DIM];
        let neg: Vec<f64> = miss[..dim].iter().map(|v| -v).collect();
        solve_small(&jac[..dim * dim], &neg, dim, &mut step[..dim])?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = p;
            for i in 0..dim {
                trial[i] = p[i] + alpha * step[i];
            }
            let mut trial_miss = [0.0; MAX_DIM];
            if let Ok(uf) = endpoint_miss(hs, t, x, y, u, &trial[..dim], params.steps, &mut trial_miss) {
                let r = norm(&trial_miss[..dim]);
                if r < res {
                    p = trial;
                    miss = trial_miss;
                    res = r;
                    u_final = uf;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        misses.push(res);
        if !accepted {
            break;
        }
    }
    (res <= tol).then(|| Root {
        p0: p[..dim].to_vec(),
        u_final,
        iterations: params.max_newton,
        misses,
    })
}

fn start_grid(dim: usize, per_axis: usize, p_max: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = if per_axis <= 1 {
        vec![0.0]
    } else {
        (0..per_axis)
            .map(|i| -p_max + 2.0 * p_max * i as f64 / (per_axis - 1) as f64)
            .collect()
    };
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&a| {
                    let mut next = prefix.clone();
                    next.push(a);
                    next
                })
            })
            .collect();
    }
    out
}

/// `A(t, x, y, u)` along the characteristic that hits `y` at time `t`.
/// Among all roots found from the starting grid, the one with the least
/// terminal cost wins (ties go to the smallest `|p0|`).
pub fn fundamental_shooting(
    hs: &HamiltonianSystem,
    t: f64,
    x: &[f64],
    y: &[f64],
    u: f64,
    params: &ShootingParams,
) -> Result<FundamentalResult> {
    check_time(t)?;
    let dim = hs.dim();
    if x.len() != dim || y.len() != dim {
        return precondition("endpoint dimension does not match the Hamiltonian");
    }
    if params.steps == 0 {
        return precondition("need at least one integration step");
    }
    let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let p_max = params.p_max.unwrap_or(2.0 * dist / t + 5.0);
    let starts = start_grid(dim, params.grid_per_axis, p_max);

    let mut best: Option<Root> = None;
    let mut total_iterations = 0;
    for start in &starts {
        let Some(root) = newton_from(hs, t, x, y, u, start, params) else {
            continue;
        };
        total_iterations += root.iterations;
        let better = match &best {
            None => true,
            Some(b) => {
                root.u_final < b.u_final - TIE_TOL
                    || ((root.u_final - b.u_final).abs() <= TIE_TOL && norm(&root.p0) < norm(&b.p0))
            }
        };
        if better {
            best = Some(root);
        }
    }
    let root = best.ok_or(Error::NoRootFound { starts: starts.len() })?;

    let states = shoot_path(hs, t, x, u, &root.p0, params.steps)?;
    let mut nodes: Vec<f64> = states.iter().flat_map(|s| s.xi.iter().copied()).collect();
    let last = nodes.len() - dim;
    nodes[..dim].copy_from_slice(x);
    nodes[last..].copy_from_slice(y);
    let minimizer = Curve::new(t, dim, nodes)?;
    let samples: Vec<f64> = states.iter().map(|s| s.u).collect();
    let h = root.u_final - u;
    Ok(FundamentalResult {
        h,
        a: h + u,
        minimizer,
        trajectory: CostTrajectory {
            u0: u,
            samples,
            substeps_per_segment: 1,
            segments: params.steps,
            t_final: t,
        },
        iterations: total_iterations,
        objective_history: root.misses,
        converged: true,
        grad_norm: 0.0,
        initial_dual: Some(root.p0),
    })
}
