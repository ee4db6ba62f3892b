use super::{ContactSystem, HamiltonianSystem, MAX_DIM};
use crate::error::{Error, Result};
use crate::numeric::{dot, golden_section, min_eigen_sym, norm, solve_small};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreParams {
    /// Stationarity residual accepted by Newton.
    pub tol: f64,
    pub max_iter: usize,
    /// Half-width of the box searched by the golden-section fallback.
    pub dual_bound: f64,
}

impl Default for LegendreParams {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            dual_bound: 1e3,
        }
    }
}

/// Value of a Legendre transform and the point attaining the supremum.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendrePoint {
    pub value: f64,
    pub maximizer: Vec<f64>,
}

/// `L(x, r, v) = sup_p <p, v> - H(x, r, p)`.
pub fn legendre_to_lagrangian(
    hs: &HamiltonianSystem,
    x: &[f64],
    r: f64,
    v: &[f64],
    params: &LegendreParams,
) -> Result<LegendrePoint> {
    conjugate(
        hs.dim(),
        v,
        |p| hs.value(x, r, p),
        |p, out| hs.h_p(x, r, p, out),
        |p, out| hs.h_pp(x, r, p, out),
        params,
    )
}

/// `H(x, r, p) = sup_v <p, v> - L(x, r, v)`.
pub fn legendre_to_hamiltonian(
    system: &ContactSystem,
    x: &[f64],
    r: f64,
    p: &[f64],
    params: &LegendreParams,
) -> Result<LegendrePoint> {
    conjugate(
        system.dim(),
        p,
        |v| system.value(x, r, v),
        |v, out| system.l_v(x, r, v, out),
        |v, out| system.l_vv(x, r, v, out),
        params,
    )
}

enum NewtonOutcome {
    Converged,
    Singular,
    Failed,
}

/// Maximizes `<z, w> - f(z)` for strictly convex `f`.
fn conjugate(
    dim: usize,
    w: &[f64],
    f: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64], &mut [f64]),
    hess: impl Fn(&[f64], &mut [f64]),
    params: &LegendreParams,
) -> Result<LegendrePoint> {
    let objective = |z: &[f64]| dot(z, w) - f(z);
    let residual = |z: &[f64]| {
        let mut g = [0.0; MAX_DIM];
        grad(z, &mut g[..dim]);
        let mut r = [0.0; MAX_DIM];
        for i in 0..dim {
            r[i] = w[i] - g[i];
        }
        norm(&r[..dim])
    };

    let newton = |z: &mut [f64]| -> NewtonOutcome {
        let mut g = [0.0; MAX_DIM];
        let mut m = [0.0; MAX_DIM * MAX_DIM];
        let mut step = [0.0; MAX_DIM];
        let mut trial = [0.0; MAX_DIM];
        for _ in 0..params.max_iter {
            grad(z, &mut g[..dim]);
            for i in 0..dim {
                g[i] = w[i] - g[i];
            }
            let res = norm(&g[..dim]);
            if !res.is_finite() {
                return NewtonOutcome::Failed;
            }
            if res <= params.tol {
                return NewtonOutcome::Converged;
            }
            hess(z, &mut m[..dim * dim]);
            if m[..dim * dim].iter().any(|v| !v.is_finite())
                || min_eigen_sym(&m[..dim * dim], dim) <= 1e-12
                || solve_small(&m[..dim * dim], &g[..dim], dim, &mut step[..dim]).is_none()
            {
                return NewtonOutcome::Singular;
            }
            let base = objective(z);
            let mut alpha = 1.0;
            loop {
                for i in 0..dim {
                    trial[i] = z[i] + alpha * step[i];
                }
                let val = objective(&trial[..dim]);
                if val.is_finite()
                    && (val >= base - 1e-13 * (1.0 + base.abs())
                        || residual(&trial[..dim]) < res)
                {
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    return NewtonOutcome::Failed;
                }
            }
            z.copy_from_slice(&trial[..dim]);
        }
        NewtonOutcome::Failed
    };

    let mut z = [0.0; MAX_DIM];
    if let NewtonOutcome::Converged = newton(&mut z[..dim]) {
        return Ok(finish(&z[..dim], objective(&z[..dim])));
    }

    // Fallback: coordinate-wise golden section on the dual box, then polish.
    let mut z = [0.0; MAX_DIM];
    let bound = params.dual_bound;
    let cycles = if dim == 1 { 1 } else { 60 };
    for _ in 0..cycles {
        let mut moved = 0.0_f64;
        for i in 0..dim {
            let mut probe = z;
            let (zi, _) = golden_section::<()>(
                |c| {
                    probe[i] = c;
                    Ok(-objective(&probe[..dim]))
                },
                -bound,
                bound,
                params.tol,
                400,
            )
            .unwrap_or((z[i], 0.0));
            moved = moved.max((zi - z[i]).abs());
            z[i] = zi;
        }
        if moved <= params.tol {
            break;
        }
    }
    let coarse = z;
    match newton(&mut z[..dim]) {
        NewtonOutcome::Converged => Ok(finish(&z[..dim], objective(&z[..dim]))),
        _ if residual(&coarse[..dim]) <= params.tol => {
            Ok(finish(&coarse[..dim], objective(&coarse[..dim])))
        }
        _ => Err(Error::NonConvergence {
            what: "Legendre transform",
            iterations: params.max_iter,
        }),
    }
}

fn finish(z: &[f64], value: f64) -> LegendrePoint {
    LegendrePoint {
        value,
        maximizer: z.to_vec(),
    }
}
