use serde::Serialize;

use super::{mu_radius, solve_value, InitialDatum, SearchParams, ValueGrid};
use crate::contact_system::{ContactSystem, HamiltonianSystem, MAX_DIM};
use crate::error::{precondition, Result};
use crate::numeric::percentile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualEntry {
    pub t: f64,
    pub x: Vec<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeResidual {
    pub entries: Vec<ResidualEntry>,
    pub median: f64,
    pub p90: f64,
}

/// `|u_t + H(x, u, D_x u)|` by central differences at interior nodes of a
/// tensor value grid.
pub fn pde_residual(hs: &HamiltonianSystem, grid: &ValueGrid) -> Result<PdeResidual> {
    let dim = grid.shape.len();
    if dim != hs.dim() || grid.shape.iter().product::<usize>() != grid.points.len() {
        return precondition("value grid is not a tensor grid of the Hamiltonian's dimension");
    }
    if grid.times.len() < 3 || grid.shape.iter().any(|&n| n < 3) {
        return precondition("central differences need at least 3 nodes per axis and in time");
    }
    // Row-major strides, first axis slowest.
    let mut strides = vec![1; dim];
    for i in (0..dim.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * grid.shape[i + 1];
    }
    let mut entries = Vec::new();
    let mut grad = [0.0; MAX_DIM];
    for ti in 1..grid.times.len() - 1 {
        let dt = grid.times[ti + 1] - grid.times[ti - 1];
        for (j, x) in grid.points.iter().enumerate() {
            let interior = (0..dim).all(|i| {
                let k = (j / strides[i]) % grid.shape[i];
                k > 0 && k + 1 < grid.shape[i]
            });
            if !interior {
                continue;
            }
            let u = grid.values[ti][j];
            let u_t = (grid.values[ti + 1][j] - grid.values[ti - 1][j]) / dt;
            for i in 0..dim {
                let (a, b) = (j + strides[i], j - strides[i]);
                grad[i] = (grid.values[ti][a] - grid.values[ti][b]) / (grid.points[a][i] - grid.points[b][i]);
            }
            let residual = (u_t + hs.value(x, u, &grad[..dim])).abs();
            entries.push(ResidualEntry {
                t: grid.times[ti],
                x: x.clone(),
                residual,
            });
        }
    }
    let all: Vec<f64> = entries.iter().map(|e| e.residual).collect();
    Ok(PdeResidual {
        median: percentile(&all, 0.5),
        p90: percentile(&all, 0.9),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialConditionReport {
    pub times: Vec<f64>,
    /// `|u(t, x) - phi(x)|`.
    pub gaps: Vec<f64>,
    /// `Lip(phi) mu(t) t + C2 t` with `C2 = sup|phi| * 2K`.
    pub bounds: Vec<f64>,
    pub within_bound: bool,
    /// Every gap shrinks at least like `1.5 * (t_next / t)` times the
    /// previous one, up to `1e-6`; for halved times this is a factor 3/4.
    pub linear_decay: bool,
}

/// Gaps between `u(t, x)` and `phi(x)` along decreasing times.
pub fn initial_condition_check(
    system: &ContactSystem,
    datum: &InitialDatum,
    x: &[f64],
    t_sequence: &[f64],
    search: &SearchParams,
) -> Result<InitialConditionReport> {
    if t_sequence.is_empty() || t_sequence.windows(2).any(|w| !(w[1] < w[0])) {
        return precondition("times must be non-empty and strictly decreasing");
    }
    let phi_x = datum.eval(x);
    let c2 = datum.sup_abs * 2.0 * system.k();
    let mut gaps = Vec::with_capacity(t_sequence.len());
    let mut bounds = Vec::with_capacity(t_sequence.len());
    for &t in t_sequence {
        let v = solve_value(system, datum, t, x, search)?;
        gaps.push((v.u - phi_x).abs());
        bounds.push(datum.lip * mu_radius(system, datum, t) * t + c2 * t);
    }
    let within_bound = gaps.iter().zip(&bounds).all(|(g, b)| *g <= b * (1.0 + 1e-9) + 1e-12);
    let linear_decay = (1..gaps.len()).all(|i| {
        let factor = 1.5 * t_sequence[i] / t_sequence[i - 1];
        gaps[i] <= factor * gaps[i - 1] + 1e-6
    });
    Ok(InitialConditionReport {
        times: t_sequence.to_vec(),
        gaps,
        bounds,
        within_bound,
        linear_decay,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{builtin_datum, solve_value_grid, tensor_grid};
    use super::*;
    use crate::contact_system::{builtin_hamiltonian, builtin_system};

    fn search() -> SearchParams {
        SearchParams {
            segments: 4,
            grid_points: 17,
            ..SearchParams::default()
        }
    }

    #[test]
    fn linear_datum_has_no_residual() {
        let quad = builtin_system("quadratic", 1).unwrap();
        let hs = builtin_hamiltonian("quadratic", 1).unwrap();
        let d = builtin_datum("linear-window(0.8,50)").unwrap();
        let (points, shape) = tensor_grid(&[-1.0], &[1.0], 9);
        let grid = solve_value_grid(&quad, &d, &[0.1, 0.2, 0.3], &points, &shape, &search()).unwrap();
        // Closed form a x - a^2 t / 2 in the smooth region.
        for (j, x) in points.iter().enumerate() {
            assert!((grid.values[1][j] - (0.8 * x[0] - 0.32 * 0.2)).abs() < 1e-9);
        }
        let r = pde_residual(&hs, &grid).unwrap();
        assert_eq!(r.entries.len(), 7);
        assert!(r.p90 < 1e-7, "{r:?}");
    }

    #[test]
    fn zero_datum_zero_residual() {
        let quad = builtin_system("quadratic", 1).unwrap();
        let hs = builtin_hamiltonian("quadratic", 1).unwrap();
        let d = builtin_datum("constant(0)").unwrap();
        let (points, shape) = tensor_grid(&[-1.0], &[1.0], 4);
        let grid = solve_value_grid(&quad, &d, &[0.1, 0.2, 0.3], &points, &shape, &search()).unwrap();
        let r = pde_residual(&hs, &grid).unwrap();
        assert_eq!(r.median, 0.0);
    }

    #[test]
    fn sine_residual_improves_under_refinement() {
        let quad = builtin_system("quadratic", 1).unwrap();
        let hs = builtin_hamiltonian("quadratic", 1).unwrap();
        let d = builtin_datum("sin").unwrap();
        let median = |n: usize, dt: f64| {
            let (points, shape) = tensor_grid(&[-1.0], &[1.0], n);
            let times = [0.3 - dt, 0.3, 0.3 + dt];
            let grid = solve_value_grid(&quad, &d, &times, &points, &shape, &search()).unwrap();
            pde_residual(&hs, &grid).unwrap().median
        };
        let coarse = median(9, 0.02);
        let fine = median(17, 0.01);
        assert!(fine * 2.0 <= coarse, "{coarse:e} -> {fine:e}");
    }

    #[test]
    fn initial_gaps() {
        let quad = builtin_system("quadratic", 1).unwrap();
        let c = builtin_datum("constant(0.4)").unwrap();
        let r = initial_condition_check(&quad, &c, &[0.2], &[0.2, 0.1], &search()).unwrap();
        assert!(r.gaps.iter().all(|g| *g == 0.0));

        let sin = builtin_datum("sin").unwrap();
        let times = [0.2, 0.1, 0.05, 0.025];
        let r = initial_condition_check(&quad, &sin, &[0.3], &times, &search()).unwrap();
        for (g, t) in r.gaps.iter().zip(times) {
            assert!(*g <= t / 2.0 + 1e-9);
        }
        assert!(r.linear_decay && r.within_bound, "{r:?}");
        assert!(initial_condition_check(&quad, &sin, &[0.3], &[0.1, 0.2], &search()).is_err());
    }
}
