use super::{check_time, FundamentalResult, OptimizerParams};
use crate::caratheodory::{advance_segment, integrate_cost, Curve, PathView};
use crate::contact_system::ContactSystem;
use crate::error::{precondition, Result};
use crate::optimize::{minimize_bfgs, BfgsParams};

/// Cost of the node array `nodes` started from `u_start` at segment `from`.
/// When `boundary` is given, the value at every node from `from` on is
/// stored into it.
fn terminal_cost(
    system: &ContactSystem,
    path: PathView<'_>,
    from: usize,
    u_start: f64,
    substeps: usize,
    mut boundary: Option<&mut [f64]>,
) -> Result<f64> {
    let segments = path.nodes.len() / path.dim - 1;
    let mut u = u_start;
    if let Some(b) = boundary.as_deref_mut() {
        b[from] = u;
    }
    for k in from..segments {
        u = advance_segment(system, path, k, u, substeps, false, |_| {})?;
        if let Some(b) = boundary.as_deref_mut() {
            b[k + 1] = u;
        }
    }
    Ok(u)
}

fn fill_nodes(nodes: &mut [f64], interior: &[f64], dim: usize) {
    let end = nodes.len() - dim;
    nodes[dim..end].copy_from_slice(interior);
}

/// `h(t, x, y, u)` and `A = h + u` by quasi-Newton minimization of the
/// terminal cost over the interior nodes of an `segments`-piece curve,
/// started from the straight segment.
pub fn fundamental_direct(
    system: &ContactSystem,
    t: f64,
    x: &[f64],
    y: &[f64],
    u: f64,
    segments: usize,
    opt: &OptimizerParams,
) -> Result<FundamentalResult> {
    check_time(t)?;
    if segments < 2 {
        return precondition(format!("need at least 2 segments, got {segments}"));
    }
    if x.len() != system.dim() || y.len() != system.dim() {
        return precondition("endpoint dimension does not match the system");
    }
    if !u.is_finite() {
        return precondition("initial cost must be finite");
    }
    let dim = system.dim();
    let start = Curve::straight(t, x, y, segments)?;
    let dt = start.step();
    let template = start.nodes().to_vec();
    let interior0 = template[dim..template.len() - dim].to_vec();
    let substeps = opt.substeps;
    let h = opt.fd_step;

    let mut f_nodes = template.clone();
    let objective = |z: &[f64]| -> Result<f64> {
        fill_nodes(&mut f_nodes, z, dim);
        let path = PathView { nodes: &f_nodes, dim, dt };
        Ok(terminal_cost(system, path, 0, u, substeps, None)? - u)
    };

    let mut g_nodes = template.clone();
    let mut boundary = vec![0.0; segments + 1];
    let gradient = |z: &[f64], out: &mut [f64]| -> Result<()> {
        fill_nodes(&mut g_nodes, z, dim);
        terminal_cost(system, PathView { nodes: &g_nodes, dim, dt }, 0, u, substeps, Some(&mut boundary))?;
        // Moving node j only changes segments j-1 and j, so each probe
        // restarts from the stored value at node j-1.
        for (c, g) in out.iter_mut().enumerate() {
            let j = c / dim + 1;
            let idx = j * dim + c % dim;
            let orig = g_nodes[idx];
            g_nodes[idx] = orig + h;
            let plus = terminal_cost(system, PathView { nodes: &g_nodes, dim, dt }, j - 1, boundary[j - 1], substeps, None)?;
            g_nodes[idx] = orig - h;
            let minus = terminal_cost(system, PathView { nodes: &g_nodes, dim, dt }, j - 1, boundary[j - 1], substeps, None)?;
            g_nodes[idx] = orig;
            *g = (plus - minus) / (2.0 * h);
        }
        Ok(())
    };

    let outcome = minimize_bfgs(
        interior0,
        objective,
        gradient,
        &BfgsParams {
            tol: opt.tol,
            gtol: opt.gtol,
            max_iter: opt.max_iter,
        },
    )?;

    let mut nodes = template;
    fill_nodes(&mut nodes, &outcome.x, dim);
    let minimizer = Curve::new(t, dim, nodes)?;
    let trajectory = integrate_cost(system, &minimizer, u, substeps)?;
    let h = trajectory.final_value() - u;
    Ok(FundamentalResult {
        h,
        a: h + u,
        minimizer,
        trajectory,
        iterations: outcome.iterations,
        objective_history: outcome.history,
        converged: outcome.converged,
        grad_norm: outcome.grad_norm,
        initial_dual: None,
    })
}

#[cfg(test)]
mod tests {
    use super::super::discounted_closed_form;
    use super::*;
    use crate::caratheodory::integrate_cost;
    use crate::contact_system::builtin_system;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(lambda: f64) -> ContactSystem {
        builtin_system(&format!("discounted-quadratic({lambda})"), 1).unwrap()
    }

    #[test]
    fn kinetic_action_is_straight_line() {
        let sys = builtin_system("quadratic", 1).unwrap();
        let r = fundamental_direct(&sys, 1.0, &[0.0], &[1.0], 0.0, 8, &OptimizerParams::default()).unwrap();
        assert!((r.h - 0.5).abs() < 1e-12 && (r.a - 0.5).abs() < 1e-12);
        assert!(r.converged);
        for (k, node) in r.minimizer.nodes().iter().enumerate() {
            assert!((node - k as f64 / 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn discounted_example_matches_closed_form() {
        let exact = discounted_closed_form(1.0, 1.0, 1.0, 2.0);
        assert!((exact - (2.0 / 1f64.exp() + 0.5 / (1f64.exp() - 1.0))).abs() < 1e-15);
        let r = fundamental_direct(&disc(1.0), 1.0, &[0.0], &[1.0], 2.0, 32, &OptimizerParams::default()).unwrap();
        assert!((r.a - exact).abs() / exact < 1e-3, "{} vs {exact}", r.a);
        assert!(r.converged);
        assert_eq!(r.a - r.h, 2.0);
        assert_eq!(r.minimizer.start(), &[0.0]);
        assert_eq!(r.minimizer.end(), &[1.0]);
    }

    #[test]
    fn rest_is_optimal_on_the_diagonal() {
        let r = fundamental_direct(&disc(1.0), 1.0, &[0.4], &[0.4], 1.0, 16, &OptimizerParams::default()).unwrap();
        assert!((r.a - (-1.0f64).exp()).abs() < 1e-9);
        assert!(r.minimizer.nodes().iter().all(|v| (v - 0.4).abs() < 1e-9));
    }

    #[test]
    fn direct_beats_random_perturbations() {
        // Brute-force oracle: no perturbed curve does better than the optimum.
        let sys = disc(1.0);
        let segments = 16;
        let r = fundamental_direct(&sys, 1.0, &[0.0], &[1.0], 0.5, segments, &OptimizerParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let amp = rng.gen_range(0.0..0.2);
            let mut nodes = r.minimizer.nodes().to_vec();
            for v in nodes[1..segments].iter_mut() {
                *v += amp * rng.gen_range(-1.0..1.0);
            }
            let curve = Curve::new(1.0, 1, nodes).unwrap();
            let cost = integrate_cost(&sys, &curve, 0.5, 4).unwrap().final_value();
            assert!(cost >= r.a - 1e-12);
        }
    }

    #[test]
    fn rejects_short_horizon_and_coarse_grid() {
        let sys = disc(1.0);
        let opt = OptimizerParams::default();
        assert!(fundamental_direct(&sys, 1e-7, &[0.0], &[1.0], 0.0, 8, &opt).is_err());
        assert!(fundamental_direct(&sys, 1.0, &[0.0], &[1.0], 0.0, 1, &opt).is_err());
    }

    #[test]
    fn two_dimensional_trig_system_runs() {
        let sys = builtin_system("trig-contact", 2).unwrap();
        let r = fundamental_direct(&sys, 1.0, &[0.0, 0.5], &[1.0, -0.5], 0.3, 8, &OptimizerParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.objective_history.windows(2).all(|w| w[1] <= w[0]));
        let straight = Curve::straight(1.0, &[0.0, 0.5], &[1.0, -0.5], 8).unwrap();
        let base = integrate_cost(&sys, &straight, 0.3, 4).unwrap().final_value();
        assert!(r.a <= base);
    }
}
