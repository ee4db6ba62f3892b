//! Seeded invariant suite behind `contact-hj check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::caratheodory::{cost_comparison, integrate_cost, Curve, DEFAULT_SUBSTEPS};
use crate::contact_system::{legendre_to_hamiltonian, verify_conditions, ContactSystem, HamiltonianSystem, LegendreParams, SampleBox};
use crate::herglotz::{fundamental_bounds, fundamental_direct, fundamental_exponential, OptimizerParams};
use crate::hj_solver::InitialDatum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    /// Half-width of the cube sampled in `x`, `u` and `v`.
    pub half_width: f64,
    pub samples: usize,
    /// Random curves for the exponential representation.
    pub curves: usize,
    /// `(t, x, y, u)` draws for the fundamental-solution bounds.
    pub fundamental_samples: usize,
}

impl Default for CheckParams {
    fn default() -> Self {
        Self {
            half_width: 3.0,
            samples: 2000,
            curves: 100,
            fundamental_samples: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl InvariantResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

const EXPONENTIAL_TOL: f64 = 1e-7;
const LEGENDRE_TOL: f64 = 1e-6;
const BOUND_SLACK: f64 = 1e-6;

fn random_walk(rng: &mut ChaCha8Rng, dim: usize, t: f64, segments: usize, step: f64) -> Curve {
    let mut nodes = Vec::with_capacity((segments + 1) * dim);
    let start: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    nodes.extend_from_slice(&start);
    for k in 0..segments {
        for i in 0..dim {
            let prev = nodes[k * dim + i];
            nodes.push(prev + rng.gen_range(-step..step));
        }
    }
    Curve::new(t, dim, nodes).expect("well-formed random curve")
}

fn conditions(system: &ContactSystem, params: &CheckParams, seed: u64) -> InvariantResult {
    let h = params.half_width;
    let report = verify_conditions(system, &SampleBox::cube(-h, h), params.samples, seed);
    let violations = report.violations();
    let detail = if violations.is_empty() {
        format!("{} samples, min Hessian eigenvalue {:.3e}", report.samples, report.min_hessian_eigenvalue)
    } else {
        violations.join("; ")
    };
    InvariantResult::new("conditions", violations.is_empty(), detail)
}

fn legendre(system: &ContactSystem, hs: &HamiltonianSystem, params: &CheckParams, rng: &mut ChaCha8Rng) -> InvariantResult {
    let dim = system.dim();
    let h = params.half_width;
    let n = (params.samples / 20).max(10);
    let mut worst = 0.0_f64;
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-h..h)).collect();
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-h..h)).collect();
        let u = rng.gen_range(-h..h);
        match legendre_to_hamiltonian(system, &x, u, &p, &LegendreParams::default()) {
            Ok(pt) => {
                let exact = hs.value(&x, u, &p);
                worst = worst.max((pt.value - exact).abs() / exact.abs().max(1.0));
            }
            Err(e) => return InvariantResult::new("legendre", false, e.to_string()),
        }
    }
    InvariantResult::new("legendre", worst <= LEGENDRE_TOL, format!("{n} points, worst relative gap {worst:.3e}"))
}

fn exponential(system: &ContactSystem, params: &CheckParams, rng: &mut ChaCha8Rng) -> InvariantResult {
    let mut worst = 0.0_f64;
    for _ in 0..params.curves {
        let t = rng.gen_range(0.2..2.0);
        let curve = random_walk(rng, system.dim(), t, 16, 0.3);
        let u = rng.gen_range(-2.0..2.0);
        let ode = integrate_cost(system, &curve, u, DEFAULT_SUBSTEPS).map(|tr| tr.final_value());
        let rep = fundamental_exponential(system, &curve, u, DEFAULT_SUBSTEPS);
        match (ode, rep) {
            (Ok(b), Ok(a)) => worst = worst.max((a - b).abs() / b.abs().max(1.0)),
            (Err(e), _) | (_, Err(e)) => return InvariantResult::new("exponential-representation", false, e.to_string()),
        }
    }
    InvariantResult::new(
        "exponential-representation",
        worst <= EXPONENTIAL_TOL,
        format!("{} curves, worst relative gap {worst:.3e}", params.curves),
    )
}

fn ordering(system: &ContactSystem, params: &CheckParams, rng: &mut ChaCha8Rng) -> InvariantResult {
    let mut worst = f64::INFINITY;
    for _ in 0..params.curves.min(20) {
        let curve = random_walk(rng, system.dim(), 1.0, 16, 0.3);
        let lo = rng.gen_range(-2.0..1.0);
        let hi = lo + rng.gen_range(0.1..1.0);
        match cost_comparison(system, &curve, lo, hi, DEFAULT_SUBSTEPS) {
            Ok(c) => worst = worst.min(c.gaps().into_iter().fold(f64::INFINITY, f64::min)),
            Err(e) => return InvariantResult::new("cost-ordering", false, e.to_string()),
        }
    }
    InvariantResult::new("cost-ordering", worst > 0.0, format!("smallest gap between ordered costs {worst:.3e}"))
}

fn bounds(system: &ContactSystem, params: &CheckParams, rng: &mut ChaCha8Rng) -> InvariantResult {
    let dim = system.dim();
    let opt = OptimizerParams::default();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..params.fundamental_samples {
        let t = rng.gen_range(0.25..1.5);
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diagonal = rng.gen_bool(0.5);
        let y: Vec<f64> = if diagonal { x.clone() } else { x.iter().map(|c| c + rng.gen_range(-1.0..1.0)).collect() };
        let u = rng.gen_range(-2.0..2.0);
        let r = match fundamental_direct(system, t, &x, &y, u, 16, &opt) {
            Ok(r) => r,
            Err(e) => return InvariantResult::new("fundamental-bounds", false, e.to_string()),
        };
        let b = fundamental_bounds(system.growth(), t, u);
        worst = worst.max(b.lower - r.a);
        if diagonal {
            worst = worst.max(r.a - b.upper_diagonal);
        }
    }
    InvariantResult::new(
        "fundamental-bounds",
        worst <= BOUND_SLACK,
        format!("{} samples, largest excess {worst:.3e}", params.fundamental_samples),
    )
}

fn datum_audit(datum: &InitialDatum, dim: usize, params: &CheckParams, seed: u64) -> InvariantResult {
    let problems = datum.audit(dim, 2.0 * params.half_width, params.samples, seed);
    let detail = if problems.is_empty() {
        format!("{}: declared Lip {} and sup {} hold", datum.name(), datum.lip, datum.sup_abs)
    } else {
        problems.join("; ")
    };
    InvariantResult::new("datum", problems.is_empty(), detail)
}

/// Runs every invariant that applies to the inputs; each draws from its
/// own stream derived from `seed`, so results do not depend on order.
pub fn run_invariants(
    system: &ContactSystem,
    hamiltonian: Option<&HamiltonianSystem>,
    datum: Option<&InitialDatum>,
    params: &CheckParams,
    seed: u64,
) -> Vec<InvariantResult> {
    let stream = |k: u64| ChaCha8Rng::seed_from_u64(seed ^ (k << 32));
    let mut out = vec![conditions(system, params, seed)];
    if let Some(hs) = hamiltonian {
        out.push(legendre(system, hs, params, &mut stream(1)));
    }
    out.push(exponential(system, params, &mut stream(2)));
    out.push(ordering(system, params, &mut stream(3)));
    out.push(bounds(system, params, &mut stream(4)));
    if let Some(d) = datum {
        out.push(datum_audit(d, system.dim(), params, seed));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_system::{builtin_hamiltonian, builtin_system};
    use crate::hj_solver::builtin_datum;

    fn quick() -> CheckParams {
        CheckParams {
            samples: 300,
            curves: 10,
            fundamental_samples: 4,
            ..CheckParams::default()
        }
    }

    #[test]
    fn builtins_pass() {
        for id in ["quadratic", "discounted-quadratic(1)", "quartic", "trig-contact"] {
            let s = builtin_system(id, 1).unwrap();
            let hs = builtin_hamiltonian(id, 1).unwrap();
            let d = builtin_datum("sin").unwrap();
            let r = run_invariants(&s, Some(&hs), Some(&d), &quick(), 7);
            assert!(r.iter().all(|c| c.passed), "{id}: {r:?}");
        }
    }

    #[test]
    fn understated_k_fails() {
        let s = builtin_system("discounted-quadratic(1)", 1).unwrap();
        let s = s.clone().with_growth(s.growth().clone().with_k(0.1));
        let r = run_invariants(&s, None, None, &quick(), 7);
        assert!(!r.iter().find(|c| c.name == "conditions").unwrap().passed);
    }

    #[test]
    fn deterministic_under_seed() {
        let s = builtin_system("trig-contact", 2).unwrap();
        let a = run_invariants(&s, None, None, &quick(), 11);
        let b = run_invariants(&s, None, None, &quick(), 11);
        assert_eq!(a, b);
    }
}
