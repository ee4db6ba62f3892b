//! Sample-based audit of the standing assumptions on a Lagrangian: strict
//! convexity in `v`, the growth sandwich and the bound on `|L_u|`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ContactSystem, MAX_DIM};
use crate::numeric::{min_eigen_sym, norm};

const MARGIN_TOL: f64 = 1e-9;

/// Axis-aligned sampling region; every coordinate of `x` (resp. `v`) uses
/// the same interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SampleBox {
    pub x: (f64, f64),
    pub u: (f64, f64),
    pub v: (f64, f64),
}

impl SampleBox {
    pub fn cube(lo: f64, hi: f64) -> Self {
        Self {
            x: (lo, hi),
            u: (lo, hi),
            v: (lo, hi),
        }
    }
}

/// Worst-case margins found by [`verify_conditions`]. Negative margins are
/// violations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub samples: usize,
    /// Smallest eigenvalue of `L_vv` over the samples.
    pub min_hessian_eigenvalue: f64,
    /// `max |L_u| - K`.
    pub max_l_u_excess: f64,
    /// `min theta0_bar(|v|) + K|u| - L`.
    pub min_upper_margin: f64,
    /// `min L - (theta0(|v|) - c0 - K|u|)`.
    pub min_lower_margin: f64,
    pub sandwich_violations: usize,
    pub theta0_at_zero: f64,
    pub theta0_nondecreasing: bool,
    pub theta0_bar_nondecreasing: bool,
    pub theta0_quotients_nondecreasing: bool,
    pub declared_k: f64,
    pub declared_c0: f64,
}

impl ConditionReport {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.min_hessian_eigenvalue > 0.0) {
            out.push(format!("L_vv not positive definite (min eigenvalue {:e})", self.min_hessian_eigenvalue));
        }
        if self.max_l_u_excess > MARGIN_TOL {
            out.push(format!("|L_u| exceeds K by {:e}", self.max_l_u_excess));
        }
        if self.sandwich_violations > 0 {
            out.push(format!(
                "growth sandwich violated at {} samples (upper {:e}, lower {:e})",
                self.sandwich_violations, self.min_upper_margin, self.min_lower_margin
            ));
        }
        if self.theta0_at_zero != 0.0 {
            out.push(format!("theta0(0) = {:e} != 0", self.theta0_at_zero));
        }
        if !self.theta0_nondecreasing {
            out.push("theta0 decreases on samples".into());
        }
        if !self.theta0_bar_nondecreasing {
            out.push("theta0_bar decreases on samples".into());
        }
        if !self.theta0_quotients_nondecreasing {
            out.push("difference quotients of theta0 decrease".into());
        }
        if self.declared_k < 0.0 || self.declared_c0 < 0.0 {
            out.push("negative K or c0 declared".into());
        }
        out
    }

    pub fn is_clean(&self) -> bool {
        self.violations().is_empty()
    }
}

fn latin_hypercube(dims: usize, samples: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut perm: Vec<usize> = (0..samples).collect();
        perm.shuffle(rng);
        columns.push(
            perm.into_iter()
                .map(|k| (k as f64 + rng.gen::<f64>()) / samples as f64)
                .collect(),
        );
    }
    (0..samples)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect()
}

fn lerp((lo, hi): (f64, f64), s: f64) -> f64 {
    lo + (hi - lo) * s
}

/// Audits the declared conditions of `system` on Latin-hypercube samples of
/// `region`. Never fails; violations are carried in the report.
pub fn verify_conditions(
    system: &ContactSystem,
    region: &SampleBox,
    samples: usize,
    seed: u64,
) -> ConditionReport {
    let n = system.dim();
    let growth = system.growth();
    let k = growth.k;
    let samples = samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = latin_hypercube(2 * n + 1, samples, &mut rng);

    let mut min_eig = f64::INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    let mut min_upper = f64::INFINITY;
    let mut min_lower = f64::INFINITY;
    let mut sandwich_violations = 0;
    let mut hess = [0.0; MAX_DIM * MAX_DIM];
    for row in &unit {
        let mut x = [0.0; MAX_DIM];
        let mut v = [0.0; MAX_DIM];
        for i in 0..n {
            x[i] = lerp(region.x, row[i]);
            v[i] = lerp(region.v, row[n + 1 + i]);
        }
        let u = lerp(region.u, row[n]);
        let (x, v) = (&x[..n], &v[..n]);

        system.l_vv(x, u, v, &mut hess[..n * n]);
        min_eig = min_eig.min(min_eigen_sym(&hess[..n * n], n));
        max_excess = max_excess.max(system.l_u(x, u, v).abs() - k);

        let l = system.value(x, u, v);
        let speed = norm(v);
        let upper = growth.theta0_bar(speed) + k * u.abs() - l;
        let lower = l - (growth.theta0(speed) - growth.c0 - k * u.abs());
        min_upper = min_upper.min(upper);
        min_lower = min_lower.min(lower);
        let tol = MARGIN_TOL * (1.0 + l.abs());
        if upper < -tol || lower < -tol {
            sandwich_violations += 1;
        }
    }

    let r_max = region.v.0.abs().max(region.v.1.abs()) * (n as f64).sqrt();
    let grid: Vec<f64> = (0..=64).map(|i| r_max * i as f64 / 64.0).collect();
    let nondecreasing = |f: &dyn Fn(f64) -> f64| {
        grid.windows(2)
            .all(|w| f(w[1]) >= f(w[0]) - MARGIN_TOL * (1.0 + f(w[0]).abs()))
    };
    let theta0 = |r: f64| growth.theta0(r);
    let theta0_bar = |r: f64| growth.theta0_bar(r);
    let quotients: Vec<f64> = grid
        .windows(2)
        .map(|w| (theta0(w[1]) - theta0(w[0])) / (w[1] - w[0]))
        .collect();
    let quotients_ok = r_max == 0.0
        || quotients
            .windows(2)
            .all(|q| q[1] >= q[0] - 1e-7 * (1.0 + q[0].abs()));

    ConditionReport {
        samples,
        min_hessian_eigenvalue: min_eig,
        max_l_u_excess: max_excess,
        min_upper_margin: min_upper,
        min_lower_margin: min_lower,
        sandwich_violations,
        theta0_at_zero: growth.theta0(0.0),
        theta0_nondecreasing: nondecreasing(&theta0),
        theta0_bar_nondecreasing: nondecreasing(&theta0_bar),
        theta0_quotients_nondecreasing: quotients_ok,
        declared_k: k,
        declared_c0: growth.c0,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{builtin_system, Growth};
    use super::*;

    #[test]
    fn discounted_quadratic_is_clean() {
        let sys = builtin_system("discounted-quadratic(0.4)", 1).unwrap();
        let report = verify_conditions(&sys, &SampleBox::cube(-5.0, 5.0), 500, 7);
        assert!(report.is_clean(), "{:?}", report.violations());
        assert!(report.max_l_u_excess <= 0.0);
    }

    #[test]
    fn misdeclared_k_is_flagged() {
        let sys = ContactSystem::new(
            "under-declared",
            1,
            |_, u, v| -2.0 * u + 0.5 * v[0] * v[0],
            Growth::quadratic(1.0, 0.0, 0.5, 0.5),
        );
        let report = verify_conditions(&sys, &SampleBox::cube(-5.0, 5.0), 200, 1);
        assert!((report.max_l_u_excess - 1.0).abs() < 1e-6);
        assert!(!report.is_clean());
    }

    #[test]
    fn trig_contact_margins_match_grid_oracle() {
        // Oracle: margins on a 50^3 grid of [-5, 5]^3 evaluated directly.
        let mut oracle_upper = f64::INFINITY;
        let mut oracle_lower = f64::INFINITY;
        let mut oracle_excess = f64::NEG_INFINITY;
        for i in 0..50 {
            for j in 0..50 {
                for l in 0..50 {
                    let at = |m: usize| -5.0 + 10.0 * m as f64 / 49.0;
                    let (x, u, v) = (at(i), at(j), at(l));
                    let lag = 0.5 * v * v + x.sin() * u.sin();
                    oracle_upper = oracle_upper.min(0.5 * v * v + u.abs() - lag);
                    oracle_lower = oracle_lower.min(lag - (0.25 * v * v - 2.0 - u.abs()));
                    oracle_excess = oracle_excess.max((x.sin() * u.cos()).abs() - 1.0);
                }
            }
        }
        assert!(oracle_upper >= 0.0 && oracle_lower >= 0.0 && oracle_excess <= 0.0);

        let sys = builtin_system("trig-contact", 1).unwrap();
        let report = verify_conditions(&sys, &SampleBox::cube(-5.0, 5.0), 2000, 3);
        assert!(report.is_clean(), "{:?}", report.violations());
        assert!(report.min_upper_margin >= 0.0 && report.min_lower_margin >= 0.0);
        assert!(report.min_hessian_eigenvalue > 0.0);
    }

    #[test]
    fn detects_nonconvex_and_bad_growth() {
        let sys = ContactSystem::new(
            "bad",
            1,
            |_, _, v| -0.5 * v[0] * v[0],
            Growth::new(0.0, 0.0, |r| 1.0 - r, |r| r * r),
        );
        let report = verify_conditions(&sys, &SampleBox::cube(-2.0, 2.0), 100, 5);
        let v = report.violations();
        assert!(report.min_hessian_eigenvalue < 0.0);
        assert!(!report.theta0_nondecreasing);
        assert!(report.theta0_at_zero != 0.0);
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn deterministic_under_seed() {
        let sys = builtin_system("trig-contact", 2).unwrap();
        let a = verify_conditions(&sys, &SampleBox::cube(-3.0, 3.0), 300, 11);
        let b = verify_conditions(&sys, &SampleBox::cube(-3.0, 3.0), 300, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn all_builtins_clean() {
        for id in ["quadratic", "discounted-quadratic(1)", "quartic", "trig-contact"] {
            for dim in [1, 2] {
                let sys = builtin_system(id, dim).unwrap();
                let r = verify_conditions(&sys, &SampleBox::cube(-5.0, 5.0), 400, 2);
                assert!(r.is_clean(), "{id}/{dim}: {:?}", r.violations());
            }
        }
    }
}
