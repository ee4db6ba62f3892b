//! Families `L^lambda` with `|L^lambda_u| <= K_lambda -> 0` and the
//! convergence of their value functions to the classical one.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::caratheodory::{integrate_cost, Curve};
use crate::contact_system::{ContactSystem, Growth, SampleBox, MAX_DIM};
use crate::error::{precondition, Error, Result};
use crate::hj_solver::{is_localized, lax_oleinik_classical, solve_value, InitialDatum, SearchParams};
use crate::numeric::{distance, parse_call};

/// Identifiers accepted by [`builtin_family`].
pub const BUILTIN_FAMILIES: [&str; 3] = ["discounted", "perturbed", "constant"];

type Builder = Arc<dyn Fn(f64) -> ContactSystem + Send + Sync>;

#[derive(Clone)]
pub struct LambdaFamily {
    name: String,
    builder: Builder,
    k_of_lambda: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    limit: ContactSystem,
}

impl fmt::Debug for LambdaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LambdaFamily")
            .field("name", &self.name)
            .field("limit", &self.limit.name())
            .finish()
    }
}

impl LambdaFamily {
    pub fn new(
        name: impl Into<String>,
        builder: impl Fn(f64) -> ContactSystem + Send + Sync + 'static,
        k_of_lambda: impl Fn(f64) -> f64 + Send + Sync + 'static,
        limit: ContactSystem,
    ) -> Self {
        Self {
            name: name.into(),
            builder: Arc::new(builder),
            k_of_lambda: Arc::new(k_of_lambda),
            limit,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn member(&self, lambda: f64) -> ContactSystem {
        (self.builder)(lambda)
    }

    pub fn k_of_lambda(&self, lambda: f64) -> f64 {
        (self.k_of_lambda)(lambda)
    }

    /// The `u`-independent limit `L_0`.
    pub fn limit(&self) -> &ContactSystem {
        &self.limit
    }
}

fn kinetic(v: &[f64]) -> f64 {
    0.5 * v.iter().map(|c| c * c).sum::<f64>()
}

fn kinetic_system(name: &str, dim: usize, k: f64, c0: f64, c: f64, l: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static) -> ContactSystem {
    let growth = Growth::new(k, c0, |r| 0.5 * r * r, move |r| 0.5 * r * r + c)
        .with_conjugate(|s| if s <= 0.0 { 0.0 } else { 0.5 * s * s });
    ContactSystem::new(name, dim, l, growth)
}

/// Built-in families on `R^dim`:
/// `discounted` (`-lambda u + |v|^2/2`), `perturbed`
/// (`-lambda atan(u) + |v|^2/2 + lambda sin(x_1)`) and `constant`
/// (`|v|^2/2` for every lambda).
pub fn builtin_family(id: &str, dim: usize) -> Result<LambdaFamily> {
    if !(1..=MAX_DIM).contains(&dim) {
        return precondition(format!("dimension must be 1 or 2, got {dim}"));
    }
    let unknown = || Error::UnknownId(id.to_string());
    let (name, args) = parse_call(id).ok_or_else(unknown)?;
    if !args.is_empty() {
        return Err(unknown());
    }
    let limit = kinetic_system("quadratic", dim, 0.0, 0.0, 0.0, |_, _, v| kinetic(v));
    let family = match name {
        "discounted" => LambdaFamily::new(
            "discounted",
            move |lambda| {
                kinetic_system(&format!("discounted({lambda})"), dim, lambda, 0.0, 0.0, move |_, u, v| {
                    -lambda * u + kinetic(v)
                })
                .with_l_u(move |_, _, _| -lambda)
            },
            |lambda| lambda,
            limit,
        ),
        "perturbed" => LambdaFamily::new(
            "perturbed",
            move |lambda| {
                kinetic_system(&format!("perturbed({lambda})"), dim, lambda, lambda, lambda, move |x, u, v| {
                    -lambda * u.atan() + kinetic(v) + lambda * x[0].sin()
                })
                .with_l_u(move |_, u, _| -lambda / (1.0 + u * u))
            },
            |lambda| lambda,
            limit,
        ),
        "constant" => LambdaFamily::new(
            "constant",
            move |_| kinetic_system("quadratic", dim, 0.0, 0.0, 0.0, |_, _, v| kinetic(v)),
            |_| 0.0,
            limit,
        ),
        _ => return Err(unknown()),
    };
    Ok(family)
}

/// Sampled `sup |L_lambda - L_0|` over a box, with `L_lambda(x, v) = L^lambda(x, 0, v)`.
pub fn sup_difference(member: &ContactSystem, limit: &ContactSystem, region: &SampleBox, per_axis: usize) -> f64 {
    let dim = member.dim();
    let n = per_axis.max(2);
    let at = |(lo, hi): (f64, f64), k: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
    let total = n.pow(2 * dim as u32);
    let mut worst = 0.0_f64;
    let mut x = [0.0; MAX_DIM];
    let mut v = [0.0; MAX_DIM];
    for mut idx in 0..total {
        for i in 0..dim {
            x[i] = at(region.x, idx % n);
            idx /= n;
            v[i] = at(region.v, idx % n);
            idx /= n;
        }
        let (x, v) = (&x[..dim], &v[..dim]);
        worst = worst.max((member.value(x, 0.0, v) - limit.value(x, 0.0, v)).abs());
    }
    worst
}

/// `max |L_lambda - L_0|` at the ends and midpoint of every segment of a
/// curve, with the segment's velocity.
fn sup_along(member: &ContactSystem, limit: &ContactSystem, curve: &Curve) -> f64 {
    let dim = curve.dim();
    let mut v = [0.0; MAX_DIM];
    let mut x = [0.0; MAX_DIM];
    let mut worst = 0.0_f64;
    for k in 0..curve.segments() {
        curve.velocity(k, &mut v);
        for frac in [0.0, 0.5, 1.0] {
            curve.position((k as f64 + frac) * curve.step(), &mut x);
            let d = member.value(&x[..dim], 0.0, &v[..dim]) - limit.value(&x[..dim], 0.0, &v[..dim]);
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Declared-property audit of a family along a lambda list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyAudit {
    pub k_values: Vec<f64>,
    pub k_nonincreasing: bool,
    /// `K` at the last lambda is below `K` at the first (or all vanish).
    pub k_vanishing: bool,
    /// Declared `K` of each member matches `K(lambda)`.
    pub k_declared: bool,
    pub sup_differences: Vec<f64>,
    pub sup_nonincreasing: bool,
    pub limit_is_u_independent: bool,
}

impl FamilyAudit {
    pub fn is_clean(&self) -> bool {
        self.k_nonincreasing && self.k_vanishing && self.k_declared && self.sup_nonincreasing && self.limit_is_u_independent
    }
}

pub fn audit_family(family: &LambdaFamily, lambdas: &[f64], region: &SampleBox) -> FamilyAudit {
    let k_values: Vec<f64> = lambdas.iter().map(|&l| family.k_of_lambda(l)).collect();
    let members: Vec<ContactSystem> = lambdas.iter().map(|&l| family.member(l)).collect();
    let sup_differences: Vec<f64> = members.iter().map(|m| sup_difference(m, family.limit(), region, 41)).collect();
    let (first, last) = (k_values.first().copied().unwrap_or(0.0), k_values.last().copied().unwrap_or(0.0));
    FamilyAudit {
        k_nonincreasing: k_values.windows(2).all(|w| w[1] <= w[0]),
        k_vanishing: first == 0.0 || last < first,
        k_declared: members.iter().zip(&k_values).all(|(m, k)| (m.k() - k).abs() <= 1e-12 * (1.0 + k)),
        sup_nonincreasing: sup_differences.windows(2).all(|w| w[1] <= w[0] + 1e-12),
        limit_is_u_independent: family.limit().k() == 0.0,
        k_values,
        sup_differences,
    }
}

/// Trajectory envelope along a limit minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactBound {
    pub bound: f64,
    /// `max_s |u^lambda_xi(s)|`.
    pub max_abs: f64,
    /// `int_0^t |L_lambda - L_0|` along the curve.
    pub correction: f64,
    pub f_value: f64,
    pub c_t: f64,
}

const BOUND_SLACK: f64 = 1e-9;

/// Bounds `|u^lambda_xi(s)|` on `[0, t]` by
/// `t F + C(t) |u| + e^{K t} int |L_lambda - L_0|` with
/// `F = (theta0_bar(R/t) + 2 c0) e^{K t}` and `C(t) = t K e^{K t} + 1`,
/// where `K` is the member's and `theta0_bar`, `c0` are the limit's.
pub fn contact_bound(
    member: &ContactSystem,
    limit: &ContactSystem,
    curve: &Curve,
    u: f64,
    r: f64,
    substeps: usize,
) -> Result<ContactBound> {
    if member.dim() != curve.dim() || limit.dim() != curve.dim() {
        return precondition("curve dimension does not match the systems");
    }
    let t = curve.t_final();
    let k = member.k();
    let growth = limit.growth();
    let ekt = (k * t).exp();
    let f_value = (growth.theta0_bar(r / t) + 2.0 * growth.c0) * ekt;
    let c_t = t * k * ekt + 1.0;

    let (m, l0) = (member.clone(), limit.clone());
    let difference = ContactSystem::new(
        "difference",
        curve.dim(),
        move |x, _, v| (m.value(x, 0.0, v) - l0.value(x, 0.0, v)).abs(),
        Growth::quadratic(0.0, 0.0, 0.5, 0.5),
    );
    let correction = integrate_cost(&difference, curve, 0.0, substeps)?.final_value();
    let max_abs = integrate_cost(member, curve, u, substeps)?.max_abs();
    let bound = t * f_value + c_t * u.abs() + ekt * correction;
    if max_abs > bound + BOUND_SLACK {
        return Err(Error::BoundViolation { observed: max_abs, bound });
    }
    Ok(ContactBound {
        bound,
        max_abs,
        correction,
        f_value,
        c_t,
    })
}

/// Outcome of a vanishing-contact run. Tables are indexed
/// `[lambda][time][point]` (`baseline` drops the first index).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub family: String,
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub baseline: Vec<Vec<f64>>,
    pub values: Vec<Vec<Vec<f64>>>,
    /// Per lambda, the largest `|u^lambda - u|` over the grid.
    pub gaps: Vec<f64>,
    /// Per lambda, the largest `t * M` over the grid, where `M` bounds
    /// `|u^lambda|` along both the limit minimizer and the member's own.
    pub trajectory_scale: Vec<f64>,
    /// Per lambda, whether every trajectory envelope held.
    pub bound_checks: Vec<bool>,
    /// Per lambda, whether every gap obeyed
    /// `t K M + t sup|L_lambda - L_0| + 1e-3`.
    pub skeleton_checks: Vec<bool>,
    /// Per lambda, whether every argmin lay in its search ball and beat `y = x`.
    pub localized: Vec<bool>,
    pub monotone: bool,
    pub gap_tol: f64,
    pub final_within_tol: bool,
}

/// Noise tolerance of the monotonicity flag.
pub const MONOTONE_TOL: f64 = 1e-6;
/// Discretization slack of the skeleton check.
pub const SKELETON_SLACK: f64 = 1e-3;

struct Baseline {
    u: f64,
    y_star: Vec<f64>,
    u_start: f64,
    curve: Curve,
}

struct MemberPoint {
    u: f64,
    gap: f64,
    scale: f64,
    bound_ok: bool,
    skeleton_ok: bool,
    localized: bool,
}

/// Compares `u^lambda` with the classical value of the family's limit on
/// `times x points`, for every lambda in descending order.
pub fn run_vanishing(
    family: &LambdaFamily,
    datum: &InitialDatum,
    lambdas: &[f64],
    times: &[f64],
    points: &[Vec<f64>],
    search: &SearchParams,
    gap_tol: f64,
) -> Result<ConvergenceReport> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return precondition("lambdas must be positive and strictly decreasing");
    }
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) || points.is_empty() {
        return precondition("need positive times and at least one point");
    }
    let limit = family.limit();
    let grid: Vec<(usize, usize)> = (0..times.len()).flat_map(|i| (0..points.len()).map(move |j| (i, j))).collect();

    let baseline: Vec<Baseline> = grid
        .par_iter()
        .map(|&(i, j)| {
            let v = lax_oleinik_classical(limit, datum, times[i], &points[j], search)?;
            Ok(Baseline {
                u: v.u,
                u_start: datum.eval(&v.y_star),
                y_star: v.y_star,
                curve: v.best.minimizer,
            })
        })
        .collect::<Result<_>>()?;

    let members: Vec<ContactSystem> = lambdas.iter().map(|&l| family.member(l)).collect();
    let tasks: Vec<(usize, usize)> = (0..lambdas.len()).flat_map(|l| (0..grid.len()).map(move |g| (l, g))).collect();
    let results: Vec<MemberPoint> = tasks
        .par_iter()
        .map(|&(l, g)| {
            let (i, j) = grid[g];
            let (t, x) = (times[i], &points[j]);
            let member = &members[l];
            let v = solve_value(member, datum, t, x, search)?;
            let base = &baseline[g];
            let r = distance(&base.y_star, x);
            let (bound_ok, m) = match contact_bound(member, limit, &base.curve, base.u_start, r, search.optimizer.substeps) {
                Ok(b) => (true, b.max_abs),
                Err(Error::BoundViolation { observed, .. }) => (false, observed),
                Err(e) => return Err(e),
            };
            let gap = (v.u - base.u).abs();
            // One side of the gap runs along the limit minimizer, the other
            // along the member's own minimizer.
            let m = m.max(v.best.trajectory.max_abs());
            let sup = sup_along(member, limit, &base.curve).max(sup_along(member, limit, &v.best.minimizer));
            let k = member.k();
            Ok(MemberPoint {
                u: v.u,
                gap,
                scale: t * m,
                bound_ok,
                skeleton_ok: gap <= t * k * m + t * sup + SKELETON_SLACK,
                localized: is_localized(&v, x),
            })
        })
        .collect::<Result<_>>()?;

    let n_grid = grid.len();
    let mut values = vec![vec![vec![0.0; points.len()]; times.len()]; lambdas.len()];
    let mut gaps = vec![0.0_f64; lambdas.len()];
    let mut trajectory_scale = vec![0.0_f64; lambdas.len()];
    let mut bound_checks = vec![true; lambdas.len()];
    let mut skeleton_checks = vec![true; lambdas.len()];
    let mut localized = vec![true; lambdas.len()];
    for (idx, p) in results.iter().enumerate() {
        let (l, g) = (idx / n_grid, idx % n_grid);
        let (i, j) = grid[g];
        values[l][i][j] = p.u;
        gaps[l] = gaps[l].max(p.gap);
        trajectory_scale[l] = trajectory_scale[l].max(p.scale);
        bound_checks[l] &= p.bound_ok;
        skeleton_checks[l] &= p.skeleton_ok;
        localized[l] &= p.localized;
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL);
    if !monotone {
        log::warn!("{}: sup-gaps are not monotone along decreasing lambda: {gaps:?}", family.name());
    }
    let mut base_table = vec![vec![0.0; points.len()]; times.len()];
    for (g, b) in baseline.iter().enumerate() {
        let (i, j) = grid[g];
        base_table[i][j] = b.u;
    }
    let final_gap = *gaps.last().expect("lambdas are non-empty");
    Ok(ConvergenceReport {
        family: family.name().to_string(),
        lambdas: lambdas.to_vec(),
        times: times.to_vec(),
        points: points.to_vec(),
        baseline: base_table,
        values,
        gaps,
        trajectory_scale,
        bound_checks,
        skeleton_checks,
        localized,
        monotone,
        gap_tol,
        final_within_tol: final_gap <= gap_tol,
    })
}
