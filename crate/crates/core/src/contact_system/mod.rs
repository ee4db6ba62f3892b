//! Contact Lagrangians `L(x, u, v)` and Hamiltonians `H(x, u, p)`.
//!
//! A [`ContactSystem`] bundles the Lagrangian evaluator with optional analytic
//! derivatives and the user-declared growth metadata (`K`, `c0`, `theta0`,
//! `theta0_bar`) that parameterizes every downstream estimate. Derivatives
//! that are not supplied fall back to central finite differences.
//!
//! Both system types are immutable after construction and cheap to clone
//! (evaluators live behind `Arc`), so they can be shared across rayon workers.

mod builtin;
mod conditions;
mod legendre;

use std::fmt;
use std::sync::Arc;

pub use builtin::{builtin_hamiltonian, builtin_system, BUILTIN_SYSTEMS};
pub use conditions::{verify_conditions, ConditionReport, SampleBox};
pub use legendre::{
    legendre_to_hamiltonian, legendre_to_lagrangian, LegendreParams, LegendrePoint,
};

use crate::numeric::golden_section;

/// Spatial dimensions supported by the solvers.
pub const MAX_DIM: usize = 2;

/// Default central-difference step for derivative fallbacks.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Upper end of the grid used for the numeric convex conjugate of `theta0`.
pub const CONJUGATE_R_MAX: f64 = 1e3;

/// Scalar evaluator `(x, u, v) -> f64`.
pub type ScalarField = Arc<dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// Vector or matrix evaluator writing into its last argument.
pub type VectorField = Arc<dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync>;
/// Growth function `r -> theta(r)` on `[0, inf)`.
pub type GrowthFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Declared growth metadata of a Lagrangian.
#[derive(Clone)]
pub struct Growth {
    /// Uniform bound on `|L_u|`.
    pub k: f64,
    /// Constant of the coercive lower bound.
    pub c0: f64,
    pub theta0: GrowthFn,
    pub theta0_bar: GrowthFn,
    /// Closed-form conjugate of `theta0`; overrides the numeric one.
    pub theta0_conjugate: Option<GrowthFn>,
}

impl Growth {
    pub fn new(
        k: f64,
        c0: f64,
        theta0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        theta0_bar: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            k,
            c0,
            theta0: Arc::new(theta0),
            theta0_bar: Arc::new(theta0_bar),
            theta0_conjugate: None,
        }
    }

    /// `theta0(r) = a r^2`, `theta0_bar(r) = b r^2`, with the closed-form conjugate.
    pub fn quadratic(k: f64, c0: f64, a: f64, b: f64) -> Self {
        Self::new(k, c0, move |r| a * r * r, move |r| b * r * r)
            .with_conjugate(move |s| if s <= 0.0 { 0.0 } else { s * s / (4.0 * a) })
    }

    pub fn with_conjugate(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.theta0_conjugate = Some(Arc::new(f));
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn theta0(&self, r: f64) -> f64 {
        (self.theta0)(r)
    }

    pub fn theta0_bar(&self, r: f64) -> f64 {
        (self.theta0_bar)(r)
    }

    /// The constant `C = theta0_bar(0)`.
    pub fn c_const(&self) -> f64 {
        (self.theta0_bar)(0.0)
    }

    /// `theta0*(s) = sup_{r >= 0} (s r - theta0(r))`.
    pub fn theta0_conjugate(&self, s: f64) -> f64 {
        match &self.theta0_conjugate {
            Some(f) => f(s),
            None => convex_conjugate(&*self.theta0, s, CONJUGATE_R_MAX),
        }
    }
}

impl fmt::Debug for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Growth")
            .field("k", &self.k)
            .field("c0", &self.c0)
            .field("c_const", &self.c_const())
            .field("closed_form_conjugate", &self.theta0_conjugate.is_some())
            .finish()
    }
}

/// Numeric conjugate `sup_{r in [0, r_max]} (s r - theta(r))`: grid search
/// followed by golden-section refinement of the best cell.
pub fn convex_conjugate(theta: &dyn Fn(f64) -> f64, s: f64, r_max: f64) -> f64 {
    const CELLS: usize = 8192;
    let h = r_max / CELLS as f64;
    let g = |r: f64| s * r - theta(r);
    let (mut best_i, mut best) = (0usize, g(0.0));
    for i in 1..=CELLS {
        let v = g(i as f64 * h);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = (best_i as f64 - 1.0).max(0.0) * h;
    let hi = ((best_i + 1) as f64 * h).min(r_max);
    let refined = golden_section::<()>(|r| Ok(-g(r)), lo, hi, 1e-12 * (1.0 + hi), 200)
        .map(|(_, v)| -v)
        .unwrap_or(best);
    best.max(refined)
}

/// A contact Lagrangian `L(x, u, v)` on `R^n x R x R^n`.
#[derive(Clone)]
pub struct ContactSystem {
    name: String,
    dim: usize,
    lagrangian: ScalarField,
    l_x: Option<VectorField>,
    l_u: Option<ScalarField>,
    l_v: Option<VectorField>,
    l_vv: Option<VectorField>,
    growth: Growth,
    fd_step: f64,
}

impl ContactSystem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        lagrangian: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
        growth: Growth,
    ) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1 or 2, got {dim}");
        Self {
            name: name.into(),
            dim,
            lagrangian: Arc::new(lagrangian),
            l_x: None,
            l_u: None,
            l_v: None,
            l_vv: None,
            growth,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_l_x(
        mut self,
        f: impl Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.l_x = Some(Arc::new(f));
        self
    }

    pub fn with_l_u(mut self, f: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.l_u = Some(Arc::new(f));
        self
    }

    pub fn with_l_v(
        mut self,
        f: impl Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.l_v = Some(Arc::new(f));
        self
    }

    /// `f` writes the row-major `dim x dim` Hessian in `v`.
    pub fn with_l_vv(
        mut self,
        f: impl Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.l_vv = Some(Arc::new(f));
        self
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = growth;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    /// Same Lagrangian with every derivative evaluated by finite differences.
    pub fn without_derivatives(&self) -> Self {
        Self {
            l_x: None,
            l_u: None,
            l_v: None,
            l_vv: None,
            ..self.clone()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth(&self) -> &Growth {
        &self.growth
    }

    pub fn k(&self) -> f64 {
        self.growth.k
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.l_x.is_some() && self.l_u.is_some() && self.l_v.is_some()
    }

    #[inline]
    pub fn value(&self, x: &[f64], u: f64, v: &[f64]) -> f64 {
        (self.lagrangian)(x, u, v)
    }

    pub fn l_u(&self, x: &[f64], u: f64, v: &[f64]) -> f64 {
        match &self.l_u {
            Some(f) => f(x, u, v),
            None => {
                let h = self.fd_step;
                (self.value(x, u + h, v) - self.value(x, u - h, v)) / (2.0 * h)
            }
        }
    }

    pub fn l_x(&self, x: &[f64], u: f64, v: &[f64], out: &mut [f64]) {
        match &self.l_x {
            Some(f) => f(x, u, v, out),
            None => {
                let h = self.fd_step;
                let mut xs = [0.0; MAX_DIM];
                xs[..self.dim].copy_from_slice(x);
                for i in 0..self.dim {
                    xs[i] = x[i] + h;
                    let plus = self.value(&xs[..self.dim], u, v);
                    xs[i] = x[i] - h;
                    let minus = self.value(&xs[..self.dim], u, v);
                    xs[i] = x[i];
                    out[i] = (plus - minus) / (2.0 * h);
                }
            }
        }
    }

    pub fn l_v(&self, x: &[f64], u: f64, v: &[f64], out: &mut [f64]) {
        match &self.l_v {
            Some(f) => f(x, u, v, out),
            None => {
                let h = self.fd_step;
                let mut vs = [0.0; MAX_DIM];
                vs[..self.dim].copy_from_slice(v);
                for i in 0..self.dim {
                    vs[i] = v[i] + h;
                    let plus = self.value(x, u, &vs[..self.dim]);
                    vs[i] = v[i] - h;
                    let minus = self.value(x, u, &vs[..self.dim]);
                    vs[i] = v[i];
                    out[i] = (plus - minus) / (2.0 * h);
                }
            }
        }
    }

    /// Hessian in `v`, row-major. Without an analytic version it is the
    /// central difference of [`Self::l_v`], symmetrized.
    pub fn l_vv(&self, x: &[f64], u: f64, v: &[f64], out: &mut [f64]) {
        if let Some(f) = &self.l_vv {
            f(x, u, v, out);
            return;
        }
        let n = self.dim;
        let h = if self.l_v.is_some() { self.fd_step } else { 10.0 * self.fd_step };
        let mut vs = [0.0; MAX_DIM];
        vs[..n].copy_from_slice(v);
        let (mut gp, mut gm) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        for j in 0..n {
            vs[j] = v[j] + h;
            self.l_v(x, u, &vs[..n], &mut gp[..n]);
            vs[j] = v[j] - h;
            self.l_v(x, u, &vs[..n], &mut gm[..n]);
            vs[j] = v[j];
            for i in 0..n {
                out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        if n == 2 {
            let off = 0.5 * (out[1] + out[2]);
            out[1] = off;
            out[2] = off;
        }
    }
}

impl fmt::Debug for ContactSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_derivatives", &self.has_analytic_derivatives())
            .field("growth", &self.growth)
            .finish()
    }
}

/// A contact Hamiltonian `H(x, u, p)`.
#[derive(Clone)]
pub struct HamiltonianSystem {
    name: String,
    dim: usize,
    hamiltonian: ScalarField,
    h_x: Option<VectorField>,
    h_u: Option<ScalarField>,
    h_p: Option<VectorField>,
    h_pp: Option<VectorField>,
    k: f64,
    fd_step: f64,
}

impl HamiltonianSystem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        hamiltonian: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
        k: f64,
    ) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1 or 2, got {dim}");
        Self {
            name: name.into(),
            dim,
            hamiltonian: Arc::new(hamiltonian),
            h_x: None,
            h_u: None,
            h_p: None,
            h_pp: None,
            k,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn with_h_x(
        mut self,
        f: impl Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.h_x = Some(Arc::new(f));
        self
    }

    pub fn with_h_u(mut self, f: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.h_u = Some(Arc::new(f));
        self
    }

    pub fn with_h_p(
        mut self,
        f: impl Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.h_p = Some(Arc::new(f));
        self
    }

    pub fn with_h_pp(
        mut self,
        f: impl Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.h_pp = Some(Arc::new(f));
        self
    }

    /// The Legendre dual of a Lagrangian. Values come from
    /// [`legendre_to_hamiltonian`]; derivatives use the envelope identities
    /// `H_p = v*`, `H_x = -L_x(v*)`, `H_u = -L_u(v*)`, `H_pp = L_vv(v*)^-1`,
    /// so no finite differences of the numeric transform are taken.
    ///
    /// Evaluations where the inner maximization fails return NaN.
    pub fn dual_of(system: &ContactSystem) -> Self {
        let dim = system.dim();
        let k = system.k();
        let sys = Arc::new(system.clone());
        let params = LegendreParams::default();
        let maximizer = {
            let sys = Arc::clone(&sys);
            move |x: &[f64], u: f64, p: &[f64]| legendre_to_hamiltonian(&sys, x, u, p, &params).ok()
        };
        let maximizer = Arc::new(maximizer);
        let (m1, m2, m3, m4) = (
            Arc::clone(&maximizer),
            Arc::clone(&maximizer),
            Arc::clone(&maximizer),
            Arc::clone(&maximizer),
        );
        let (s2, s3, s4) = (Arc::clone(&sys), Arc::clone(&sys), Arc::clone(&sys));
        Self::new(
            format!("dual({})", system.name()),
            dim,
            move |x, u, p| maximizer(x, u, p).map_or(f64::NAN, |m| m.value),
            k,
        )
        .with_h_p(move |x, u, p, out| match m1(x, u, p) {
            Some(m) => out.copy_from_slice(&m.maximizer),
            None => out.fill(f64::NAN),
        })
        .with_h_x(move |x, u, p, out| match m2(x, u, p) {
            Some(m) => {
                s2.l_x(x, u, &m.maximizer, out);
                out.iter_mut().for_each(|o| *o = -*o);
            }
            None => out.fill(f64::NAN),
        })
        .with_h_u(move |x, u, p| m3(x, u, p).map_or(f64::NAN, |m| -s3.l_u(x, u, &m.maximizer)))
        .with_h_pp(move |x, u, p, out| match m4(x, u, p) {
            Some(m) => {
                let mut hess = [0.0; MAX_DIM * MAX_DIM];
                s4.l_vv(x, u, &m.maximizer, &mut hess[..dim * dim]);
                invert_small(&hess[..dim * dim], dim, out);
            }
            None => out.fill(f64::NAN),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    #[inline]
    pub fn value(&self, x: &[f64], u: f64, p: &[f64]) -> f64 {
        (self.hamiltonian)(x, u, p)
    }

    pub fn h_u(&self, x: &[f64], u: f64, p: &[f64]) -> f64 {
        match &self.h_u {
            Some(f) => f(x, u, p),
            None => {
                let h = self.fd_step;
                (self.value(x, u + h, p) - self.value(x, u - h, p)) / (2.0 * h)
            }
        }
    }

    pub fn h_x(&self, x: &[f64], u: f64, p: &[f64], out: &mut [f64]) {
        match &self.h_x {
            Some(f) => f(x, u, p, out),
            None => {
                let h = self.fd_step;
                let mut xs = [0.0; MAX_DIM];
                xs[..self.dim].copy_from_slice(x);
                for i in 0..self.dim {
                    xs[i] = x[i] + h;
                    let plus = self.value(&xs[..self.dim], u, p);
                    xs[i] = x[i] - h;
                    let minus = self.value(&xs[..self.dim], u, p);
                    xs[i] = x[i];
                    out[i] = (plus - minus) / (2.0 * h);
                }
            }
        }
    }

    pub fn h_p(&self, x: &[f64], u: f64, p: &[f64], out: &mut [f64]) {
        match &self.h_p {
            Some(f) => f(x, u, p, out),
            None => {
                let h = self.fd_step;
                let mut ps = [0.0; MAX_DIM];
                ps[..self.dim].copy_from_slice(p);
                for i in 0..self.dim {
                    ps[i] = p[i] + h;
                    let plus = self.value(x, u, &ps[..self.dim]);
                    ps[i] = p[i] - h;
                    let minus = self.value(x, u, &ps[..self.dim]);
                    ps[i] = p[i];
                    out[i] = (plus - minus) / (2.0 * h);
                }
            }
        }
    }

    pub fn h_pp(&self, x: &[f64], u: f64, p: &[f64], out: &mut [f64]) {
        if let Some(f) = &self.h_pp {
            f(x, u, p, out);
            return;
        }
        let n = self.dim;
        let h = if self.h_p.is_some() { self.fd_step } else { 10.0 * self.fd_step };
        let mut ps = [0.0; MAX_DIM];
        ps[..n].copy_from_slice(p);
        let (mut gp, mut gm) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        for j in 0..n {
            ps[j] = p[j] + h;
            self.h_p(x, u, &ps[..n], &mut gp[..n]);
            ps[j] = p[j] - h;
            self.h_p(x, u, &ps[..n], &mut gm[..n]);
            ps[j] = p[j];
            for i in 0..n {
                out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        if n == 2 {
            let off = 0.5 * (out[1] + out[2]);
            out[1] = off;
            out[2] = off;
        }
    }
}

impl fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("k", &self.k)
            .finish()
    }
}

fn invert_small(m: &[f64], dim: usize, out: &mut [f64]) {
    match dim {
        1 => out[0] = 1.0 / m[0],
        _ => {
            let det = m[0] * m[3] - m[1] * m[2];
            out[0] = m[3] / det;
            out[1] = -m[1] / det;
            out[2] = -m[2] / det;
            out[3] = m[0] / det;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_conjugate_matches_closed_forms() {
        let quad = |r: f64| r * r / 2.0;
        for s in [0.0, 0.5, 2.0, 7.3] {
            let got = convex_conjugate(&quad, s, CONJUGATE_R_MAX);
            assert!((got - s * s / 2.0).abs() < 1e-9, "s={s}: {got}");
        }
        let quartic = |r: f64| r.powi(4) / 4.0;
        for s in [0.3, 1.0, 3.0] {
            let got = convex_conjugate(&quartic, s, CONJUGATE_R_MAX);
            let exact = 0.75 * s.powf(4.0 / 3.0);
            assert!((got - exact).abs() < 1e-9, "s={s}: {got} vs {exact}");
        }
    }

    #[test]
    fn closed_form_conjugate_overrides_numeric() {
        let g = Growth::quadratic(0.0, 0.0, 0.5, 0.5).with_conjugate(|_| 42.0);
        assert_eq!(g.theta0_conjugate(3.0), 42.0);
        let numeric = Growth::new(0.0, 0.0, |r| r * r / 4.0, |r| r * r / 2.0);
        assert!((numeric.theta0_conjugate(2.0) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_matches_analytic_derivatives() {
        let sys = builtin_system("trig-contact", 2).unwrap();
        let fd = sys.without_derivatives();
        let h = sys.fd_step();
        let tol = 100.0 * h * h;
        let pts = [
            ([0.3, -1.2], 0.7, [1.1, -0.4]),
            ([2.0, 0.5], -1.5, [-2.0, 0.9]),
            ([-0.8, 3.0], 0.0, [0.0, 0.2]),
        ];
        for (x, u, v) in pts {
            assert!((sys.l_u(&x, u, &v) - fd.l_u(&x, u, &v)).abs() < tol);
            let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
            sys.l_x(&x, u, &v, &mut a);
            fd.l_x(&x, u, &v, &mut b);
            assert!((a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol);
            sys.l_v(&x, u, &v, &mut a);
            fd.l_v(&x, u, &v, &mut b);
            assert!((a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol);
        }
    }

    #[test]
    fn fd_hessian_of_analytic_gradient() {
        let sys = builtin_system("quartic", 1).unwrap();
        let partial = ContactSystem::new("q", 1, |_, _, v| v[0].powi(4) / 4.0, sys.growth().clone())
            .with_l_v(|_, _, v, out| out[0] = v[0].powi(3));
        let mut out = [0.0];
        partial.l_vv(&[0.0], 0.0, &[1.5], &mut out);
        assert!((out[0] - 3.0 * 1.5 * 1.5).abs() < 1e-8);
    }

    #[test]
    fn dual_hamiltonian_of_quadratic() {
        let sys = builtin_system("discounted-quadratic(0.3)", 1).unwrap();
        let hs = HamiltonianSystem::dual_of(&sys);
        let (x, u, p) = ([0.4], 2.0, [1.7]);
        assert!((hs.value(&x, u, &p) - (0.3 * 2.0 + 1.7 * 1.7 / 2.0)).abs() < 1e-9);
        let mut out = [0.0];
        hs.h_p(&x, u, &p, &mut out);
        assert!((out[0] - 1.7).abs() < 1e-9);
        assert!((hs.h_u(&x, u, &p) - 0.3).abs() < 1e-12);
        hs.h_pp(&x, u, &p, &mut out);
        assert!((out[0] - 1.0).abs() < 1e-12);
    }
}
