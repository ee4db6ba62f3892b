//! Integration of the cost equation `u'(s) = L(xi(s), u(s), xi'(s))` along
//! piecewise-linear curves.
//!
//! Velocities are constant on each segment, so the integrand is smooth
//! inside a segment and every RK4 substep stays within one segment.

use serde::Serialize;

use crate::contact_system::{ContactSystem, MAX_DIM};
use crate::error::{precondition, Error, Result};

/// Values beyond this magnitude are reported as [`Error::Overflow`].
pub const OVERFLOW_LIMIT: f64 = 1e15;

/// Default RK4 substeps per curve segment.
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Tolerance of the ordering check in [`cost_comparison`].
pub const ORDERING_TOL: f64 = 1e-9;

/// A path `[0, t_final] -> R^n` given by its values on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    t_final: f64,
    dim: usize,
    /// Row-major `(segments + 1) x dim`.
    nodes: Vec<f64>,
}

impl Curve {
    pub fn new(t_final: f64, dim: usize, nodes: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return precondition(format!("dimension must be 1 or 2, got {dim}"));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return precondition(format!("curve duration must be positive, got {t_final}"));
        }
        if nodes.len() % dim != 0 || nodes.len() / dim < 2 {
            return precondition("a curve needs at least two nodes");
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return precondition("curve nodes must be finite");
        }
        Ok(Self { t_final, dim, nodes })
    }

    /// The segment from `x` to `y` traversed at constant speed.
    pub fn straight(t_final: f64, x: &[f64], y: &[f64], segments: usize) -> Result<Self> {
        if x.len() != y.len() {
            return precondition("endpoints have different dimensions");
        }
        if segments == 0 {
            return precondition("a curve needs at least one segment");
        }
        let dim = x.len();
        let mut nodes = Vec::with_capacity((segments + 1) * dim);
        for k in 0..=segments {
            let theta = k as f64 / segments as f64;
            for i in 0..dim {
                nodes.push(if k == segments { y[i] } else { x[i] + theta * (y[i] - x[i]) });
            }
        }
        Self::new(t_final, dim, nodes)
    }

    /// Samples `f(s)` at the grid times.
    pub fn from_fn(
        t_final: f64,
        dim: usize,
        segments: usize,
        mut f: impl FnMut(f64, &mut [f64]),
    ) -> Result<Self> {
        if segments == 0 {
            return precondition("a curve needs at least one segment");
        }
        let mut nodes = vec![0.0; (segments + 1) * dim];
        for (k, node) in nodes.chunks_mut(dim).enumerate() {
            f(t_final * k as f64 / segments as f64, node);
        }
        Self::new(t_final, dim, nodes)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() / self.dim - 1
    }

    /// Duration of one segment.
    pub fn step(&self) -> f64 {
        self.t_final / self.segments() as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn start(&self) -> &[f64] {
        self.node(0)
    }

    pub fn end(&self) -> &[f64] {
        self.node(self.segments())
    }

    pub fn velocity(&self, k: usize, out: &mut [f64]) {
        self.view().velocity(k, out);
    }

    /// Position at time `s` (clamped to `[0, t_final]`).
    pub fn position(&self, s: f64, out: &mut [f64]) {
        let n = self.segments();
        let tau = (s / self.step()).clamp(0.0, n as f64);
        let k = (tau.floor() as usize).min(n - 1);
        let frac = tau - k as f64;
        for i in 0..self.dim {
            let a = self.nodes[k * self.dim + i];
            let b = self.nodes[(k + 1) * self.dim + i];
            out[i] = a + frac * (b - a);
        }
    }

    /// The sub-curve on nodes `first..=last`, re-based to start at time 0.
    pub fn restrict(&self, first: usize, last: usize) -> Result<Self> {
        if first >= last || last > self.segments() {
            return precondition(format!("invalid node range {first}..={last}"));
        }
        Self::new(
            self.step() * (last - first) as f64,
            self.dim,
            self.nodes[first * self.dim..(last + 1) * self.dim].to_vec(),
        )
    }

    pub(crate) fn view(&self) -> PathView<'_> {
        PathView {
            nodes: &self.nodes,
            dim: self.dim,
            dt: self.step(),
        }
    }
}

/// Borrowed node array with its time step; lets the optimizer integrate
/// perturbed node sets without building a [`Curve`].
#[derive(Clone, Copy)]
pub(crate) struct PathView<'a> {
    pub nodes: &'a [f64],
    pub dim: usize,
    pub dt: f64,
}

impl PathView<'_> {
    #[inline]
    pub fn velocity(&self, k: usize, out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            out[i] = (self.nodes[(k + 1) * d + i] - self.nodes[k * d + i]) / self.dt;
        }
    }
}

/// Samples of `u_xi` at every substep time of a curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostTrajectory {
    pub u0: f64,
    pub samples: Vec<f64>,
    pub substeps_per_segment: usize,
    pub segments: usize,
    pub t_final: f64,
}

impl CostTrajectory {
    pub fn final_value(&self) -> f64 {
        *self.samples.last().expect("trajectory has at least one sample")
    }

    /// Spacing of the samples.
    pub fn step(&self) -> f64 {
        self.t_final / (self.segments * self.substeps_per_segment) as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t_final * j as f64 / (self.segments * self.substeps_per_segment) as f64
    }

    /// Value at curve node `k`.
    pub fn at_node(&self, k: usize) -> f64 {
        self.samples[k * self.substeps_per_segment]
    }

    /// Value at time `s`, linearly interpolated between samples.
    pub fn at_time(&self, s: f64) -> f64 {
        let m = self.samples.len() - 1;
        let tau = (s / self.step()).clamp(0.0, m as f64);
        let j = (tau.floor() as usize).min(m.saturating_sub(1));
        let frac = tau - j as f64;
        if m == 0 {
            return self.samples[0];
        }
        self.samples[j] + frac * (self.samples[j + 1] - self.samples[j])
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[inline]
pub(crate) fn check_finite(u: f64, at: f64) -> Result<f64> {
    if u.is_finite() && u.abs() <= OVERFLOW_LIMIT {
        Ok(u)
    } else {
        Err(Error::Overflow { at, value: u })
    }
}

/// Advances `u` across segment `k` with `substeps` RK4 steps of signed
/// length `direction * dt / substeps`, calling `sink` after each step.
#[inline]
pub(crate) fn advance_segment(
    system: &ContactSystem,
    path: PathView<'_>,
    k: usize,
    mut u: f64,
    substeps: usize,
    backward: bool,
    mut sink: impl FnMut(f64),
) -> Result<f64> {
    let d = path.dim;
    let mut vel = [0.0; MAX_DIM];
    path.velocity(k, &mut vel);
    let vel = &vel[..d];
    let start = &path.nodes[k * d..(k + 1) * d];
    let h = path.dt / substeps as f64;
    let signed = if backward { -h } else { h };
    let mut pos = [0.0; MAX_DIM];
    let at = |tau: f64, pos: &mut [f64; MAX_DIM]| {
        for i in 0..d {
            pos[i] = start[i] + tau * vel[i];
        }
    };
    for j in 0..substeps {
        // Local time at the beginning of this substep.
        let tau0 = if backward { path.dt - j as f64 * h } else { j as f64 * h };
        at(tau0, &mut pos);
        let k1 = system.value(&pos[..d], u, vel);
        at(tau0 + 0.5 * signed, &mut pos);
        let k2 = system.value(&pos[..d], u + 0.5 * signed * k1, vel);
        let k3 = system.value(&pos[..d], u + 0.5 * signed * k2, vel);
        at(tau0 + signed, &mut pos);
        let k4 = system.value(&pos[..d], u + signed * k3, vel);
        u += signed / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let s = k as f64 * path.dt + tau0 + signed;
        u = check_finite(u, s)?;
        sink(u);
    }
    Ok(u)
}

/// Forward integration of the cost equation from `u_xi(0) = u0`.
pub fn integrate_cost(
    system: &ContactSystem,
    curve: &Curve,
    u0: f64,
    substeps_per_segment: usize,
) -> Result<CostTrajectory> {
    validate(system, curve, u0, substeps_per_segment)?;
    let view = curve.view();
    let n = curve.segments();
    let mut samples = Vec::with_capacity(n * substeps_per_segment + 1);
    samples.push(u0);
    let mut u = u0;
    for k in 0..n {
        u = advance_segment(system, view, k, u, substeps_per_segment, false, |v| samples.push(v))?;
    }
    Ok(CostTrajectory {
        u0,
        samples,
        substeps_per_segment,
        segments: n,
        t_final: curve.t_final(),
    })
}

/// Diagnostic: integrates the same equation in reversed time from the
/// terminal condition `u_xi(t) = u_terminal`. Samples are returned in
/// forward time order, so `samples.last() == u_terminal` and `u0` holds the
/// recovered initial value.
pub fn integrate_cost_backward(
    system: &ContactSystem,
    curve: &Curve,
    u_terminal: f64,
    substeps_per_segment: usize,
) -> Result<CostTrajectory> {
    validate(system, curve, u_terminal, substeps_per_segment)?;
    let view = curve.view();
    let n = curve.segments();
    let mut reversed = Vec::with_capacity(n * substeps_per_segment + 1);
    reversed.push(u_terminal);
    let mut u = u_terminal;
    for k in (0..n).rev() {
        u = advance_segment(system, view, k, u, substeps_per_segment, true, |v| reversed.push(v))?;
    }
    reversed.reverse();
    Ok(CostTrajectory {
        u0: reversed[0],
        samples: reversed,
        substeps_per_segment,
        segments: n,
        t_final: curve.t_final(),
    })
}

fn validate(system: &ContactSystem, curve: &Curve, u0: f64, substeps: usize) -> Result<()> {
    if system.dim() != curve.dim() {
        return precondition(format!(
            "system dimension {} does not match curve dimension {}",
            system.dim(),
            curve.dim()
        ));
    }
    if !u0.is_finite() {
        return precondition("initial cost must be finite");
    }
    if substeps == 0 {
        return precondition("substeps per segment must be positive");
    }
    Ok(())
}

/// Trajectories from two ordered initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct CostOrdering {
    pub low: CostTrajectory,
    pub high: CostTrajectory,
}

impl CostOrdering {
    /// `high - low` at each sample.
    pub fn gaps(&self) -> Vec<f64> {
        self.high.samples.iter().zip(&self.low.samples).map(|(h, l)| h - l).collect()
    }
}

/// Integrates from both initial values and checks that the order is
/// preserved at every sample.
pub fn cost_comparison(
    system: &ContactSystem,
    curve: &Curve,
    u0_low: f64,
    u0_high: f64,
    substeps_per_segment: usize,
) -> Result<CostOrdering> {
    if u0_low > u0_high {
        return precondition(format!("u0_low = {u0_low} exceeds u0_high = {u0_high}"));
    }
    let low = integrate_cost(system, curve, u0_low, substeps_per_segment)?;
    let high = integrate_cost(system, curve, u0_high, substeps_per_segment)?;
    for (j, (l, h)) in low.samples.iter().zip(&high.samples).enumerate() {
        if l - h > ORDERING_TOL {
            return Err(Error::MonotonicityViolation {
                at: low.time(j),
                low: *l,
                high: *h,
            });
        }
    }
    Ok(CostOrdering { low, high })
}
