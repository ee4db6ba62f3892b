//! Named systems addressable from configuration files.

use super::{ContactSystem, Growth, HamiltonianSystem};
use crate::error::{Error, Result};
use crate::numeric::parse_call;

/// Identifiers accepted by [`builtin_system`]; `discounted-quadratic` takes
/// the discount `lambda` as argument.
pub const BUILTIN_SYSTEMS: [&str; 4] =
    ["quadratic", "discounted-quadratic(lambda)", "quartic", "trig-contact"];

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

fn copy_into(src: &[f64], out: &mut [f64]) {
    out.copy_from_slice(src);
}

fn identity(dim: usize, scale: f64, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..dim {
        out[i * dim + i] = scale;
    }
}

/// Quadratic Lagrangian `-lambda u + |v|^2 / 2` (`lambda = 0` gives the
/// plain kinetic energy).
pub fn discounted_quadratic(lambda: f64, dim: usize) -> ContactSystem {
    let name = if lambda == 0.0 {
        "quadratic".to_string()
    } else {
        format!("discounted-quadratic({lambda})")
    };
    ContactSystem::new(
        name,
        dim,
        move |_, u, v| -lambda * u + 0.5 * sq(v),
        Growth::quadratic(lambda.abs(), 0.0, 0.5, 0.5),
    )
    .with_l_x(|_, _, _, out| out.fill(0.0))
    .with_l_u(move |_, _, _| -lambda)
    .with_l_v(|_, _, v, out| copy_into(v, out))
    .with_l_vv(move |_, _, _, out| identity(dim, 1.0, out))
}

/// `|v|^4 / 4`. Degenerate (`L_vv = 0`) at `v = 0` only.
pub fn quartic(dim: usize) -> ContactSystem {
    ContactSystem::new(
        "quartic",
        dim,
        |_, _, v| 0.25 * sq(v) * sq(v),
        Growth::new(0.0, 0.0, |r| 0.25 * r.powi(4), |r| 0.25 * r.powi(4))
            .with_conjugate(|s| if s <= 0.0 { 0.0 } else { 0.75 * s.powf(4.0 / 3.0) }),
    )
    .with_l_x(|_, _, _, out| out.fill(0.0))
    .with_l_u(|_, _, _| 0.0)
    .with_l_v(|_, _, v, out| {
        let s = sq(v);
        for (o, c) in out.iter_mut().zip(v) {
            *o = s * c;
        }
    })
    .with_l_vv(move |_, _, v, out| {
        let s = sq(v);
        for i in 0..dim {
            for j in 0..dim {
                out[i * dim + j] = 2.0 * v[i] * v[j] + if i == j { s } else { 0.0 };
            }
        }
    })
}

/// `|v|^2 / 2 + sin(x_1) sin(u)`, a genuinely contact Lagrangian with
/// `|L_u| <= 1`. Declared with `theta0(r) = r^2/4`, `c0 = 2`,
/// `theta0_bar(r) = r^2/2`.
pub fn trig_contact(dim: usize) -> ContactSystem {
    ContactSystem::new(
        "trig-contact",
        dim,
        |x, u, v| 0.5 * sq(v) + x[0].sin() * u.sin(),
        Growth::quadratic(1.0, 2.0, 0.25, 0.5),
    )
    .with_l_x(|x, u, _, out| {
        out.fill(0.0);
        out[0] = x[0].cos() * u.sin();
    })
    .with_l_u(|x, u, _| x[0].sin() * u.cos())
    .with_l_v(|_, _, v, out| copy_into(v, out))
    .with_l_vv(move |_, _, _, out| identity(dim, 1.0, out))
}

/// Resolves a built-in Lagrangian by identifier.
pub fn builtin_system(id: &str, dim: usize) -> Result<ContactSystem> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Precondition(format!("dimension must be 1 or 2, got {dim}")));
    }
    let unknown = || Error::UnknownId(id.to_string());
    let (name, args) = parse_call(id).ok_or_else(unknown)?;
    match (name, args.as_slice()) {
        ("quadratic", []) => Ok(discounted_quadratic(0.0, dim)),
        ("discounted-quadratic", [lambda]) if *lambda >= 0.0 => {
            Ok(discounted_quadratic(*lambda, dim))
        }
        ("quartic", []) => Ok(quartic(dim)),
        ("trig-contact", []) => Ok(trig_contact(dim)),
        _ => Err(unknown()),
    }
}

/// Closed-form Hamiltonians dual to the built-in Lagrangians.
pub fn builtin_hamiltonian(id: &str, dim: usize) -> Result<HamiltonianSystem> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Precondition(format!("dimension must be 1 or 2, got {dim}")));
    }
    let unknown = || Error::UnknownId(id.to_string());
    let (name, args) = parse_call(id).ok_or_else(unknown)?;
    let quad = |lambda: f64, label: String| {
        HamiltonianSystem::new(label, dim, move |_, u, p| lambda * u + 0.5 * sq(p), lambda.abs())
            .with_h_x(|_, _, _, out| out.fill(0.0))
            .with_h_u(move |_, _, _| lambda)
            .with_h_p(|_, _, p, out| copy_into(p, out))
            .with_h_pp(move |_, _, _, out| identity(dim, 1.0, out))
    };
    match (name, args.as_slice()) {
        ("quadratic", []) => Ok(quad(0.0, "quadratic".into())),
        ("discounted-quadratic", [lambda]) if *lambda >= 0.0 => {
            Ok(quad(*lambda, format!("discounted-quadratic({lambda})")))
        }
        ("quartic", []) => Ok(HamiltonianSystem::new(
            "quartic",
            dim,
            |_, _, p| 0.75 * sq(p).powf(2.0 / 3.0),
            0.0,
        )
        .with_h_x(|_, _, _, out| out.fill(0.0))
        .with_h_u(|_, _, _| 0.0)
        .with_h_p(|_, _, p, out| {
            // H_p = |p|^{-2/3} p, continuous at 0.
            let s = sq(p);
            let scale = if s == 0.0 { 0.0 } else { s.powf(-1.0 / 3.0) };
            for (o, c) in out.iter_mut().zip(p) {
                *o = scale * c;
            }
        })),
        ("trig-contact", []) => Ok(HamiltonianSystem::new(
            "trig-contact",
            dim,
            |x, u, p| 0.5 * sq(p) - x[0].sin() * u.sin(),
            1.0,
        )
        .with_h_x(|x, u, _, out| {
            out.fill(0.0);
            out[0] = -x[0].cos() * u.sin();
        })
        .with_h_u(|x, u, _| -x[0].sin() * u.cos())
        .with_h_p(|_, _, p, out| copy_into(p, out))
        .with_h_pp(move |_, _, _, out| identity(dim, 1.0, out))),
        _ => Err(unknown()),
    }
}
