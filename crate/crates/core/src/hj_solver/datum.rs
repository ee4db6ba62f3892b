use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::{distance, parse_call};

/// Identifiers accepted by [`builtin_datum`].
pub const BUILTIN_DATA: [&str; 6] = [
    "sin",
    "cos-bump",
    "constant(c)",
    "quadratic-window(w)",
    "linear-window(a,w)",
    "abs-window(w)",
];

/// A bounded Lipschitz initial condition with its declared constants.
#[derive(Clone)]
pub struct InitialDatum {
    name: String,
    phi: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    /// Declared Lipschitz constant.
    pub lip: f64,
    /// Declared `sup |phi|`.
    pub sup_abs: f64,
}

impl fmt::Debug for InitialDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialDatum")
            .field("name", &self.name)
            .field("lip", &self.lip)
            .field("sup_abs", &self.sup_abs)
            .finish()
    }
}

impl InitialDatum {
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        lip: f64,
        sup_abs: f64,
    ) -> Self {
        Self {
            name: name.into(),
            phi: Arc::new(phi),
            lip,
            sup_abs,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.phi)(y)
    }

    /// Samples `phi` on `[-half_width, half_width]^dim` and reports every
    /// declared constant the samples contradict.
    pub fn audit(&self, dim: usize, half_width: f64, samples: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut problems = Vec::new();
        let mut worst_quot = 0.0_f64;
        let mut worst_abs = 0.0_f64;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.gen_range(-half_width..=half_width)).collect()
        };
        for _ in 0..samples {
            let a = draw(&mut rng);
            // Mix near and far pairs so that local slopes are probed too.
            let b: Vec<f64> = if rng.gen_bool(0.5) {
                a.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)).collect()
            } else {
                draw(&mut rng)
            };
            let (fa, fb) = (self.eval(&a), self.eval(&b));
            worst_abs = worst_abs.max(fa.abs()).max(fb.abs());
            let d = distance(&a, &b);
            if d > 0.0 {
                worst_quot = worst_quot.max((fa - fb).abs() / d);
            }
        }
        if worst_quot > self.lip * (1.0 + 1e-6) {
            problems.push(format!("difference quotient {worst_quot} exceeds Lip = {}", self.lip));
        }
        if worst_abs > self.sup_abs * (1.0 + 1e-6) {
            problems.push(format!("|phi| reaches {worst_abs} above sup = {}", self.sup_abs));
        }
        problems
    }
}

/// Resolves a built-in datum; `sin` is the mean of `sin(y_i)` over the
/// coordinates and the window data saturate outside `|y| <= w`.
pub fn builtin_datum(id: &str) -> Result<InitialDatum> {
    let unknown = || Error::UnknownId(id.to_string());
    let (name, args) = parse_call(id).ok_or_else(unknown)?;
    let datum = match (name, args.as_slice()) {
        ("sin", []) => InitialDatum::new(
            "sin",
            |y| y.iter().map(|v| v.sin()).sum::<f64>() / y.len() as f64,
            1.0,
            1.0,
        ),
        ("cos-bump", []) => InitialDatum::new(
            "cos-bump",
            |y| {
                let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r < 1.0 {
                    (std::f64::consts::FRAC_PI_2 * r).cos()
                } else {
                    0.0
                }
            },
            std::f64::consts::FRAC_PI_2,
            1.0,
        ),
        ("constant", [c]) => {
            let c = *c;
            InitialDatum::new(id.trim(), move |_| c, 0.0, c.abs())
        }
        ("quadratic-window", [w]) if *w > 0.0 => {
            let w = *w;
            InitialDatum::new(
                id.trim(),
                move |y| 0.5 * y.iter().map(|v| v * v).sum::<f64>().min(w * w),
                w,
                0.5 * w * w,
            )
        }
        ("linear-window", [a, w]) if *w > 0.0 => {
            let (a, w) = (*a, *w);
            InitialDatum::new(id.trim(), move |y| a * y[0].clamp(-w, w), a.abs(), a.abs() * w)
        }
        ("abs-window", [w]) if *w > 0.0 => {
            let w = *w;
            InitialDatum::new(
                id.trim(),
                move |y| y.iter().map(|v| v * v).sum::<f64>().sqrt().min(w),
                1.0,
                w,
            )
        }
        _ => return Err(unknown()),
    };
    Ok(datum)
}
