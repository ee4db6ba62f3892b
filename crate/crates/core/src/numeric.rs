//! Small numerical helpers shared by the solver modules.

pub(crate) const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of `f` on `[a, b]`.
///
/// Returns the best point seen and its value. Stops when the bracket is
/// narrower than `tol` or `max_iter` evaluations were spent.
pub(crate) fn golden_section<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), E> {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fd < fc { (d, fd) } else { (c, fc) };
    let mut iter = 0;
    while (b - a).abs() > tol && iter < max_iter {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
            if fd < best.1 {
                best = (d, fd);
            }
        }
        iter += 1;
    }
    Ok(best)
}

/// Smallest eigenvalue of a symmetric `dim x dim` matrix stored row-major
/// (`dim` is 1 or 2).
pub(crate) fn min_eigen_sym(m: &[f64], dim: usize) -> f64 {
    match dim {
        1 => m[0],
        2 => {
            let (a, b, d) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            mean - rad
        }
        _ => unreachable!("dimension is limited to 1 or 2"),
    }
}

/// Solves `m z = rhs` for `dim` in {1, 2}. Returns `None` when the matrix is
/// numerically singular.
pub(crate) fn solve_small(m: &[f64], rhs: &[f64], dim: usize, out: &mut [f64]) -> Option<()> {
    match dim {
        1 => {
            if m[0].abs() <= f64::MIN_POSITIVE || !m[0].is_finite() {
                return None;
            }
            out[0] = rhs[0] / m[0];
        }
        2 => {
            let det = m[0] * m[3] - m[1] * m[2];
            let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
                return None;
            }
            out[0] = (m[3] * rhs[0] - m[1] * rhs[1]) / det;
            out[1] = (m[0] * rhs[1] - m[2] * rhs[0]) / det;
        }
        _ => unreachable!("dimension is limited to 1 or 2"),
    }
    Some(())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Linear-interpolated percentile (`q` in [0, 1]) of unsorted data.
pub(crate) fn percentile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Splits identifiers such as `discounted-quadratic(0.5)` into the name and
/// its numeric arguments.
pub(crate) fn parse_call(id: &str) -> Option<(&str, Vec<f64>)> {
    let id = id.trim();
    match id.find('(') {
        None => Some((id, Vec::new())),
        Some(open) => {
            let close = id.rfind(')')?;
            if close != id.len() - 1 || close < open {
                return None;
            }
            let name = id[..open].trim();
            let inner = id[open + 1..close].trim();
            if inner.is_empty() {
                return Some((name, Vec::new()));
            }
            let args = inner
                .split(',')
                .map(|a| a.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<_>>>()?;
            Some((name, args))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, fx) =
            golden_section::<()>(|x| Ok((x - 0.3) * (x - 0.3) + 1.0), -2.0, 2.0, 1e-10, 200)
                .unwrap();
        assert!((x - 0.3).abs() < 1e-8);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_and_solve_2x2() {
        let m = [2.0, 1.0, 1.0, 2.0];
        assert!((min_eigen_sym(&m, 2) - 1.0).abs() < 1e-15);
        let mut out = [0.0; 2];
        solve_small(&m, &[3.0, 3.0], 2, &mut out).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15 && (out[1] - 1.0).abs() < 1e-15);
        assert!(solve_small(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2, &mut out).is_none());
    }

    #[test]
    fn percentile_interpolates() {
        let data = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&data, 0.5), 2.5);
        assert_eq!(percentile(&data, 1.0), 4.0);
        assert_eq!(percentile(&data, 0.0), 1.0);
    }

    #[test]
    fn parse_call_forms() {
        assert_eq!(parse_call("quadratic"), Some(("quadratic", vec![])));
        assert_eq!(
            parse_call("discounted-quadratic(0.5)"),
            Some(("discounted-quadratic", vec![0.5]))
        );
        assert_eq!(parse_call("linear-window(2, 5)"), Some(("linear-window", vec![2.0, 5.0])));
        assert_eq!(parse_call("bad(1"), None);
        assert_eq!(parse_call("bad(x)"), None);
    }
}
