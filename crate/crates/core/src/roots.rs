//! Scalar root finding: bracket scans and safeguarded Newton iteration.

use crate::error::{Error, Result};
use crate::grid::linspace;

/// Sign-change intervals of `f` on a uniform scan of `[lo, hi]` with `k`
/// points, in increasing order. Points where `f` fails are skipped; an exact
/// zero yields a degenerate interval.
pub fn scan_brackets<F>(mut f: F, lo: f64, hi: f64, k: usize) -> Vec<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for x in linspace(lo, hi, k) {
        let Ok(y) = f(x) else {
            prev = None;
            continue;
        };
        if y == 0.0 {
            out.push((x, x));
        } else if let Some((px, py)) = prev {
            if py != 0.0 && py.signum() != y.signum() {
                out.push((px, x));
            }
        }
        prev = Some((x, y));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { x_tol: 1e-15, f_tol: 1e-14, max_iter: 100 }
    }
}

/// Newton iteration from `x0` with bisection fallback inside a bracket
/// `[lo, hi]` across which `f` changes sign. `f` returns value and derivative.
pub fn safeguarded_newton<F>(mut f: F, mut lo: f64, mut hi: f64, x0: f64, opts: NewtonOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (flo, _) = f(lo)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    let (fhi, _) = f(hi)?;
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoBracket(format!("f({lo}) = {flo:e} and f({hi}) = {fhi:e} have the same sign")));
    }
    let lo_sign = flo.signum();
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    for _ in 0..opts.max_iter {
        let (y, dy) = f(x)?;
        if y.abs() <= opts.f_tol {
            return Ok(x);
        }
        if y.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - y / dy;
        let next = if dy != 0.0 && newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= opts.x_tol * x.abs().max(1.0) || hi - lo <= opts.x_tol * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Newton iteration without a bracket; fails on a vanishing derivative or
/// when `max_iter` is exhausted.
pub fn newton<F>(mut f: F, x0: f64, opts: NewtonOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut x = x0;
    for _ in 0..opts.max_iter {
        let (y, dy) = f(x)?;
        if y.abs() <= opts.f_tol {
            return Ok(x);
        }
        if dy == 0.0 || !dy.is_finite() {
            return Err(Error::InvertibilityLost(format!("zero derivative at {x}")));
        }
        let next = x - y / dy;
        if (next - x).abs() <= opts.x_tol * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoBracket(format!("Newton iteration from {x0} did not converge")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brackets_are_found_in_order() {
        let b = scan_brackets(|x| Ok((x - 0.25) * (x - 0.75)), 0.0, 1.0, 11);
        assert_eq!(b.len(), 2);
        assert!(b[0].0 <= 0.25 && 0.25 <= b[0].1 && b[1].0 <= 0.75 && 0.75 <= b[1].1);
    }

    #[test]
    fn failing_points_break_brackets() {
        let b = scan_brackets(|x| if (0.4..0.6).contains(&x) { Err(Error::Invalid("hole".into())) } else { Ok(x - 0.5) }, 0.0, 1.0, 11);
        assert!(b.is_empty());
    }

    #[test]
    fn newton_converges_to_machine_precision() {
        let r = safeguarded_newton(|x| Ok((x * x - 2.0, 2.0 * x)), 0.0, 2.0, 1.0, NewtonOptions::default()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        let r = newton(|x| Ok((x.exp() - 3.0, x.exp())), 0.0, NewtonOptions::default()).unwrap();
        assert!((r - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bisection_takes_over_from_bad_newton_steps() {
        // Newton from 0.1 on atan overshoots wildly; the bracket keeps it honest.
        let r = safeguarded_newton(|x: f64| Ok((x.atan(), 1.0 / (1.0 + x * x))), -1.0, 20.0, 15.0, NewtonOptions::default())
            .unwrap();
        assert!(r.abs() < 1e-14);
    }

    #[test]
    fn missing_bracket_reported() {
        let r = safeguarded_newton(|x| Ok((x * x + 1.0, 2.0 * x)), -1.0, 1.0, 0.0, NewtonOptions::default());
        assert!(matches!(r, Err(Error::NoBracket(_))));
    }
}
