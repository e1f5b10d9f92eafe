//! The Pfaff system `∂V/∂x^i = b_i(x, V)` with Cauchy data `V(p₀, w) = w`,
//! reconstruction of `W` by inverting `v = V(x, w)`, and line integrals of
//! closed 1-forms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Dual, Expression};
use crate::ode::{dopri5, dopri5_fixed, AdaptiveOptions};
use crate::quad;
use crate::roots::{safeguarded_newton, scan_brackets, NewtonOptions};
use crate::section::{closedness_sweep, omega_closedness_residual, CovectorField, PhaseMap, ProjectiveSectionField};

/// Max closedness residual accepted as compatible.
pub const COMPATIBILITY_THRESHOLD: f64 = 1e-6;
/// Step of the central difference for `Z = ∂V/∂w`.
pub const Z_STEP: f64 = 1e-5;
const COMPATIBILITY_LATTICE: usize = 5;
const BRACKET_SCAN: usize = 65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathPolicy {
    /// Straight segment from `p₀` to `x`.
    Segment,
    /// Axis-parallel legs, `x^1` first.
    Staircase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    Adaptive(AdaptiveOptions),
    /// Equal steps per path leg, making `V` a smooth function of `(x, w)`.
    Fixed(usize),
}

impl Default for Stepping {
    fn default() -> Self {
        Stepping::Adaptive(AdaptiveOptions::default())
    }
}

#[derive(Debug, Clone)]
pub struct PfaffSolution {
    b: ProjectiveSectionField,
    p0: Vec<f64>,
    pub policy: PathPolicy,
    pub stepping: Stepping,
}

/// Checks compatibility of `b` on a lattice over its domain, then returns
/// the solution of the Cauchy problem at `p0`.
pub fn solve_cauchy(b: &ProjectiveSectionField, p0: &[f64], policy: PathPolicy) -> Result<PfaffSolution> {
    let sweep = closedness_sweep(b, &b.domain().lattice(COMPATIBILITY_LATTICE))?;
    if sweep.max_abs > COMPATIBILITY_THRESHOLD {
        let mut point = sweep.x.clone();
        point.push(sweep.v);
        return Err(Error::Incompatible { residual: sweep.value, point });
    }
    solve_cauchy_unchecked(b, p0, policy)
}

/// As [`solve_cauchy`] without the compatibility check; path-dependent
/// results are then possible, which is what the path-independence check
/// detects.
pub fn solve_cauchy_unchecked(b: &ProjectiveSectionField, p0: &[f64], policy: PathPolicy) -> Result<PfaffSolution> {
    if p0.len() != b.dim() {
        return Err(Error::Dimension(format!("base point has {} coordinates, section has {}", p0.len(), b.dim())));
    }
    b.domain().space.check(p0)?;
    Ok(PfaffSolution { b: b.clone(), p0: p0.to_vec(), policy, stepping: Stepping::default() })
}

impl PfaffSolution {
    pub fn with_stepping(mut self, stepping: Stepping) -> Self {
        self.stepping = stepping;
        self
    }

    pub fn base_point(&self) -> &[f64] {
        &self.p0
    }

    pub fn section(&self) -> &ProjectiveSectionField {
        &self.b
    }

    /// `V(x, w)` along the configured path.
    pub fn v_at(&self, x: &[f64], w: f64) -> Result<f64> {
        self.v_along(self.policy, x, w)
    }

    pub fn v_along(&self, policy: PathPolicy, x: &[f64], w: f64) -> Result<f64> {
        if x.len() != self.p0.len() {
            return Err(Error::Dimension(format!("point has {} coordinates, section has {}", x.len(), self.p0.len())));
        }
        self.b.domain().space.check(x)?;
        self.check_v(&self.p0, w)?;
        match policy {
            PathPolicy::Segment => self.leg(&self.p0, x, w),
            PathPolicy::Staircase => {
                let mut corner = self.p0.clone();
                let mut v = w;
                for i in 0..x.len() {
                    if x[i] == corner[i] {
                        continue;
                    }
                    let mut next = corner.clone();
                    next[i] = x[i];
                    v = self.leg(&corner, &next, v)?;
                    corner = next;
                }
                Ok(v)
            }
        }
    }

    fn check_v(&self, x: &[f64], v: f64) -> Result<()> {
        let bounds = self.b.domain().v_range;
        if !(v >= bounds.0 && v <= bounds.1) {
            return Err(Error::Escape { x: x.to_vec(), value: v, bounds });
        }
        Ok(())
    }

    /// Integrates `dV/ds = Σ b_i(γ(s), V) (q − p)^i` over `s ∈ [0, 1]`.
    fn leg(&self, p: &[f64], q: &[f64], v0: f64) -> Result<f64> {
        let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
        if d.iter().all(|c| *c == 0.0) {
            return Ok(v0);
        }
        let rhs = |s: f64, y: &[f64]| -> Result<Vec<f64>> {
            let x: Vec<f64> = p.iter().zip(&d).map(|(a, c)| a + s * c).collect();
            self.check_v(&x, y[0])?;
            let b = self.b.b_at(&x, y[0])?;
            Ok(vec![b.iter().zip(&d).map(|(b, c)| b * c).sum()])
        };
        let y = match self.stepping {
            Stepping::Fixed(steps) => dopri5_fixed(&rhs, 0.0, &[v0], 1.0, steps)?,
            Stepping::Adaptive(opts) => dopri5(&rhs, 0.0, &[v0], 1.0, opts, |_, _| Ok(true))?.1,
        };
        self.check_v(q, y[0])?;
        Ok(y[0])
    }

    /// `Z = ∂V/∂w` by a central difference with step [`Z_STEP`].
    pub fn z_at(&self, x: &[f64], w: f64) -> Result<f64> {
        Ok((self.v_at(x, w + Z_STEP)? - self.v_at(x, w - Z_STEP)?) / (2.0 * Z_STEP))
    }

    /// Residual of `∂ψ/∂y^i = −B_i ψ` for `ψ = C(w)/Z`, with `∂ψ/∂y^i` from a
    /// five-point difference of `ψ` and `B_i = ∂_v b_i(y, V(y, w))`, which
    /// follows from differentiating the Pfaff system in `w`.
    pub fn psi_residual(&self, c: &Expression, y: &[f64], w: f64, i: usize, step: f64) -> Result<f64> {
        let psi = |y: &[f64]| -> Result<f64> { Ok(c.at_w(w)? / self.z_at(y, w)?) };
        let shifted = |s: f64| -> Result<f64> {
            let mut ys = y.to_vec();
            ys[i] += s;
            psi(&ys)
        };
        let d = (-shifted(2.0 * step)? + 8.0 * shifted(step)? - 8.0 * shifted(-step)? + shifted(-2.0 * step)?) / (12.0 * step);
        let v = self.v_at(y, w)?;
        let xs: Vec<Dual<f64>> = y.iter().map(|c| Dual::constant(*c)).collect();
        let big_b = self.b.eval(&xs, Dual::var(v))?[i].eps;
        Ok(d + big_b * psi(y)?)
    }
}

/// `|V_segment(x, w) − V_staircase(x, w)|`.
pub fn path_independence_check(sol: &PfaffSolution, x: &[f64], w: f64) -> Result<f64> {
    Ok((sol.v_along(PathPolicy::Segment, x, w)? - sol.v_along(PathPolicy::Staircase, x, w)?).abs())
}

/// `W(x, v)`: the `w` with `V(x, w) = v`, searched in the `v_range` of the
/// section (where the Cauchy data lives). Newton starts at `w = v` and is
/// safeguarded by a bracket from a scan when needed.
pub fn invert_to_w(sol: &PfaffSolution, x: &[f64], v: f64) -> Result<f64> {
    invert_to_w_near(sol, x, v, v)
}

/// [`invert_to_w`] with Newton started at `guess`.
pub fn invert_to_w_near(sol: &PfaffSolution, x: &[f64], v: f64, guess: f64) -> Result<f64> {
    let (lo, hi) = sol.b.domain().v_range;
    let eval = |w: f64| -> Result<(f64, f64)> {
        let z = sol.z_at(x, w)?;
        if !(z > 0.0) {
            return Err(Error::InvertibilityLost(format!("Z = {z:e} at x = {x:?}, w = {w}")));
        }
        Ok((sol.v_at(x, w)? - v, z))
    };
    let opts = NewtonOptions::default();
    if let Ok(w) = local_newton(&eval, guess.clamp(lo, hi), opts, (lo, hi)) {
        if (sol.v_at(x, w)? - v).abs() < 1e-10 {
            return Ok(w);
        }
    }
    let inner = (lo + Z_STEP, hi - Z_STEP);
    let brackets = scan_brackets(|w| sol.v_at(x, w).map(|y| y - v), inner.0, inner.1, BRACKET_SCAN);
    let Some(&(a, b)) = brackets.first() else {
        return Err(Error::NoBracket(format!("V(x, ·) does not reach v = {v} for w in {inner:?} at x = {x:?}")));
    };
    if a == b {
        return Ok(a);
    }
    let w = safeguarded_newton(eval, a, b, 0.5 * (a + b), opts)?;
    let r = (sol.v_at(x, w)? - v).abs();
    if r >= 1e-10 {
        return Err(Error::NoBracket(format!("inversion residual {r:e} at x = {x:?}, v = {v}")));
    }
    Ok(w)
}

fn local_newton<F>(eval: &F, w0: f64, opts: NewtonOptions, (lo, hi): (f64, f64)) -> Result<f64>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let mut w = w0;
    for _ in 0..30 {
        let (y, z) = eval(w)?;
        if y == 0.0 {
            return Ok(w);
        }
        let next = w - y / z;
        if !(next > lo && next < hi) {
            return Err(Error::NoBracket(format!("Newton step leaves [{lo}, {hi}]")));
        }
        if (next - w).abs() <= opts.x_tol * w.abs().max(1.0) {
            return Ok(next);
        }
        w = next;
    }
    Err(Error::NoBracket("Newton iteration did not settle".into()))
}

/// Section of the reconstructed generator: `b̃_i = −∂_iW̃/∂_vW̃` with
/// `W̃ = invert_to_w(sol, ·)` and central differences of step `h`.
pub fn reconstructed_section(sol: &PfaffSolution, x: &[f64], v: f64, h: f64) -> Result<Vec<f64>> {
    let w0 = invert_to_w(sol, x, v)?;
    let w = |x: &[f64], v: f64| invert_to_w_near(sol, x, v, w0);
    let dv = (w(x, v + h)? - w(x, v - h)?) / (2.0 * h);
    if !(dv > 0.0) {
        return Err(Error::InvertibilityLost(format!("∂W̃/∂v = {dv:e} at x = {x:?}, v = {v}")));
    }
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            Ok(-(w(&xp, v)? - w(&xm, v)?) / (2.0 * h) / dv)
        })
        .collect()
}

/// Points of `M × ℝ⁺` as `(x, v)`.
pub type PhasePoint = (Vec<f64>, f64);

const TUBE_SAMPLES: usize = 17;
const LINE_TOL: f64 = 1e-13;

/// `∫ ω` along a polyline. Closedness is checked at sample points along
/// every leg; a non-closed form is refused.
pub fn line_integral_w(omega: &CovectorField, path: &[PhasePoint]) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::Invalid("a path needs at least two points".into()));
    }
    let n = omega.dim();
    for (q0, q1) in path.iter().zip(&path[1..]) {
        for k in 0..TUBE_SAMPLES {
            let s = k as f64 / (TUBE_SAMPLES - 1) as f64;
            let (x, v) = lerp(q0, q1, s);
            for i in 0..=n {
                for j in i + 1..=n {
                    let r = omega_closedness_residual(omega, &x, v, i, j)?;
                    if r.abs() > COMPATIBILITY_THRESHOLD {
                        let mut point = x.clone();
                        point.push(v);
                        return Err(Error::NotClosed { residual: r, point });
                    }
                }
            }
        }
    }
    let mut total = 0.0;
    for (q0, q1) in path.iter().zip(&path[1..]) {
        let mut d: Vec<f64> = q1.0.iter().zip(&q0.0).map(|(a, b)| a - b).collect();
        d.push(q1.1 - q0.1);
        total += quad::integrate(
            |s| {
                let (x, v) = lerp(q0, q1, s);
                Ok(omega.omega_at(&x, v)?.iter().zip(&d).map(|(w, c)| w * c).sum())
            },
            0.0,
            1.0,
            LINE_TOL,
        )?;
    }
    Ok(total)
}

fn lerp(q0: &PhasePoint, q1: &PhasePoint, s: f64) -> PhasePoint {
    (q0.0.iter().zip(&q1.0).map(|(a, b)| a + s * (b - a)).collect(), q0.1 + s * (q1.1 - q0.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CoordBox, PhaseBox};
    use crate::pair::GeneratingPair;
    use crate::section::section_from_pair;

    fn domain() -> PhaseBox {
        PhaseBox::new(CoordBox::cube(3, -1.0, 1.0), (0.05, 20.0)).unwrap()
    }

    fn section(b: &[&str]) -> ProjectiveSectionField {
        ProjectiveSectionField::parse(b, domain()).unwrap()
    }

    const O: [f64; 3] = [0.0; 3];

    #[test]
    fn trivial_system_keeps_data() {
        let sol = solve_cauchy(&section(&["0", "0", "0"]), &O, PathPolicy::Segment).unwrap();
        for w in [0.5, 1.0, 3.0] {
            assert_eq!(sol.v_at(&[0.3, -0.7, 0.2], w).unwrap(), w);
            assert_eq!(path_independence_check(&sol, &[0.3, -0.7, 0.2], w).unwrap(), 0.0);
            assert_eq!(invert_to_w(&sol, &[0.3, -0.7, 0.2], w).unwrap(), w);
        }
    }

    #[test]
    fn cauchy_data_is_exact() {
        let sol = solve_cauchy(&section(&["v", "0", "0"]), &O, PathPolicy::Segment).unwrap();
        for w in [0.1, 1.0, 7.5] {
            assert!((sol.v_at(&O, w).unwrap() - w).abs() < 1e-12);
            assert!((sol.z_at(&O, w).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_section_is_affine() {
        let sol = solve_cauchy(&section(&["-1", "0", "0"]), &O, PathPolicy::Segment).unwrap();
        for (x, w) in [([0.5f64, 0.2, -0.1], 2.0), ([-0.8, 0.9, 0.3], 1.0)] {
            assert!((sol.v_at(&x, w).unwrap() - (w - x[0])).abs() < 1e-12);
            let v = 1.7;
            assert!((invert_to_w(&sol, &x, v).unwrap() - (v + x[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_solution() {
        let sol = solve_cauchy(&section(&["v", "0", "0"]), &O, PathPolicy::Segment).unwrap();
        for (x, w) in [([0.5f64, 0.2, -0.1], 2.0), ([-0.8, 0.9, 0.3], 1.0), ([1.0, 1.0, 0.0], 1.0)] {
            let exact = w * x[0].exp();
            assert!((sol.v_at(&x, w).unwrap() - exact).abs() < 1e-9 * exact);
            assert!(path_independence_check(&sol, &x, w).unwrap() < 1e-8);
            let v = 1.3;
            assert!((invert_to_w(&sol, &x, v).unwrap() - v * (-x[0]).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn nonzero_base_point() {
        let p0 = [0.5, -0.5, 0.0];
        let sol = solve_cauchy(&section(&["-1", "0", "0"]), &p0, PathPolicy::Staircase).unwrap();
        assert!((sol.v_at(&[0.0, 0.5, 0.5], 1.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn incompatible_section_refused_but_detectable() {
        let b = section(&["x2", "0", "0"]);
        assert!(matches!(solve_cauchy(&b, &O, PathPolicy::Segment), Err(Error::Incompatible { .. })));
        let sol = solve_cauchy_unchecked(&b, &O, PathPolicy::Segment).unwrap();
        // Segment: dV/ds = s·1 → V = w + 1/2; staircase: x1 leg first at x2 = 0 → V = w.
        let gap = path_independence_check(&sol, &[1.0, 1.0, 0.0], 1.0).unwrap();
        assert!((gap - 0.5).abs() < 1e-9, "{gap}");
    }

    #[test]
    fn escape_reported() {
        let sol = solve_cauchy(&section(&["-1", "0", "0"]), &O, PathPolicy::Segment).unwrap();
        let err = sol.v_at(&[1.0, 0.0, 0.0], 0.5).unwrap_err();
        assert!(matches!(err, Error::Escape { .. }), "{err}");
    }

    #[test]
    fn out_of_box_reported() {
        let sol = solve_cauchy(&section(&["0", "0", "0"]), &O, PathPolicy::Segment).unwrap();
        assert!(matches!(sol.v_at(&[1.5, 0.0, 0.0], 1.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn inversion_without_root_reported() {
        let sol = solve_cauchy(&section(&["-1", "0", "0"]), &O, PathPolicy::Segment).unwrap();
        // V = w − 1 at x1 = 1 needs w = 20.5, outside v_range.
        assert!(matches!(invert_to_w(&sol, &[1.0, 0.0, 0.0], 19.5), Err(Error::NoBracket(_))));
    }

    #[test]
    fn reconstruction_reproduces_section() {
        let p = GeneratingPair::parse("w", "v*exp(-x1)", domain()).unwrap();
        let (b, _) = section_from_pair(&p);
        let sol = solve_cauchy(&b, &O, PathPolicy::Segment).unwrap().with_stepping(Stepping::Fixed(64));
        for (x, v) in [(vec![0.3, -0.2, 0.5], 1.2), (vec![-0.5, 0.4, 0.1], 2.0)] {
            let bt = reconstructed_section(&sol, &x, v, 1e-4).unwrap();
            assert!((bt[0] - v).abs() < 1e-7 && bt[1].abs() < 1e-7 && bt[2].abs() < 1e-7, "{bt:?}");
        }
    }

    #[test]
    fn psi_solves_reduced_system() {
        let b = section(&["v", "-0.2*v", "0"]);
        let sol = solve_cauchy(&b, &O, PathPolicy::Segment).unwrap().with_stepping(Stepping::Fixed(64));
        for c in ["1", "w"] {
            let c = Expression::parse(c).unwrap();
            for i in 0..3 {
                let r = sol.psi_residual(&c, &[0.3, -0.2, 0.4], 1.5, i, 1e-3).unwrap();
                assert!(r.abs() < 1e-6, "{r}");
            }
        }
    }

    #[test]
    fn line_integrals_of_exact_forms() {
        let dv = CovectorField::parse(&["0", "0", "0", "1"], domain()).unwrap();
        let v = line_integral_w(&dv, &[(O.to_vec(), 1.0), (O.to_vec(), 3.0)]).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
        let dw = CovectorField::differential(Expression::parse("x1 + v").unwrap(), domain()).unwrap();
        let q0 = (O.to_vec(), 1.0);
        let q1 = (vec![1.0, 0.0, 0.0], 2.0);
        let straight = line_integral_w(&dw, &[q0.clone(), q1.clone()]).unwrap();
        let bent = line_integral_w(&dw, &[q0, (vec![0.3, 0.8, -0.5], 4.0), q1]).unwrap();
        assert!((straight - 2.0).abs() < 1e-12 && (bent - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_closed_form_refused() {
        let omega = CovectorField::parse(&["-x2", "0", "0", "1"], domain()).unwrap();
        let r = line_integral_w(&omega, &[(O.to_vec(), 1.0), (vec![1.0, 1.0, 0.0], 1.0)]);
        assert!(matches!(r, Err(Error::NotClosed { .. })));
    }
}
