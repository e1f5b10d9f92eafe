//! Generating pairs `(h, W)` and their gauge transformations.

use crate::error::{Error, Result};
use crate::expr::{Dual, EvalError, Expression, Scalar, Var};
use crate::grid::{linspace, PhaseBox};

/// `|W_v|` below this is treated as a regularity violation.
pub const REGULARITY_EPS: f64 = 1e-12;
const VALIDATION_LATTICE: usize = 5;
const GAUGE_INVERSE_TOL: f64 = 1e-8;
const GAUGE_SWEEP: usize = 257;

/// A function of one variable `w`. Gauge transformations stack on top of
/// the user-supplied expression.
#[derive(Debug, Clone)]
pub enum UnaryFn {
    Expr(Expression),
    /// `h̃(w) = h(ρ⁻¹(w)) · ρ′(ρ⁻¹(w))`.
    Gauged { inner: Box<UnaryFn>, rho: Expression, rho_inv: Expression },
}

impl UnaryFn {
    pub fn eval<S: Scalar>(&self, w: S) -> Result<S, EvalError> {
        match self {
            UnaryFn::Expr(e) => e.at_w(w),
            UnaryFn::Gauged { inner, rho, rho_inv } => {
                let y = rho_inv.at_w(w)?;
                let drho = rho.at_w(Dual::var(y))?.eps;
                Ok(inner.eval(y)? * drho)
            }
        }
    }
}

/// `W`, `∇_i W = ∂W/∂x^i` and `W_v` at one point of `M × ℝ⁺`.
#[derive(Debug, Clone)]
pub struct WPartials<S> {
    pub w: S,
    pub grad: Vec<S>,
    pub w_v: S,
}

#[derive(Debug, Clone)]
pub struct GeneratingPair {
    h: UnaryFn,
    w: Expression,
    domain: PhaseBox,
}

impl GeneratingPair {
    /// Builds the pair and checks `W_v ≠ 0` on a lattice over the phase box.
    pub fn new(h: Expression, w: Expression, domain: PhaseBox) -> Result<Self> {
        h.check_vars(|v| v == Var::W)
            .map_err(|v| Error::Invalid(format!("h = `{h}` may only use `w`, found `{v}`")))?;
        Self::with_unary(UnaryFn::Expr(h), w, domain)
    }

    pub fn parse(h: &str, w: &str, domain: PhaseBox) -> Result<Self> {
        let h = Expression::parse(h).map_err(|e| Error::parse("h", e))?;
        let w = Expression::parse(w).map_err(|e| Error::parse("W", e))?;
        Self::new(h, w, domain)
    }

    fn with_unary(h: UnaryFn, w: Expression, domain: PhaseBox) -> Result<Self> {
        let n = domain.dim();
        w.check_vars(|v| v == Var::V || matches!(v, Var::X(i) if i < n))
            .map_err(|v| Error::Invalid(format!("W = `{w}` may only use x1..x{n} and v, found `{v}`")))?;
        let pair = GeneratingPair { h, w, domain };
        pair.check_regularity(VALIDATION_LATTICE)?;
        Ok(pair)
    }

    /// `W_v ≠ 0` on a `k^(n+1)` lattice. Only the configured box is checked.
    pub fn check_regularity(&self, k: usize) -> Result<()> {
        for (x, v) in self.domain.lattice(k) {
            self.w_partials(&x, v)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &PhaseBox {
        &self.domain
    }

    pub fn w_expr(&self) -> &Expression {
        &self.w
    }

    pub fn h_fn(&self) -> &UnaryFn {
        &self.h
    }

    pub fn h_at<S: Scalar>(&self, w: S) -> Result<S> {
        Ok(self.h.eval(w)?)
    }

    fn check_domain<S: Scalar>(&self, x: &[S], v: S) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("point has {} coordinates, pair expects {}", x.len(), self.dim())));
        }
        let re: Vec<f64> = x.iter().map(|c| c.re()).collect();
        self.domain.check(&re, v.re())
    }

    pub fn w_at<S: Scalar>(&self, x: &[S], v: S) -> Result<S> {
        self.check_domain(x, v)?;
        Ok(self.w.at_phase(x, v)?)
    }

    /// Exact partials of `W` by forward-mode AD; one pass per coordinate.
    pub fn w_partials<S: Scalar>(&self, x: &[S], v: S) -> Result<WPartials<S>> {
        self.check_domain(x, v)?;
        let n = x.len();
        let lift = |seed: Option<usize>| -> (Vec<Dual<S>>, Dual<S>) {
            let xs = x
                .iter()
                .enumerate()
                .map(|(i, c)| Dual::new(*c, S::cst(if seed == Some(i) { 1.0 } else { 0.0 })))
                .collect();
            (xs, Dual::new(v, S::cst(if seed == Some(n) { 1.0 } else { 0.0 })))
        };
        let mut grad = Vec::with_capacity(n);
        let mut value = None;
        for i in 0..n {
            if !self.w.free_vars().contains(&Var::X(i)) {
                grad.push(S::cst(0.0));
                continue;
            }
            let (xs, vs) = lift(Some(i));
            let y = self.w.at_phase(&xs, vs)?;
            value.get_or_insert(y.re);
            grad.push(y.eps);
        }
        let (xs, vs) = lift(Some(n));
        let y = self.w.at_phase(&xs, vs)?;
        let w_v = y.eps;
        if w_v.re().abs() < REGULARITY_EPS {
            return Err(Error::Regularity {
                x: x.iter().map(|c| c.re()).collect(),
                v: v.re(),
                w_v: w_v.re(),
            });
        }
        Ok(WPartials { w: value.unwrap_or(y.re), grad, w_v })
    }

    /// Gauge transformation `W → ρ∘W`, `h → h(ρ⁻¹)·ρ′(ρ⁻¹)`.
    ///
    /// `ρ` must be strictly monotone on the range of `W` over the validation
    /// lattice, and `rho_inv` must invert it there.
    pub fn gauge_transform(&self, rho: &Expression, rho_inv: &Expression) -> Result<GeneratingPair> {
        for e in [rho, rho_inv] {
            e.check_vars(|v| v == Var::W)
                .map_err(|v| Error::Gauge(format!("`{e}` may only use `w`, found `{v}`")))?;
        }
        let values: Vec<f64> = self
            .domain
            .lattice(VALIDATION_LATTICE)
            .iter()
            .map(|(x, v)| self.w_at(x, *v))
            .collect::<Result<_>>()?;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sign = 0.0;
        for w in linspace(lo, hi, GAUGE_SWEEP).into_iter().chain(values.iter().copied()) {
            let d = rho.at_w(Dual::var(w))?;
            let s = d.eps.signum();
            if d.eps == 0.0 || (sign != 0.0 && s != sign) {
                return Err(Error::Gauge(format!("ρ = `{rho}` is not strictly monotone near w = {w}")));
            }
            sign = s;
            let y = d.re;
            let back = rho_inv.at_w(y)?;
            if (back - w).abs() > GAUGE_INVERSE_TOL * w.abs().max(1.0) {
                return Err(Error::Gauge(format!("ρ⁻¹(ρ({w})) = {back}")));
            }
            let again = rho.at_w(back)?;
            if (again - y).abs() > GAUGE_INVERSE_TOL * y.abs().max(1.0) {
                return Err(Error::Gauge(format!("|ρ(ρ⁻¹({y})) − {y}| = {:e}", (again - y).abs())));
            }
        }
        let h = UnaryFn::Gauged { inner: Box::new(self.h.clone()), rho: rho.clone(), rho_inv: rho_inv.clone() };
        Self::with_unary(h, rho.substitute(Var::W, &self.w), self.domain.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CoordBox;

    fn domain() -> PhaseBox {
        PhaseBox::new(CoordBox::cube(3, -1.0, 1.0), (0.5, 3.0)).unwrap()
    }

    fn e(s: &str) -> Expression {
        Expression::parse(s).unwrap()
    }

    #[test]
    fn partials_of_speed_only() {
        let p = GeneratingPair::parse("1", "v", domain()).unwrap();
        let d = p.w_partials(&[0.3, -0.2, 0.9], 2.0).unwrap();
        assert_eq!((d.w, d.grad.clone(), d.w_v), (2.0, vec![0.0, 0.0, 0.0], 1.0));
    }

    #[test]
    fn partials_of_global_construction() {
        let p = GeneratingPair::parse("1", "x1 + v", domain()).unwrap();
        let d = p.w_partials(&[1.0, 0.0, 0.0], 2.0).unwrap();
        assert_eq!((d.w, d.grad.clone(), d.w_v), (3.0, vec![1.0, 0.0, 0.0], 1.0));
    }

    #[test]
    fn partials_of_exponential_family_match_fd() {
        let p = GeneratingPair::parse("w", "v*exp(-x1)", domain()).unwrap();
        let d = p.w_partials(&[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!((d.w, d.grad.clone(), d.w_v), (1.0, vec![-1.0, 0.0, 0.0], 1.0));
        let h = 1e-6;
        let fd = (p.w_at(&[h, 0.0, 0.0], 1.0).unwrap() - p.w_at(&[-h, 0.0, 0.0], 1.0).unwrap()) / (2.0 * h);
        assert!((fd + 1.0).abs() < 1e-9);
    }

    #[test]
    fn regularity_violation_detected() {
        let err = GeneratingPair::parse("1", "x1 + (v - 1.125)^2", domain()).unwrap_err();
        assert!(matches!(err, Error::Regularity { .. }), "{err}");
        let err = GeneratingPair::parse("1", "x1", domain()).unwrap_err();
        assert!(matches!(err, Error::Regularity { .. }));
    }

    #[test]
    fn out_of_box_rejected() {
        let p = GeneratingPair::parse("1", "v", domain()).unwrap();
        assert!(matches!(p.w_partials(&[2.0, 0.0, 0.0], 1.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(p.w_partials(&[0.0, 0.0, 0.0], 5.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn bad_variables_rejected() {
        assert!(GeneratingPair::parse("v", "v", domain()).is_err());
        assert!(GeneratingPair::parse("1", "x4 + v", domain()).is_err());
    }

    #[test]
    fn linear_gauge_doubles() {
        let p = GeneratingPair::parse("1", "v", domain()).unwrap();
        let g = p.gauge_transform(&e("2*w"), &e("w/2")).unwrap();
        for w in [0.3, 1.0, 4.0] {
            assert_eq!(g.h_at(w).unwrap(), 2.0);
        }
        assert_eq!(g.w_at(&[0.0, 0.0, 0.0], 1.5).unwrap(), 3.0);
    }

    #[test]
    fn identity_gauge_keeps_pair() {
        let p = GeneratingPair::parse("w^2 + 1", "x1 + v", domain()).unwrap();
        let g = p.gauge_transform(&e("w"), &e("w")).unwrap();
        for (x, v) in domain().lattice(3) {
            assert_eq!(g.w_at(&x, v).unwrap(), p.w_at(&x, v).unwrap());
            let w = p.w_at(&x, v).unwrap();
            assert_eq!(g.h_at(w).unwrap(), p.h_at(w).unwrap());
        }
    }

    #[test]
    fn invalid_gauges_rejected() {
        let p = GeneratingPair::parse("1", "x1 + v", domain()).unwrap();
        // w^2 is not monotone across w = 0 (W ranges over [-0.5, 4]).
        assert!(matches!(p.gauge_transform(&e("w^2"), &e("sqrt(w)")), Err(Error::Gauge(_))));
        assert!(matches!(p.gauge_transform(&e("2*w"), &e("w/3")), Err(Error::Gauge(_))));
    }
}
