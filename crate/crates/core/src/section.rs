//! Sections of the projectivized cotangent bundle of `M × ℝ⁺`, normalizing
//! scalars, 1-forms, and the residuals that characterise them.
//!
//! A section is stored in the affine chart `b_i = −ω_i/ω_{n+1}`; the
//! normalizing field `X = a ∂/∂v` is stored through `a`. Coordinates on
//! `M × ℝ⁺` are `(x^1, …, x^n, v)` and index `n` (zero-based) denotes `v`
//! wherever an index runs over all `n + 1` coordinates.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Dual, Expression, Scalar, Var};
use crate::geometry::ChartTransition;
use crate::grid::PhaseBox;
use crate::pair::GeneratingPair;

/// A vector-valued function on `M × ℝ⁺` that can be evaluated over any
/// [`Scalar`], so that its derivatives come from forward-mode AD.
pub trait PhaseMap: Sync {
    fn dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>>;
}

/// Values and Jacobian `jac[k][c] = ∂f_k/∂x^c` (`c = n` is `∂/∂v`).
pub fn jacobian<F: PhaseMap + ?Sized>(f: &F, x: &[f64], v: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = x.len();
    let m = f.out_dim();
    let mut jac = vec![vec![0.0; n + 1]; m];
    let mut values = Vec::new();
    for c in 0..=n {
        let xs: Vec<Dual<f64>> = x.iter().enumerate().map(|(i, a)| Dual::new(*a, if i == c { 1.0 } else { 0.0 })).collect();
        let vs = Dual::new(v, if c == n { 1.0 } else { 0.0 });
        let y = f.eval(&xs, vs)?;
        if c == 0 {
            values = y.iter().map(|d| d.re).collect();
        }
        for (k, d) in y.iter().enumerate() {
            jac[k][c] = d.eps;
        }
    }
    Ok((values, jac))
}

fn lift<S: Scalar>(x: &[S]) -> Vec<S> {
    x.to_vec()
}

fn re_point<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(|c| c.re()).collect()
}

fn phase_vars(n: usize) -> impl Fn(Var) -> bool {
    move |v| v == Var::V || matches!(v, Var::X(i) if i < n)
}

fn parse_all(what: &str, src: &[impl AsRef<str>]) -> Result<Vec<Expression>> {
    src.iter()
        .enumerate()
        .map(|(i, s)| Expression::parse(s.as_ref()).map_err(|e| Error::parse(format!("{what}[{}]", i + 1), e)))
        .collect()
}

#[derive(Debug, Clone)]
enum SectionSource {
    Components(Vec<Expression>),
    Pair(GeneratingPair),
    Omega(Box<CovectorField>),
    Transformed { base: Box<ProjectiveSectionField>, transition: ChartTransition },
}

/// Affine-chart components `b_1..b_n` of a section over a phase box.
#[derive(Debug, Clone)]
pub struct ProjectiveSectionField {
    source: SectionSource,
    domain: PhaseBox,
}

impl ProjectiveSectionField {
    pub fn from_exprs(b: Vec<Expression>, domain: PhaseBox) -> Result<Self> {
        let n = domain.dim();
        if b.len() != n {
            return Err(Error::Dimension(format!("section needs {n} components, got {}", b.len())));
        }
        for e in &b {
            e.check_vars(phase_vars(n))
                .map_err(|v| Error::Invalid(format!("section component `{e}` uses `{v}`")))?;
        }
        Ok(ProjectiveSectionField { source: SectionSource::Components(b), domain })
    }

    pub fn parse(b: &[impl AsRef<str>], domain: PhaseBox) -> Result<Self> {
        Self::from_exprs(parse_all("b", b)?, domain)
    }

    /// `b_i = −ω_i/ω_{n+1}`; requires transversality `ω_{n+1} ≠ 0` on the
    /// validation lattice.
    pub fn from_omega(omega: CovectorField) -> Result<Self> {
        omega.check_transversal(VALIDATION_LATTICE)?;
        let domain = omega.domain.clone();
        Ok(ProjectiveSectionField { source: SectionSource::Omega(Box::new(omega)), domain })
    }

    /// The section in the primed chart of `transition`: `b'_j = Σ_i (∂x^i/∂x'^j) b_i`,
    /// with `v` unchanged. `primed` is the box in primed coordinates.
    pub fn transformed(&self, transition: &ChartTransition, primed: PhaseBox) -> Result<Self> {
        if transition.dim() != self.dim() || primed.dim() != self.dim() {
            return Err(Error::Dimension("transition dimension does not match the section".into()));
        }
        Ok(ProjectiveSectionField {
            source: SectionSource::Transformed { base: Box::new(self.clone()), transition: transition.clone() },
            domain: primed,
        })
    }

    pub fn domain(&self) -> &PhaseBox {
        &self.domain
    }

    pub fn b_at(&self, x: &[f64], v: f64) -> Result<Vec<f64>> {
        self.eval(x, v)
    }
}

impl PhaseMap for ProjectiveSectionField {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn out_dim(&self) -> usize {
        self.domain.dim()
    }

    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>> {
        self.domain.check(&re_point(x), v.re())?;
        match &self.source {
            SectionSource::Components(b) => Ok(b.iter().map(|e| e.at_phase(x, v)).collect::<Result<_, _>>()?),
            SectionSource::Pair(pair) => {
                let d = pair.w_partials(&lift(x), v)?;
                Ok(d.grad.iter().map(|g| -(*g / d.w_v)).collect())
            }
            SectionSource::Omega(omega) => {
                let w = omega.eval(x, v)?;
                let n = x.len();
                let last = omega.transversal(x, v, w[n])?;
                Ok(w[..n].iter().map(|c| -(*c / last)).collect())
            }
            SectionSource::Transformed { base, transition } => {
                let n = x.len();
                let xo = transition.inverse_at(x)?;
                let jac = transition.inverse_jacobian(x)?;
                let b = base.eval(&xo, v)?;
                Ok((0..n)
                    .map(|j| (0..n).fold(S::cst(0.0), |s, i| s + jac[i * n + j] * b[i]))
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone)]
enum NormalizerSource {
    Expr(Expression),
    Pair(GeneratingPair),
    Omega(Box<CovectorField>),
}

/// The scalar `a` of the normalizing field `X = a ∂/∂v`.
#[derive(Debug, Clone)]
pub struct NormalizingField {
    source: NormalizerSource,
    domain: PhaseBox,
}

impl NormalizingField {
    pub fn from_expr(a: Expression, domain: PhaseBox) -> Result<Self> {
        a.check_vars(phase_vars(domain.dim()))
            .map_err(|v| Error::Invalid(format!("normalizing scalar `{a}` uses `{v}`")))?;
        Ok(NormalizingField { source: NormalizerSource::Expr(a), domain })
    }

    pub fn parse(a: &str, domain: PhaseBox) -> Result<Self> {
        Self::from_expr(Expression::parse(a).map_err(|e| Error::parse("a", e))?, domain)
    }

    /// `a = 1/ω_{n+1}`, the normalizer for which `ω(a ∂/∂v) = 1`.
    pub fn from_omega(omega: CovectorField) -> Result<Self> {
        omega.check_transversal(VALIDATION_LATTICE)?;
        let domain = omega.domain.clone();
        Ok(NormalizingField { source: NormalizerSource::Omega(Box::new(omega)), domain })
    }

    pub fn a_at(&self, x: &[f64], v: f64) -> Result<f64> {
        Ok(self.eval(x, v)?[0])
    }
}

impl PhaseMap for NormalizingField {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>> {
        self.domain.check(&re_point(x), v.re())?;
        let a = match &self.source {
            NormalizerSource::Expr(a) => a.at_phase(x, v)?,
            NormalizerSource::Pair(pair) => {
                let d = pair.w_partials(&lift(x), v)?;
                pair.h_at(d.w)? / d.w_v
            }
            NormalizerSource::Omega(omega) => {
                let w = omega.eval(x, v)?;
                let last = omega.transversal(x, v, w[x.len()])?;
                S::cst(1.0) / last
            }
        };
        Ok(vec![a])
    }
}

#[derive(Debug, Clone)]
enum CovectorSource {
    Components(Vec<Expression>),
    /// `ω_i = −b_i/a`, `ω_{n+1} = 1/a`.
    Section { b: ProjectiveSectionField, a: NormalizingField },
    /// `ω = dW`, exact through AD.
    Differential(Expression),
    /// `α · ω` for a nonvanishing scalar `α`.
    Scaled { base: Box<CovectorField>, factor: Expression },
}

/// A 1-form `ω_1..ω_{n+1}` on `M × ℝ⁺`.
#[derive(Debug, Clone)]
pub struct CovectorField {
    source: CovectorSource,
    domain: PhaseBox,
}

/// Below this `|ω_{n+1}|` (or `|a|`) the affine chart is considered lost.
pub const TRANSVERSALITY_EPS: f64 = 1e-12;
const VALIDATION_LATTICE: usize = 5;

impl CovectorField {
    pub fn from_exprs(omega: Vec<Expression>, domain: PhaseBox) -> Result<Self> {
        let n = domain.dim();
        if omega.len() != n + 1 {
            return Err(Error::Dimension(format!("1-form needs {} components, got {}", n + 1, omega.len())));
        }
        for e in &omega {
            e.check_vars(phase_vars(n)).map_err(|v| Error::Invalid(format!("1-form component `{e}` uses `{v}`")))?;
        }
        let f = CovectorField { source: CovectorSource::Components(omega), domain };
        for (x, v) in f.domain.lattice(VALIDATION_LATTICE) {
            if f.eval(&x, v)?.iter().all(|c| *c == 0.0) {
                return Err(Error::Invalid(format!("1-form vanishes at x = {x:?}, v = {v}")));
            }
        }
        Ok(f)
    }

    pub fn parse(omega: &[impl AsRef<str>], domain: PhaseBox) -> Result<Self> {
        Self::from_exprs(parse_all("omega", omega)?, domain)
    }

    pub fn differential(w: Expression, domain: PhaseBox) -> Result<Self> {
        w.check_vars(phase_vars(domain.dim())).map_err(|v| Error::Invalid(format!("`{w}` uses `{v}`")))?;
        Ok(CovectorField { source: CovectorSource::Differential(w), domain })
    }

    pub fn scaled(&self, factor: Expression) -> Result<Self> {
        factor
            .check_vars(phase_vars(self.domain.dim()))
            .map_err(|v| Error::Invalid(format!("`{factor}` uses `{v}`")))?;
        Ok(CovectorField {
            source: CovectorSource::Scaled { base: Box::new(self.clone()), factor },
            domain: self.domain.clone(),
        })
    }

    pub fn domain(&self) -> &PhaseBox {
        &self.domain
    }

    pub fn omega_at(&self, x: &[f64], v: f64) -> Result<Vec<f64>> {
        self.eval(x, v)
    }

    fn transversal<S: Scalar>(&self, x: &[S], v: S, last: S) -> Result<S> {
        if last.re().abs() < TRANSVERSALITY_EPS {
            return Err(Error::Transversality { what: "omega_{n+1}", x: re_point(x), v: v.re(), value: last.re() });
        }
        Ok(last)
    }

    /// `ω_{n+1} ≠ 0` on a `k^(n+1)` lattice.
    pub fn check_transversal(&self, k: usize) -> Result<()> {
        let n = self.domain.dim();
        for (x, v) in self.domain.lattice(k) {
            let w = self.eval(&x, v)?;
            self.transversal(&x, v, w[n])?;
        }
        Ok(())
    }
}

impl PhaseMap for CovectorField {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn out_dim(&self) -> usize {
        self.domain.dim() + 1
    }

    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>> {
        self.domain.check(&re_point(x), v.re())?;
        match &self.source {
            CovectorSource::Components(c) => Ok(c.iter().map(|e| e.at_phase(x, v)).collect::<Result<_, _>>()?),
            CovectorSource::Section { b, a } => {
                let bs = b.eval(x, v)?;
                let a = a.eval(x, v)?[0];
                if a.re().abs() < TRANSVERSALITY_EPS {
                    return Err(Error::ZeroNormalizer { x: re_point(x), v: v.re(), a: a.re() });
                }
                let mut out: Vec<S> = bs.iter().map(|bi| -(*bi / a)).collect();
                out.push(S::cst(1.0) / a);
                Ok(out)
            }
            CovectorSource::Differential(w) => {
                let n = x.len();
                (0..=n)
                    .map(|c| {
                        let xs: Vec<Dual<S>> = x
                            .iter()
                            .enumerate()
                            .map(|(i, a)| Dual::new(*a, S::cst(if i == c { 1.0 } else { 0.0 })))
                            .collect();
                        let vs = Dual::new(v, S::cst(if c == n { 1.0 } else { 0.0 }));
                        Ok(w.at_phase(&xs, vs)?.eps)
                    })
                    .collect()
            }
            CovectorSource::Scaled { base, factor } => {
                let f = factor.at_phase(x, v)?;
                Ok(base.eval(x, v)?.into_iter().map(|c| c * f).collect())
            }
        }
    }
}

/// `(b_i, a) = (−∇_iW/W_v, h(W)/W_v)` as fields, exact at every point.
pub fn section_from_pair(pair: &GeneratingPair) -> (ProjectiveSectionField, NormalizingField) {
    let domain = pair.domain().clone();
    (
        ProjectiveSectionField { source: SectionSource::Pair(pair.clone()), domain: domain.clone() },
        NormalizingField { source: NormalizerSource::Pair(pair.clone()), domain },
    )
}

/// `ω_i = −b_i/a`, `ω_{n+1} = 1/a`. Requires `a ≠ 0` on the validation
/// lattice and checks `ω(a ∂/∂v) = 1` there.
pub fn omega_from_section(b: &ProjectiveSectionField, a: &NormalizingField) -> Result<CovectorField> {
    let domain = b.domain.clone();
    let n = domain.dim();
    let omega = CovectorField { source: CovectorSource::Section { b: b.clone(), a: a.clone() }, domain };
    for (x, v) in omega.domain.lattice(VALIDATION_LATTICE) {
        let av = a.a_at(&x, v)?;
        if av.abs() < TRANSVERSALITY_EPS {
            return Err(Error::ZeroNormalizer { x, v, a: av });
        }
        let w = omega.eval(&x, v)?;
        let contraction = av * w[n];
        if (contraction - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("ω(X) = {contraction} ≠ 1 at x = {x:?}, v = {v}")));
        }
    }
    Ok(omega)
}

fn closedness_from_jac(b: &[f64], jac: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let n = b.len();
    (jac[i][j] + b[j] * jac[i][n]) - (jac[j][i] + b[i] * jac[j][n])
}

/// `(∂_j + b_j ∂_v) b_i − (∂_i + b_i ∂_v) b_j` (zero-based `i, j < n`).
pub fn closedness_residual(b: &ProjectiveSectionField, x: &[f64], v: f64, i: usize, j: usize) -> Result<f64> {
    let n = b.dim();
    if i >= n || j >= n {
        return Err(Error::Dimension(format!("indices ({i}, {j}) out of range for n = {n}")));
    }
    let (vals, jac) = jacobian(b, x, v)?;
    Ok(closedness_from_jac(&vals, &jac, i, j))
}

/// `(∂_i + b_i ∂_v) a − (∂_v b_i) a` (zero-based `i < n`).
pub fn normalizing_residual(
    b: &ProjectiveSectionField,
    a: &NormalizingField,
    x: &[f64],
    v: f64,
    i: usize,
) -> Result<f64> {
    let n = b.dim();
    if i >= n {
        return Err(Error::Dimension(format!("index {i} out of range for n = {n}")));
    }
    let (bv, bj) = jacobian(b, x, v)?;
    let (av, aj) = jacobian(a, x, v)?;
    Ok(aj[0][i] + bv[i] * aj[0][n] - bj[i][n] * av[0])
}

/// `∂ω_i/∂x^j − ∂ω_j/∂x^i` (zero-based `i, j ≤ n`, index `n` is `v`).
pub fn omega_closedness_residual(omega: &CovectorField, x: &[f64], v: f64, i: usize, j: usize) -> Result<f64> {
    let n = omega.dim();
    if i > n || j > n {
        return Err(Error::Dimension(format!("indices ({i}, {j}) out of range for n + 1 = {}", n + 1)));
    }
    let (_, jac) = jacobian(omega, x, v)?;
    Ok(jac[i][j] - jac[j][i])
}

/// `∂φ/∂x^i + (∂b_i/∂v) φ + (∂φ/∂v) b_i` (zero-based `i < n`).
pub fn integrating_factor_residual<F: PhaseMap + ?Sized>(
    phi: &F,
    b: &ProjectiveSectionField,
    x: &[f64],
    v: f64,
    i: usize,
) -> Result<f64> {
    let n = b.dim();
    if i >= n || phi.out_dim() != 1 {
        return Err(Error::Dimension(format!("index {i} / factor dimension {} invalid", phi.out_dim())));
    }
    let (bv, bj) = jacobian(b, x, v)?;
    let (pv, pj) = jacobian(phi, x, v)?;
    Ok(pj[0][i] + bj[i][n] * pv[0] + pj[0][n] * bv[i])
}

/// `b'_j = Σ_i (∂x^i/∂x'^j) b_i` at the primed point `xp` (with `v` fixed).
pub fn transform_section(b: &ProjectiveSectionField, transition: &ChartTransition, xp: &[f64], v: f64) -> Result<Vec<f64>> {
    let n = b.dim();
    let x = transition.inverse_at(xp)?;
    let jac = transition.inverse_jacobian(xp)?;
    let bo = b.b_at(&x, v)?;
    Ok((0..n).map(|j| (0..n).map(|i| jac[i * n + j] * bo[i]).sum()).collect())
}

/// Scalar field on `M × ℝ⁺` given by one expression in `x1..xn, v`.
#[derive(Debug, Clone)]
pub struct ScalarExpr {
    expr: Expression,
    n: usize,
}

impl ScalarExpr {
    pub fn new(expr: Expression, n: usize) -> Result<Self> {
        expr.check_vars(phase_vars(n)).map_err(|v| Error::Invalid(format!("`{expr}` uses `{v}`")))?;
        Ok(ScalarExpr { expr, n })
    }
}

impl PhaseMap for ScalarExpr {
    fn dim(&self) -> usize {
        self.n
    }
    fn out_dim(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>> {
        Ok(vec![self.expr.at_phase(x, v)?])
    }
}

/// The integrating factor `φ = C(W) · W_v` of a pair, for a user `C(w)`.
#[derive(Debug, Clone)]
pub struct PairIntegratingFactor {
    pub pair: GeneratingPair,
    pub c: Expression,
}

impl PhaseMap for PairIntegratingFactor {
    fn dim(&self) -> usize {
        self.pair.dim()
    }
    fn out_dim(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>> {
        let d = self.pair.w_partials(&lift(x), v)?;
        Ok(vec![self.c.at_w(d.w)? * d.w_v])
    }
}

/// The frame field `L_i = ∂/∂x^i + b_i ∂/∂v` as an `(n+1)`-vector field.
pub struct FrameField<'a> {
    pub b: &'a ProjectiveSectionField,
    pub i: usize,
}

impl PhaseMap for FrameField<'_> {
    fn dim(&self) -> usize {
        self.b.dim()
    }
    fn out_dim(&self) -> usize {
        self.b.dim() + 1
    }
    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>> {
        let n = x.len();
        let b = self.b.eval(x, v)?;
        let mut out = vec![S::cst(0.0); n + 1];
        out[self.i] = S::cst(1.0);
        out[n] = b[self.i];
        Ok(out)
    }
}

/// `a ∂/∂v` as an `(n+1)`-vector field.
pub struct RulingField<'a>(pub &'a NormalizingField);

impl PhaseMap for RulingField<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn out_dim(&self) -> usize {
        self.0.dim() + 1
    }
    fn eval<S: Scalar>(&self, x: &[S], v: S) -> Result<Vec<S>> {
        let n = x.len();
        let mut out = vec![S::cst(0.0); n + 1];
        out[n] = self.0.eval(x, v)?[0];
        Ok(out)
    }
}

/// Lie bracket `[X, Y]^c = X^d ∂_d Y^c − Y^d ∂_d X^c` of vector fields on `M × ℝ⁺`.
pub fn lie_bracket<X: PhaseMap + ?Sized, Y: PhaseMap + ?Sized>(xf: &X, yf: &Y, x: &[f64], v: f64) -> Result<Vec<f64>> {
    let (xv, xj) = jacobian(xf, x, v)?;
    let (yv, yj) = jacobian(yf, x, v)?;
    let m = xv.len();
    Ok((0..m)
        .map(|c| (0..m).map(|d| xv[d] * yj[c][d] - yv[d] * xj[c][d]).sum())
        .collect())
}

/// Max-abs residual over a point set, with its location.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub max_abs: f64,
    /// Signed residual at the argmax.
    pub value: f64,
    pub x: Vec<f64>,
    pub v: f64,
    /// One-based indices of the worst component.
    pub indices: Vec<usize>,
    pub points: usize,
}

impl Sweep {
    fn empty() -> Self {
        Sweep { max_abs: 0.0, value: 0.0, x: vec![], v: 0.0, indices: vec![], points: 0 }
    }
}

/// Evaluates `residuals` at every point in parallel and reduces in point
/// order, so the argmax is deterministic.
pub fn sweep<F>(points: &[(Vec<f64>, f64)], residuals: F) -> Result<Sweep>
where
    F: Fn(&[f64], f64) -> Result<Vec<(Vec<usize>, f64)>> + Sync,
{
    let per_point: Vec<Vec<(Vec<usize>, f64)>> =
        points.par_iter().map(|(x, v)| residuals(x, *v)).collect::<Result<_>>()?;
    let mut best = Sweep::empty();
    best.points = points.len();
    for ((x, v), rs) in points.iter().zip(per_point) {
        for (idx, r) in rs {
            if best.indices.is_empty() || r.abs() > best.max_abs {
                best.max_abs = r.abs();
                best.value = r;
                best.x = x.clone();
                best.v = *v;
                best.indices = idx;
            }
        }
    }
    Ok(best)
}

/// Closedness residual for all pairs `i < j` at every point.
pub fn closedness_sweep(b: &ProjectiveSectionField, points: &[(Vec<f64>, f64)]) -> Result<Sweep> {
    let n = b.dim();
    sweep(points, |x, v| {
        let (vals, jac) = jacobian(b, x, v)?;
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                out.push((vec![i + 1, j + 1], closedness_from_jac(&vals, &jac, i, j)));
            }
        }
        Ok(out)
    })
}

pub fn normalizing_sweep(b: &ProjectiveSectionField, a: &NormalizingField, points: &[(Vec<f64>, f64)]) -> Result<Sweep> {
    let n = b.dim();
    sweep(points, |x, v| {
        let (bv, bj) = jacobian(b, x, v)?;
        let (av, aj) = jacobian(a, x, v)?;
        Ok((0..n).map(|i| (vec![i + 1], aj[0][i] + bv[i] * aj[0][n] - bj[i][n] * av[0])).collect())
    })
}

pub fn omega_closedness_sweep(omega: &CovectorField, points: &[(Vec<f64>, f64)]) -> Result<Sweep> {
    let n = omega.dim();
    sweep(points, |x, v| {
        let (_, jac) = jacobian(omega, x, v)?;
        let mut out = Vec::new();
        for i in 0..=n {
            for j in i + 1..=n {
                out.push((vec![i + 1, j + 1], jac[i][j] - jac[j][i]));
            }
        }
        Ok(out)
    })
}
