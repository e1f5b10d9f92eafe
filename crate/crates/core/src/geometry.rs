//! Riemannian metric in one coordinate chart, Christoffel symbols, index
//! gymnastics, and chart transitions.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Dual, Env, Expression, Scalar, Var};
use crate::grid::CoordBox;

#[derive(Debug, Clone)]
pub enum Metric {
    Euclidean,
    /// `g_ij = exp(2 λ(x)) δ_ij`.
    Conformal { lambda: Expression },
    /// Full `n × n` matrix of expressions, row major.
    Components(Vec<Expression>),
}

/// A coordinate box carrying a Riemannian metric.
#[derive(Debug, Clone)]
pub struct RiemannianChart {
    n: usize,
    domain: CoordBox,
    metric: Metric,
    /// Optional analytic `Γ^k_ij`, indexed `(k * n + i) * n + j`.
    christoffel: Option<Vec<Expression>>,
}

/// `Γ^k_ij` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    /// `Σ_ij Γ^k_ij u^i u^j` for each `k`.
    pub fn quadratic(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += self.data[(k * n + i) * n + j] * u[i] * u[j];
                    }
                }
                s
            })
            .collect()
    }
}

const VALIDATION_LATTICE: usize = 5;
const CHRISTOFFEL_SAMPLES: usize = 50;
const CHRISTOFFEL_TOL: f64 = 1e-8;

fn x_only(n: usize) -> impl Fn(Var) -> bool {
    move |v| matches!(v, Var::X(i) if i < n)
}

impl RiemannianChart {
    pub fn euclidean(domain: CoordBox) -> Result<Self> {
        Self::build(domain, Metric::Euclidean, None)
    }

    pub fn conformal(lambda: Expression, domain: CoordBox) -> Result<Self> {
        Self::build(domain, Metric::Conformal { lambda }, None)
    }

    pub fn from_components(components: Vec<Expression>, domain: CoordBox) -> Result<Self> {
        Self::build(domain, Metric::Components(components), None)
    }

    /// Attach analytic Christoffel symbols; they are checked against the
    /// symbols derived from the metric.
    pub fn with_christoffel(self, symbols: Vec<Expression>) -> Result<Self> {
        Self::build(self.domain, self.metric, Some(symbols))
    }

    fn build(domain: CoordBox, metric: Metric, christoffel: Option<Vec<Expression>>) -> Result<Self> {
        let n = domain.dim();
        if n < 2 {
            return Err(Error::Dimension(format!("chart dimension must be at least 2, got {n}")));
        }
        let exprs: Vec<&Expression> = match &metric {
            Metric::Euclidean => vec![],
            Metric::Conformal { lambda } => vec![lambda],
            Metric::Components(c) => {
                if c.len() != n * n {
                    return Err(Error::Dimension(format!("metric needs {} components, got {}", n * n, c.len())));
                }
                c.iter().collect()
            }
        };
        let symbols = christoffel.iter().flatten();
        if let Some(ref c) = christoffel {
            if c.len() != n * n * n {
                return Err(Error::Dimension(format!("Christoffel table needs {} entries, got {}", n * n * n, c.len())));
            }
        }
        for e in exprs.into_iter().chain(symbols) {
            e.check_vars(x_only(n))
                .map_err(|v| Error::Invalid(format!("metric expression `{e}` uses `{v}`, expected x1..x{n}")))?;
        }
        let chart = RiemannianChart { n, domain, metric, christoffel };
        chart.validate()?;
        Ok(chart)
    }

    /// Positive definiteness and symmetry on the validation lattice; analytic
    /// Christoffel symbols (if any) against the derived ones at seeded points.
    fn validate(&self) -> Result<()> {
        for x in self.domain.lattice(VALIDATION_LATTICE) {
            let g = self.metric_at(&x)?;
            let scale = g.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            for i in 0..self.n {
                for j in 0..i {
                    if (g[i * self.n + j] - g[j * self.n + i]).abs() > 1e-12 * scale.max(1.0) {
                        return Err(Error::Invalid(format!("metric is not symmetric at {x:?}")));
                    }
                }
            }
            self.cholesky(&x, &g)?;
        }
        if self.christoffel.is_some() {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            for _ in 0..CHRISTOFFEL_SAMPLES {
                let x = self.domain.sample(&mut rng);
                let analytic = self.christoffel_at(&x)?;
                let derived = self.derived_christoffel(&x)?;
                let worst = analytic.data.iter().zip(&derived.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                if worst > CHRISTOFFEL_TOL {
                    return Err(Error::Invalid(format!(
                        "analytic Christoffel symbols deviate from the metric by {worst:e} at {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &CoordBox {
        &self.domain
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point has {} coordinates, chart has {}", x.len(), self.n)));
        }
        self.domain.check(x)
    }

    /// `g_ij(x)` row major, generic so that metric derivatives come from AD.
    pub fn metric_at<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let re: Vec<f64> = x.iter().map(|c| c.re()).collect();
        self.check_point(&re)?;
        let n = self.n;
        Ok(match &self.metric {
            Metric::Euclidean => {
                let mut g = vec![S::cst(0.0); n * n];
                for i in 0..n {
                    g[i * n + i] = S::cst(1.0);
                }
                g
            }
            Metric::Conformal { lambda } => {
                let f = (lambda.eval(&Env::point(x))?.scale(2.0)).exp();
                let mut g = vec![S::cst(0.0); n * n];
                for i in 0..n {
                    g[i * n + i] = f;
                }
                g
            }
            Metric::Components(c) => c.iter().map(|e| e.eval(&Env::point(x))).collect::<Result<_, _>>()?,
        })
    }

    fn cholesky(&self, x: &[f64], g: &[f64]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        DMatrix::from_row_slice(self.n, self.n, g)
            .cholesky()
            .ok_or_else(|| Error::SingularMetric { point: x.to_vec() })
    }

    /// `(g_ij, g^ij)` at `x`, both row major.
    pub fn metric_and_inverse(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.metric_at(x)?;
        let inv = self.cholesky(x, &g)?.inverse();
        let mut ginv = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                ginv[i * self.n + j] = inv[(i, j)];
            }
        }
        Ok((g, ginv))
    }

    /// Christoffel symbols at `x`: analytic when supplied, otherwise derived
    /// from the metric with AD derivatives.
    pub fn christoffel_at(&self, x: &[f64]) -> Result<Christoffel> {
        match &self.christoffel {
            None => self.derived_christoffel(x),
            Some(table) => {
                self.check_point(x)?;
                let data = table.iter().map(|e| e.eval(&Env::point(x))).collect::<Result<_, _>>()?;
                Ok(Christoffel { n: self.n, data })
            }
        }
    }

    /// `Γ^k_ij = ½ Σ_m g^km (∂_i g_mj + ∂_j g_mi − ∂_m g_ij)`.
    pub fn derived_christoffel(&self, x: &[f64]) -> Result<Christoffel> {
        let n = self.n;
        let (_, ginv) = self.metric_and_inverse(x)?;
        if matches!(self.metric, Metric::Euclidean) {
            return Ok(Christoffel { n, data: vec![0.0; n * n * n] });
        }
        // dg[(m * n + i) * n + j] = ∂_m g_ij
        let mut dg = vec![0.0; n * n * n];
        for m in 0..n {
            let xd: Vec<Dual<f64>> =
                x.iter().enumerate().map(|(i, c)| Dual::new(*c, if i == m { 1.0 } else { 0.0 })).collect();
            let g = self.metric_at(&xd)?;
            for (ij, gij) in g.iter().enumerate() {
                dg[m * n * n + ij] = gij.eps;
            }
        }
        let d = |m: usize, i: usize, j: usize| dg[(m * n + i) * n + j];
        let mut data = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for m in 0..n {
                        s += ginv[k * n + m] * (d(i, m, j) + d(j, m, i) - d(m, i, j));
                    }
                    data[(k * n + i) * n + j] = 0.5 * s;
                }
            }
        }
        Ok(Christoffel { n, data })
    }

    pub fn inner(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<f64> {
        let g = self.metric_at(x)?;
        Ok(contract(&g, u, w))
    }

    pub fn norm(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        Ok(self.inner(x, u, u)?.sqrt())
    }

    /// `u_k = g_kj u^j`.
    pub fn lower(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let g = self.metric_at(x)?;
        Ok(mat_vec(&g, u))
    }

    /// `α^k = g^kj α_j`.
    pub fn raise(&self, x: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
        let (_, ginv) = self.metric_and_inverse(x)?;
        Ok(mat_vec(&ginv, alpha))
    }
}

/// `Σ g_ij u^i w^j` for a row-major `g`.
pub fn contract<S: Scalar>(g: &[f64], u: &[S], w: &[S]) -> S {
    let n = u.len();
    let mut s = S::cst(0.0);
    for i in 0..n {
        for j in 0..n {
            let gij = g[i * n + j];
            if gij != 0.0 {
                s = s + u[i] * w[j].scale(gij);
            }
        }
    }
    s
}

pub fn mat_vec<S: Scalar>(g: &[f64], u: &[S]) -> Vec<S> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let mut s = S::cst(0.0);
            for j in 0..n {
                let gij = g[i * n + j];
                if gij != 0.0 {
                    s = s + u[j].scale(gij);
                }
            }
            s
        })
        .collect()
}

/// A change of coordinates `x' = forward(x)` with its inverse, valid on an
/// overlap box (given in unprimed coordinates). The inverse expressions use
/// `x1..xn` to denote the primed coordinates.
#[derive(Debug, Clone)]
pub struct ChartTransition {
    forward: Vec<Expression>,
    inverse: Vec<Expression>,
    overlap: CoordBox,
}

const TRANSITION_TOL: f64 = 1e-10;

impl ChartTransition {
    pub fn new(forward: Vec<Expression>, inverse: Vec<Expression>, overlap: CoordBox) -> Result<Self> {
        let n = overlap.dim();
        if forward.len() != n || inverse.len() != n {
            return Err(Error::Dimension(format!(
                "transition maps need {n} components, got {} and {}",
                forward.len(),
                inverse.len()
            )));
        }
        for e in forward.iter().chain(&inverse) {
            e.check_vars(x_only(n))
                .map_err(|v| Error::Invalid(format!("transition expression `{e}` uses `{v}`")))?;
        }
        let t = ChartTransition { forward, inverse, overlap };
        for x in t.overlap.lattice(VALIDATION_LATTICE) {
            let xp = t.forward_at(&x)?;
            let back = t.inverse_at(&xp)?;
            let again = t.forward_at(&back)?;
            let err = x.iter().zip(&back).chain(xp.iter().zip(&again)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if err > TRANSITION_TOL {
                return Err(Error::Invalid(format!("transition maps are not mutually inverse at {x:?} (error {err:e})")));
            }
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.overlap.dim()
    }

    pub fn overlap(&self) -> &CoordBox {
        &self.overlap
    }

    pub fn forward_exprs(&self) -> &[Expression] {
        &self.forward
    }

    pub fn inverse_exprs(&self) -> &[Expression] {
        &self.inverse
    }

    pub fn forward_at<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        Ok(self.forward.iter().map(|e| e.eval(&Env::point(x))).collect::<Result<_, _>>()?)
    }

    /// Unprimed coordinates of the primed point `xp`; errors outside the overlap.
    pub fn inverse_at<S: Scalar>(&self, xp: &[S]) -> Result<Vec<S>> {
        let x: Vec<S> = self.inverse.iter().map(|e| e.eval(&Env::point(xp))).collect::<Result<_, _>>()?;
        let re: Vec<f64> = x.iter().map(|c| c.re()).collect();
        self.overlap.check(&re)?;
        Ok(x)
    }

    /// `J[i * n + j] = ∂x^i/∂x'^j` at the primed point `xp`.
    pub fn inverse_jacobian<S: Scalar>(&self, xp: &[S]) -> Result<Vec<S>> {
        let n = self.dim();
        let mut jac = vec![S::cst(0.0); n * n];
        for j in 0..n {
            let seeded: Vec<Dual<S>> = xp
                .iter()
                .enumerate()
                .map(|(k, c)| Dual::new(*c, S::cst(if k == j { 1.0 } else { 0.0 })))
                .collect();
            let x = self.inverse_at(&seeded)?;
            for i in 0..n {
                jac[i * n + j] = x[i].eps;
            }
        }
        let det = DMatrix::from_row_slice(n, n, &jac.iter().map(|c| c.re()).collect::<Vec<_>>()).determinant();
        if det.abs() < 1e-12 {
            return Err(Error::Invalid(format!("transition Jacobian is singular at {:?}", xp.iter().map(|c| c.re()).collect::<Vec<_>>())));
        }
        Ok(jac)
    }

    /// `J[j * n + i] = ∂x'^j/∂x^i` at the unprimed point `x`.
    pub fn forward_jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut jac = vec![0.0; n * n];
        for i in 0..n {
            let seeded: Vec<Dual<f64>> =
                x.iter().enumerate().map(|(k, c)| Dual::new(*c, if k == i { 1.0 } else { 0.0 })).collect();
            let xp = self.forward_at(&seeded)?;
            for j in 0..n {
                jac[j * n + i] = xp[j].eps;
            }
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn e(s: &str) -> Expression {
        Expression::parse(s).unwrap()
    }

    fn conformal3() -> RiemannianChart {
        RiemannianChart::conformal(e("x1"), CoordBox::cube(3, -1.0, 1.0)).unwrap()
    }

    #[test]
    fn euclidean_christoffel_vanishes() {
        let c = RiemannianChart::euclidean(CoordBox::cube(3, -2.0, 2.0)).unwrap();
        let g = c.christoffel_at(&[0.3, -1.0, 1.5]).unwrap();
        assert!(g.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn conformal_christoffel_at_origin() {
        let g = conformal3().christoffel_at(&[0.0, 0.0, 0.0]).unwrap();
        let mut expected = vec![0.0; 27];
        let idx = |k: usize, i: usize, j: usize| (k * 3 + i) * 3 + j;
        expected[idx(0, 0, 0)] = 1.0;
        expected[idx(0, 1, 1)] = -1.0;
        expected[idx(0, 2, 2)] = -1.0;
        expected[idx(1, 0, 1)] = 1.0;
        expected[idx(1, 1, 0)] = 1.0;
        expected[idx(2, 0, 2)] = 1.0;
        expected[idx(2, 2, 0)] = 1.0;
        for (a, b) in g.data.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14, "{:?}", g.data);
        }
    }

    // Oracle: Christoffel symbols from central differences of the metric,
    // fed through the same index formula by hand.
    #[test]
    fn derived_christoffel_matches_fd_metric_derivatives() {
        let chart = RiemannianChart::from_components(
            vec![e("1 + x2^2"), e("0.3*x1"), e("0"), e("0.3*x1"), e("exp(x1)"), e("0"), e("0"), e("0"), e("2 + sin(x3)")],
            CoordBox::cube(3, -1.0, 1.0),
        )
        .unwrap();
        let x = [0.2, -0.4, 0.7];
        let h = 1e-6;
        let n = 3;
        let mut dg = vec![0.0; 27];
        for m in 0..n {
            let mut p = x;
            p[m] += h;
            let mut q = x;
            q[m] -= h;
            let gp = chart.metric_at(&p).unwrap();
            let gq = chart.metric_at(&q).unwrap();
            for ij in 0..9 {
                dg[m * 9 + ij] = (gp[ij] - gq[ij]) / (2.0 * h);
            }
        }
        let (_, ginv) = chart.metric_and_inverse(&x).unwrap();
        let got = chart.christoffel_at(&x).unwrap();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for m in 0..n {
                        s += ginv[k * n + m] * (dg[(i * n + m) * n + j] + dg[(j * n + m) * n + i] - dg[(m * n + i) * n + j]);
                    }
                    assert!((got.get(k, i, j) - 0.5 * s).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn christoffel_symmetric_in_lower_indices() {
        let chart = RiemannianChart::from_components(
            vec![e("1 + x2^2"), e("0.3*x1"), e("0.3*x1"), e("exp(x1)")],
            CoordBox::cube(2, -1.0, 1.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = chart.domain().sample(&mut rng);
            let g = chart.christoffel_at(&x).unwrap();
            for k in 0..2 {
                assert_eq!(g.get(k, 0, 1), g.get(k, 1, 0));
            }
        }
        let c = conformal3();
        for _ in 0..100 {
            let x = c.domain().sample(&mut rng);
            let g = c.christoffel_at(&x).unwrap();
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert_eq!(g.get(k, i, j), g.get(k, j, i));
                    }
                }
            }
        }
    }

    #[test]
    fn analytic_christoffel_accepted_and_wrong_one_rejected() {
        let mut table = vec![e("0"); 27];
        let idx = |k: usize, i: usize, j: usize| (k * 3 + i) * 3 + j;
        table[idx(0, 0, 0)] = e("1");
        table[idx(0, 1, 1)] = e("-1");
        table[idx(0, 2, 2)] = e("-1");
        table[idx(1, 0, 1)] = e("1");
        table[idx(1, 1, 0)] = e("1");
        table[idx(2, 0, 2)] = e("1");
        table[idx(2, 2, 0)] = e("1");
        let chart = conformal3().with_christoffel(table.clone()).unwrap();
        assert_eq!(chart.christoffel_at(&[0.5, 0.1, 0.1]).unwrap().get(0, 1, 1), -1.0);
        table[idx(0, 0, 0)] = e("1.01");
        assert!(conformal3().with_christoffel(table).is_err());
    }

    #[test]
    fn norms_and_index_gymnastics() {
        let flat = RiemannianChart::euclidean(CoordBox::cube(3, -1.0, 1.0)).unwrap();
        assert_eq!(flat.norm(&[0.0; 3], &[1.0, 0.0, 0.0]).unwrap(), 1.0);
        let c = conformal3();
        let nrm = c.norm(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((nrm - std::f64::consts::E).abs() < 1e-14);
        assert!((c.inner(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap() - nrm * nrm).abs() < 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = c.domain().sample(&mut rng);
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let back = c.raise(&x, &c.lower(&x, &u).unwrap()).unwrap();
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_box_and_indefinite_metrics_fail() {
        let c = conformal3();
        assert!(matches!(c.christoffel_at(&[1.5, 0.0, 0.0]), Err(Error::OutOfDomain { .. })));
        let bad = RiemannianChart::from_components(vec![e("1"), e("0"), e("0"), e("x1")], CoordBox::cube(2, -1.0, 1.0));
        assert!(matches!(bad, Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn rotation_transition_round_trips() {
        let t = ChartTransition::new(vec![e("x2"), e("-x1"), e("x3")], vec![e("-x2"), e("x1"), e("x3")], CoordBox::cube(3, -1.0, 1.0))
            .unwrap();
        let xp = t.forward_at(&[0.2, 0.5, -0.3]).unwrap();
        assert_eq!(xp, vec![0.5, -0.2, -0.3]);
        let jac = t.inverse_jacobian(&xp).unwrap();
        assert_eq!(jac, vec![0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(ChartTransition::new(vec![e("x2"), e("-x1"), e("x3")], vec![e("x2"), e("x1"), e("x3")], CoordBox::cube(3, -1.0, 1.0))
            .is_err());
    }
}
