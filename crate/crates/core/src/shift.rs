//! Normal shift of a hypersurface patch along trajectories, and the
//! orthogonality residuals that witness it.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{integrate, reference_w, HaltReason, StepPolicy, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::expr::{Dual, Expression, Scalar, Var};
use crate::field::{Forces, PairForce};
use crate::geometry::{contract, RiemannianChart};
use crate::grid::{linspace, CoordBox};
use crate::pair::GeneratingPair;
use crate::roots::{safeguarded_newton, scan_brackets, NewtonOptions};

const RANK_EPS: f64 = 1e-10;
const SPEED_SCAN: usize = 129;

/// An embedded patch `x^k(u^1, …, u^{n−1})` sampled on a tensor grid.
#[derive(Debug, Clone)]
pub struct HypersurfacePatch {
    embedding: Vec<Expression>,
    params: CoordBox,
    resolution: usize,
}

impl HypersurfacePatch {
    pub fn new(embedding: Vec<Expression>, params: CoordBox, resolution: usize) -> Result<Self> {
        let n = embedding.len();
        if n < 2 || params.dim() != n - 1 {
            return Err(Error::Dimension(format!("{n} embedding components need {} parameters, got {}", n.saturating_sub(1), params.dim())));
        }
        if resolution < 3 {
            return Err(Error::GridTooCoarse(format!("resolution {resolution} < 3")));
        }
        for e in &embedding {
            e.check_vars(|v| matches!(v, Var::U(a) if a < n - 1))
                .map_err(|v| Error::Invalid(format!("embedding component `{e}` uses `{v}`")))?;
        }
        let patch = HypersurfacePatch { embedding, params, resolution };
        for u in patch.grid() {
            patch.tangents_at(&u)?;
        }
        Ok(patch)
    }

    pub fn parse(embedding: &[impl AsRef<str>], params: CoordBox, resolution: usize) -> Result<Self> {
        let exprs = embedding
            .iter()
            .enumerate()
            .map(|(k, s)| Expression::parse(s.as_ref()).map_err(|e| Error::parse(format!("embedding[{}]", k + 1), e)))
            .collect::<Result<_>>()?;
        Self::new(exprs, params, resolution)
    }

    pub fn with_resolution(&self, resolution: usize) -> Result<Self> {
        Self::new(self.embedding.clone(), self.params.clone(), resolution)
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.embedding.len()
    }

    pub fn params(&self) -> &CoordBox {
        &self.params
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Parameter grid, lexicographic with the last parameter fastest.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        self.params.lattice(self.resolution)
    }

    /// Grid spacing along each parameter.
    pub fn spacing(&self) -> Vec<f64> {
        self.params.lo.iter().zip(&self.params.hi).map(|(a, b)| (b - a) / (self.resolution - 1) as f64).collect()
    }

    pub fn point_at<S: Scalar>(&self, u: &[S]) -> Result<Vec<S>> {
        Ok(self.embedding.iter().map(|e| e.eval(&crate::expr::Env::params(u))).collect::<Result<_, _>>()?)
    }

    /// `τ_a = ∂x/∂u^a`; fails when they are linearly dependent.
    pub fn tangents_at(&self, u: &[f64]) -> Result<Vec<Vec<f64>>> {
        let m = self.params.dim();
        let mut out = Vec::with_capacity(m);
        for a in 0..m {
            let ud: Vec<Dual<f64>> = u.iter().enumerate().map(|(b, c)| Dual::new(*c, if a == b { 1.0 } else { 0.0 })).collect();
            out.push(self.point_at(&ud)?.iter().map(|d| d.eps).collect());
        }
        let g: Vec<f64> = {
            let n = self.dim();
            let mut id = vec![0.0; n * n];
            (0..n).for_each(|i| id[i * n + i] = 1.0);
            id
        };
        if orthonormalize(&g, &out).is_none() {
            return Err(Error::RankDeficient(u.to_vec()));
        }
        Ok(out)
    }
}

/// Gram–Schmidt in the metric `g`; `None` on rank deficiency.
fn orthonormalize(g: &[f64], vs: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let scale = contract(g, v, v).sqrt();
        let mut w = v.clone();
        for e in &basis {
            let c = contract(g, &w, e);
            w.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        }
        let norm = contract(g, &w, &w).sqrt();
        if !(norm > RANK_EPS * scale.max(1.0)) {
            return None;
        }
        basis.push(w.iter().map(|c| c / norm).collect());
    }
    Some(basis)
}

/// Unit normal `n` at `u`: `g(n, τ_a) = 0`, `g(n, n) = 1`, oriented so that
/// `reference_k n^k > 0`.
pub fn unit_normal(chart: &RiemannianChart, patch: &HypersurfacePatch, u: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    let x = patch.point_at(u)?;
    let tangents = patch.tangents_at(u)?;
    let (g, ginv) = chart.metric_and_inverse(&x)?;
    let basis = orthonormalize(&g, &tangents).ok_or_else(|| Error::RankDeficient(u.to_vec()))?;
    let n = chart.dim();
    let mut candidates = vec![crate::geometry::mat_vec(&ginv, reference)];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        candidates.push(e);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in candidates {
        let mut w = c;
        for e in &basis {
            let p = contract(&g, &w, e);
            w.iter_mut().zip(e).for_each(|(a, b)| *a -= p * b);
        }
        let norm = contract(&g, &w, &w).sqrt();
        if best.as_ref().is_none_or(|(m, _)| norm > *m) {
            best = Some((norm, w));
        }
        if norm > 0.5 {
            break;
        }
    }
    let (norm, w) = best.ok_or_else(|| Error::RankDeficient(u.to_vec()))?;
    let mut normal: Vec<f64> = w.iter().map(|c| c / norm).collect();
    let pairing: f64 = reference.iter().zip(&normal).map(|(r, c)| r * c).sum();
    if pairing.abs() < 1e-12 {
        return Err(Error::Invalid(format!("reference covector {reference:?} is tangent to the patch at u = {u:?}")));
    }
    if pairing < 0.0 {
        normal.iter_mut().for_each(|c| *c = -*c);
    }
    Ok(normal)
}

#[derive(Debug, Clone, Serialize)]
pub struct InitialSpeed {
    pub nu: f64,
    /// Number of sign changes of `W(x(u), ·) − w0` seen on the scan.
    pub roots: usize,
}

/// `ν > 0` with `W(x(u), ν) = w0`, searched in the pair's `v_range`. With
/// several roots the first (smallest) is taken and a warning logged.
pub fn solve_initial_speed(pair: &GeneratingPair, patch: &HypersurfacePatch, u: &[f64], w0: f64) -> Result<InitialSpeed> {
    let x = patch.point_at(u)?;
    let (lo, hi) = pair.domain().v_range;
    let brackets = scan_brackets(|v| Ok(pair.w_at(&x, v)? - w0), lo, hi, SPEED_SCAN);
    let Some(&(a, b)) = brackets.first() else {
        return Err(Error::NoBracket(format!("W(x, v) = {w0} has no solution v in [{lo}, {hi}] at x = {x:?}")));
    };
    if brackets.len() > 1 {
        warn!("W(x, v) = {w0} has {} roots at x = {x:?}; using the smallest", brackets.len());
    }
    let nu = if a == b {
        a
    } else {
        safeguarded_newton(
            |v| {
                let d = pair.w_partials(&x, v)?;
                Ok((d.w - w0, d.w_v))
            },
            a,
            b,
            0.5 * (a + b),
            NewtonOptions::default(),
        )?
    };
    let r = (pair.w_at(&x, nu)? - w0).abs();
    if r >= 1e-10 {
        return Err(Error::NoBracket(format!("|W(x, ν) − w0| = {r:e} at x = {x:?}")));
    }
    Ok(InitialSpeed { nu, roots: brackets.len() })
}

/// `w0` default: median of `W(x(p), v_mid)` over the grid.
pub fn default_w0(pair: &GeneratingPair, patch: &HypersurfacePatch) -> Result<f64> {
    let (lo, hi) = pair.domain().v_range;
    let v = 0.5 * (lo + hi);
    let mut ws: Vec<f64> = patch.grid().iter().map(|u| pair.w_at(&patch.point_at(u)?, v)).collect::<Result<_>>()?;
    ws.sort_by(f64::total_cmp);
    let m = ws.len();
    Ok(if m % 2 == 1 { ws[m / 2] } else { 0.5 * (ws[m / 2 - 1] + ws[m / 2]) })
}

#[derive(Debug, Clone)]
pub struct ShiftOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Keep the full front and residual matrix every this many steps.
    pub sample_every: usize,
    /// Orientation covector for the normal (default `dx¹`).
    pub reference: Option<Vec<f64>>,
    /// Replaces the level-set speed by a constant (negative control).
    pub speed_override: Option<f64>,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions { t_end: 0.5, dt: 1e-3, sample_every: 50, reference: None, speed_override: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HaltedPoint {
    pub index: usize,
    pub u: Vec<f64>,
    pub t: f64,
    pub reason: HaltReason,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftResult {
    pub w0: f64,
    pub params: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
    /// Every time step.
    pub times: Vec<f64>,
    /// `max_{p,a} |R|` at every time step.
    pub max_residual_vs_t: Vec<f64>,
    pub max_residual: f64,
    /// `R` at `t = 0` with exact tangents of the patch.
    pub initial_orthogonality: f64,
    /// `max_{p,t} |W(f_t(p), |v_p(t)|) − w(t)|`.
    pub w_deviation: f64,
    pub sample_times: Vec<f64>,
    /// `fronts[s][p]`: position of grid point `p` at sample `s` (absent once halted).
    pub fronts: Vec<Vec<Option<Vec<f64>>>>,
    /// `residuals[s][p][a]`.
    pub residuals: Vec<Vec<Vec<Option<f64>>>>,
    pub halted: Vec<HaltedPoint>,
    #[serde(skip)]
    pub records: Vec<TrajectoryRecord>,
}

pub fn normal_shift(
    chart: &RiemannianChart,
    pair: &GeneratingPair,
    patch: &HypersurfacePatch,
    w0: f64,
    opts: &ShiftOptions,
) -> Result<ShiftResult> {
    let n = chart.dim();
    if patch.dim() != n || pair.dim() != n {
        return Err(Error::Dimension("chart, pair and patch dimensions differ".into()));
    }
    let reference = opts.reference.clone().unwrap_or_else(|| {
        let mut r = vec![0.0; n];
        r[0] = 1.0;
        r
    });
    let params = patch.grid();
    let forces = Forces::new(chart);
    let force = PairForce { forces, pair };
    let policy = StepPolicy::Fixed { dt: opts.dt };

    let starts: Vec<(Vec<f64>, Vec<f64>, f64)> = params
        .par_iter()
        .map(|u| {
            let x = patch.point_at(u)?;
            let normal = unit_normal(chart, patch, u, &reference)?;
            let nu = match opts.speed_override {
                Some(nu) => nu,
                None => solve_initial_speed(pair, patch, u, w0)?.nu,
            };
            Ok((x, normal, nu))
        })
        .collect::<Result<_>>()?;

    let initial_orthogonality = params
        .iter()
        .zip(&starts)
        .map(|(u, (x, normal, _))| {
            let g = chart.metric_at(x)?;
            Ok(patch.tangents_at(u)?.iter().map(|t| cosine(&g, normal, t)).fold(0.0f64, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let records: Vec<TrajectoryRecord> = starts
        .par_iter()
        .map(|(x, normal, nu)| {
            let v0: Vec<f64> = normal.iter().map(|c| c * nu).collect();
            integrate(&force, x, &v0, (0.0, opts.t_end), policy)
        })
        .collect::<Result<_>>()?;

    let steps = ((opts.t_end / opts.dt).round() as usize) + 1;
    let times: Vec<f64> = (0..steps).map(|k| k as f64 * opts.dt).collect();
    let halted: Vec<HaltedPoint> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.completed())
        .map(|(i, r)| HaltedPoint {
            index: i,
            u: params[i].clone(),
            t: r.t.last().copied().unwrap_or(0.0),
            reason: r.halt.clone(),
        })
        .collect();

    let shape = vec![patch.resolution(); patch.params().dim()];
    let spacing = patch.spacing();
    let mut max_residual_vs_t = Vec::with_capacity(steps);
    let mut sample_times = Vec::new();
    let mut fronts = Vec::new();
    let mut residuals = Vec::new();
    for (k, t) in times.iter().enumerate() {
        let alive = |p: usize| records[p].len() > k;
        let r = front_residuals(chart, &records, k, &shape, &spacing, &alive)?;
        let worst = r.iter().flatten().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
        max_residual_vs_t.push(worst);
        if k % opts.sample_every.max(1) == 0 || k + 1 == steps {
            sample_times.push(*t);
            fronts.push((0..records.len()).map(|p| alive(p).then(|| records[p].x[k].clone())).collect());
            residuals.push(r);
        }
    }

    let w_deviation = match records.iter().find(|r| r.completed()) {
        None => f64::NAN,
        Some(full) => {
            let reference_w = reference_w(full, pair, w0)?;
            let mut worst = 0.0f64;
            for rec in &records {
                for k in 0..rec.len() {
                    worst = worst.max((pair.w_at(&rec.x[k], rec.speed[k])? - reference_w[k]).abs());
                }
            }
            worst
        }
    };

    Ok(ShiftResult {
        w0,
        params,
        nu: starts.iter().map(|s| s.2).collect(),
        max_residual: max_residual_vs_t.iter().copied().fold(0.0, f64::max),
        times,
        max_residual_vs_t,
        initial_orthogonality,
        w_deviation,
        sample_times,
        fronts,
        residuals,
        halted,
        records,
    })
}

fn cosine(g: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (contract(g, a, b) / (contract(g, a, a).sqrt() * contract(g, b, b).sqrt())).abs()
}

/// Flat index of a multi-index, last axis fastest.
fn flat(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, s)| acc * s + i)
}

fn unflat(mut p: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = p % shape[a];
        p /= shape[a];
    }
    idx
}

/// `R[p][a] = g(ẋ, τ̃_a)/(|ẋ| |τ̃_a|)` at step `k`, with `τ̃_a` from central
/// differences across the shifted grid: fourth-order five-point stencils,
/// one-sided near edges, falling back to second order around halted points.
fn front_residuals(
    chart: &RiemannianChart,
    records: &[TrajectoryRecord],
    k: usize,
    shape: &[usize],
    spacing: &[f64],
    alive: &(dyn Fn(usize) -> bool + Sync),
) -> Result<Vec<Vec<Option<f64>>>> {
    let m = shape.len();
    let surviving = (0..records.len()).filter(|p| alive(*p)).count();
    if surviving > 0 && surviving < 3usize.pow(m as u32) {
        return Err(Error::GridTooCoarse(format!("{surviving} trajectories survive at step {k}")));
    }
    (0..records.len())
        .into_par_iter()
        .map(|p| {
            if !alive(p) {
                return Ok(vec![None; m]);
            }
            let idx = unflat(p, shape);
            let x = &records[p].x[k];
            let vel = &records[p].vel[k];
            let g = chart.metric_at(x)?;
            (0..m)
                .map(|a| {
                    let at = |offset: isize| -> Option<&Vec<f64>> {
                        let i = idx[a] as isize + offset;
                        if i < 0 || i >= shape[a] as isize {
                            return None;
                        }
                        let mut j = idx.clone();
                        j[a] = i as usize;
                        let q = flat(&j, shape);
                        alive(q).then(|| &records[q].x[k])
                    };
                    let h = spacing[a];
                    let combine = |nodes: &[(isize, f64)], denom: f64| -> Option<Vec<f64>> {
                        let pts: Option<Vec<(&Vec<f64>, f64)>> = nodes.iter().map(|(o, c)| at(*o).map(|p| (p, *c))).collect();
                        pts.map(|pts| (0..x.len()).map(|i| pts.iter().map(|(p, c)| c * p[i]).sum::<f64>() / (denom * h)).collect())
                    };
                    let tangent = fourth_order_nodes(idx[a], shape[a])
                        .and_then(|nodes| combine(&nodes, 12.0))
                        .or_else(|| combine(&[(-1, -1.0), (1, 1.0)], 2.0))
                        .or_else(|| combine(&[(0, -3.0), (1, 4.0), (2, -1.0)], 2.0))
                        .or_else(|| combine(&[(0, 3.0), (-1, -4.0), (-2, 1.0)], 2.0));
                    Ok(tangent.map(|t| contract(&g, vel, &t) / (contract(&g, vel, vel).sqrt() * contract(&g, &t, &t).sqrt())))
                })
                .collect()
        })
        .collect()
}

/// Offsets and weights (over `12h`) of the fourth-order first-derivative
/// stencil at index `i` of `len`.
fn fourth_order_nodes(i: usize, len: usize) -> Option<Vec<(isize, f64)>> {
    const EDGE: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const NEAR: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    if len < 5 {
        return None;
    }
    let nodes = |first: isize, w: &[f64; 5], sign: f64| (0..5).map(|k| (first + k as isize, sign * w[k])).collect();
    let mirrored = |w: &[f64; 5]| -> Vec<(isize, f64)> { (0..5).map(|k| (-(k as isize), -w[k])).collect() };
    Some(match i {
        0 => nodes(0, &EDGE, 1.0),
        1 => nodes(-1, &NEAR, 1.0),
        _ if i + 1 == len => mirrored(&EDGE),
        _ if i + 2 == len => (0..5).map(|k| (1 - k as isize, -NEAR[k])).collect(),
        _ => nodes(-2, &CENTRAL, 1.0),
    })
}

/// Evenly spaced parameter values, exposed for CSV output.
pub fn param_axis(patch: &HypersurfacePatch, a: usize) -> Vec<f64> {
    linspace(patch.params().lo[a], patch.params().hi[a], patch.resolution())
}
