//! Trajectories of `ẍ^k + Γ^k_ij ẋ^i ẋ^j = F^k` and the conservation law
//! `dW/dt = h(W)` along them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Dual, Scalar};
use crate::field::{ForceField, Forces, PhaseState};
use crate::geometry::RiemannianChart;
use crate::ode::{dopri5, rk4_step, AdaptiveOptions};
use crate::pair::GeneratingPair;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_ADAPTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepPolicy {
    Fixed { dt: f64 },
    Adaptive { tol: f64 },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Fixed { dt: DEFAULT_DT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Completed,
    /// The state left the chart box or the phase box of the force law.
    DomainExit { point: Vec<f64> },
    /// `|v|` fell below the minimum speed.
    BelowMinSpeed { speed: f64 },
}

/// States on the time grid together with the reason the run ended.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub policy: StepPolicy,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub vel: Vec<Vec<f64>>,
    pub speed: Vec<f64>,
    pub halt: HaltReason,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.halt == HaltReason::Completed
    }

    pub fn last_state(&self) -> PhaseState {
        PhaseState::new(self.x[self.len() - 1].clone(), self.vel[self.len() - 1].clone())
    }
}

fn halt_for(err: &Error) -> Option<HaltReason> {
    match err {
        Error::OutOfDomain { point } => Some(HaltReason::DomainExit { point: point.clone() }),
        Error::ZeroVelocity { speed, .. } => Some(HaltReason::BelowMinSpeed { speed: *speed }),
        _ => None,
    }
}

/// Right-hand side of the first-order system in `y = (x, ẋ)`.
pub fn acceleration(force: &dyn ForceField, x: &[f64], vel: &[f64]) -> Result<Vec<f64>> {
    let chart = force.chart();
    let lower = force.force_lower(x, vel)?;
    let upper = chart.raise(x, &lower)?;
    let gamma = chart.christoffel_at(x)?.quadratic(vel);
    Ok(upper.iter().zip(&gamma).map(|(f, g)| f - g).collect())
}

/// Integrates from `(x0, v0)` over `t_span`. Leaving the domain or dropping
/// below the minimum speed ends the run with a recorded halt; other failures
/// are errors.
pub fn integrate(
    force: &dyn ForceField,
    x0: &[f64],
    v0: &[f64],
    t_span: (f64, f64),
    policy: StepPolicy,
) -> Result<TrajectoryRecord> {
    let n = x0.len();
    let chart = force.chart();
    if v0.len() != n || chart.dim() != n {
        return Err(Error::Dimension(format!("state has {n} + {} components, chart has {}", v0.len(), chart.dim())));
    }
    let rhs = |_: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (x, u) = y.split_at(n);
        let mut out = u.to_vec();
        out.extend(acceleration(force, x, u)?);
        Ok(out)
    };
    let mut rec = TrajectoryRecord { policy, t: vec![], x: vec![], vel: vec![], speed: vec![], halt: HaltReason::Completed };
    let push = |rec: &mut TrajectoryRecord, t: f64, y: &[f64]| -> Result<()> {
        let (x, u) = y.split_at(n);
        rec.t.push(t);
        rec.x.push(x.to_vec());
        rec.vel.push(u.to_vec());
        rec.speed.push(chart.norm(x, u)?);
        Ok(())
    };
    let y0: Vec<f64> = x0.iter().chain(v0).copied().collect();
    // Validates the initial state and records the halt if it is already out.
    if let Err(e) = rhs(t_span.0, &y0) {
        return match halt_for(&e) {
            Some(h) => {
                rec.halt = h;
                Ok(rec)
            }
            None => Err(e),
        };
    }
    push(&mut rec, t_span.0, &y0)?;
    match policy {
        StepPolicy::Fixed { dt } => {
            if !(dt > 0.0) {
                return Err(Error::Invalid(format!("time step {dt} must be positive")));
            }
            let steps = ((t_span.1 - t_span.0) / dt).round() as usize;
            let mut y = y0;
            for k in 0..steps {
                let t = t_span.0 + k as f64 * dt;
                let next = rk4_step(&rhs, t, &y, dt).and_then(|yn| rhs(t + dt, &yn).map(|_| yn));
                match next {
                    Ok(yn) => {
                        y = yn;
                        push(&mut rec, t_span.0 + (k + 1) as f64 * dt, &y)?;
                    }
                    Err(e) => {
                        rec.halt = halt_for(&e).ok_or(e)?;
                        break;
                    }
                }
            }
        }
        StepPolicy::Adaptive { tol } => {
            let mut halt = None;
            let result = dopri5(&rhs, t_span.0, &y0, t_span.1, AdaptiveOptions::with_tol(tol), |t, y| {
                if let Err(e) = rhs(t, y) {
                    halt = Some(halt_for(&e).ok_or(e)?);
                    return Ok(false);
                }
                push(&mut rec, t, y)?;
                Ok(true)
            });
            match result {
                Ok(_) => {}
                Err(e) => match halt_for(&e) {
                    Some(h) => halt = Some(h),
                    None => return Err(e),
                },
            }
            if let Some(h) = halt {
                rec.halt = h;
            }
        }
    }
    Ok(rec)
}

/// Solution of `ẇ = h(w)` on the time grid of `rec`, integrated with the
/// record's scheme.
pub fn reference_w(rec: &TrajectoryRecord, pair: &GeneratingPair, w0: f64) -> Result<Vec<f64>> {
    let f = |_: f64, y: &[f64]| -> Result<Vec<f64>> { Ok(vec![pair.h_at(y[0])?]) };
    let mut out = vec![w0];
    let mut w = vec![w0];
    for k in 1..rec.len() {
        let (t0, t1) = (rec.t[k - 1], rec.t[k]);
        w = match rec.policy {
            StepPolicy::Fixed { .. } => rk4_step(&f, t0, &w, t1 - t0)?,
            StepPolicy::Adaptive { tol } => dopri5(&f, t0, &w, t1, AdaptiveOptions::with_tol(tol), |_, _| Ok(true))?.1,
        };
        out.push(w[0]);
    }
    Ok(out)
}

/// Per-step `W(x(t_k), |v(t_k)|)` and its deviation from the reference
/// solution of `ẇ = h(w)`.
#[derive(Debug, Clone, Serialize)]
pub struct Conservation {
    pub w: Vec<f64>,
    pub reference: Vec<f64>,
    pub max_abs: f64,
}

pub fn conservation(rec: &TrajectoryRecord, pair: &GeneratingPair) -> Result<Conservation> {
    if rec.is_empty() {
        return Err(Error::Invalid("empty trajectory".into()));
    }
    if rec.x[0].len() != pair.dim() {
        return Err(Error::Dimension(format!("record has dimension {}, pair has {}", rec.x[0].len(), pair.dim())));
    }
    let w: Vec<f64> = rec.x.iter().zip(&rec.speed).map(|(x, s)| pair.w_at(x, *s)).collect::<Result<_>>()?;
    let reference = reference_w(rec, pair, w[0])?;
    let max_abs = w.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(Conservation { w, reference, max_abs })
}

/// `max_k |W(x(t_k), |v(t_k)|) − w(t_k)|`.
pub fn conservation_residual(rec: &TrajectoryRecord, pair: &GeneratingPair) -> Result<f64> {
    Ok(conservation(rec, pair)?.max_abs)
}

/// Pointwise check of the two identities behind the conservation law, with
/// all derivatives from AD: `d|v|/dt = A` along the flow, and
/// `(∇W|ẋ) + W_v A = h(W)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConservationIdentity {
    pub speed_rate_minus_a: f64,
    pub w_rate_minus_h: f64,
}

pub fn conservation_identity(forces: &Forces<'_>, pair: &GeneratingPair, state: &PhaseState) -> Result<ConservationIdentity> {
    let chart = forces.chart;
    let force = crate::field::PairForce { forces: *forces, pair };
    let acc = acceleration(&force, &state.x, &state.vel)?;
    // d|v|/dt by pushing the tangent (ẋ, v̇) through |v| = sqrt(g(x)(v, v)).
    let xd: Vec<Dual<f64>> = state.x.iter().zip(&state.vel).map(|(x, u)| Dual::new(*x, *u)).collect();
    let ud: Vec<Dual<f64>> = state.vel.iter().zip(&acc).map(|(u, a)| Dual::new(*u, *a)).collect();
    let g = chart.metric_at(&xd)?;
    let speed = speed_dual(&g, &ud);
    let a = forces.scalar_a_from_pair(pair, state)?;
    let d = pair.w_partials(&state.x, speed.re)?;
    let grad_dot: f64 = d.grad.iter().zip(&state.vel).map(|(g, u)| g * u).sum();
    Ok(ConservationIdentity {
        speed_rate_minus_a: speed.eps - a,
        w_rate_minus_h: grad_dot + d.w_v * a - pair.h_at(d.w)?,
    })
}

fn speed_dual(g: &[Dual<f64>], u: &[Dual<f64>]) -> Dual<f64> {
    let n = u.len();
    let mut s = Dual::constant(0.0);
    for i in 0..n {
        for j in 0..n {
            s = s + g[i * n + j] * u[i] * u[j];
        }
    }
    s.sqrt()
}

/// `max |v̇ + Γ(x) v v − F^k|` and `max |ẋ − v|` along a fixed-step record,
/// with time derivatives from fourth-order central differences.
pub fn equation_residual(rec: &TrajectoryRecord, force: &dyn ForceField) -> Result<f64> {
    let StepPolicy::Fixed { dt } = rec.policy else {
        return Err(Error::Invalid("equation residual needs a fixed-step record".into()));
    };
    let chart: &RiemannianChart = force.chart();
    let n = chart.dim();
    let d4 = |s: &[Vec<f64>], k: usize, i: usize| {
        (-s[k + 2][i] + 8.0 * s[k + 1][i] - 8.0 * s[k - 1][i] + s[k - 2][i]) / (12.0 * dt)
    };
    let mut worst = 0.0f64;
    for k in 2..rec.len().saturating_sub(2) {
        let acc = acceleration(force, &rec.x[k], &rec.vel[k])?;
        for i in 0..n {
            worst = worst.max((d4(&rec.vel, k, i) - acc[i]).abs());
            worst = worst.max((d4(&rec.x, k, i) - rec.vel[k][i]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::field::{PairForce, ZeroForce};
    use crate::grid::{CoordBox, PhaseBox};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn euclid() -> RiemannianChart {
        RiemannianChart::euclidean(CoordBox::cube(3, -4.0, 4.0)).unwrap()
    }

    fn conformal() -> RiemannianChart {
        RiemannianChart::conformal(Expression::parse("0.3*x1 + 0.2*sin(x2)").unwrap(), CoordBox::cube(3, -4.0, 4.0)).unwrap()
    }

    fn pair(h: &str, w: &str) -> GeneratingPair {
        GeneratingPair::parse(h, w, PhaseBox::new(CoordBox::cube(3, -4.0, 4.0), (0.01, 50.0)).unwrap()).unwrap()
    }

    const FIXED: StepPolicy = StepPolicy::Fixed { dt: 1e-3 };

    #[test]
    fn free_motion_is_straight() {
        let c = euclid();
        let rec = integrate(&ZeroForce(&c), &[0.0; 3], &[1.0, 0.0, 0.0], (0.0, 1.0), FIXED).unwrap();
        assert!(rec.completed());
        assert_eq!(rec.len(), 1001);
        let x = &rec.x[1000];
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1] == 0.0 && x[2] == 0.0);
    }

    #[test]
    fn unit_speed_law_closed_form() {
        let c = euclid();
        let p = pair("1", "v");
        let f = PairForce { forces: Forces::new(&c), pair: &p };
        let rec = integrate(&f, &[0.0; 3], &[1.0, 0.0, 0.0], (0.0, 1.0), FIXED).unwrap();
        let worst = rec
            .t
            .iter()
            .zip(rec.x.iter().zip(&rec.speed))
            .map(|(t, (x, s))| (x[0] - (t + 0.5 * t * t)).abs().max((s - (1.0 + t)).abs()))
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-8, "{worst}");
        assert!((rec.x[1000][0] - 1.5).abs() < 1e-8 && (rec.speed[1000] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn conformal_geodesics_satisfy_equation() {
        let c = conformal();
        let f = ZeroForce(&c);
        let rec = integrate(&f, &[0.2, -0.1, 0.3], &[0.6, 0.8, -0.3], (0.0, 1.0), FIXED).unwrap();
        assert!(rec.completed());
        assert!(equation_residual(&rec, &f).unwrap() < 1e-7);
        // Geodesics keep their speed.
        let s0 = rec.speed[0];
        assert!(rec.speed.iter().all(|s| (s - s0).abs() < 1e-9));
    }

    #[test]
    fn speed_only_pair_without_source_is_geodesic() {
        let c = conformal();
        let p = pair("0", "v");
        let f = PairForce { forces: Forces::new(&c), pair: &p };
        let s = PhaseState::new(vec![0.1, 0.2, 0.3], vec![0.3, -0.4, 1.1]);
        assert_eq!(f.force_lower(&s.x, &s.vel).unwrap(), vec![0.0; 3]);
        let a = integrate(&f, &s.x, &s.vel, (0.0, 1.0), FIXED).unwrap();
        let b = integrate(&ZeroForce(&c), &s.x, &s.vel, (0.0, 1.0), FIXED).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn conservation_identity_holds_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for c in [euclid(), conformal()] {
            let forces = Forces::new(&c);
            for p in [pair("1", "x1 + v"), pair("w", "v*exp(-x1)"), pair("w^2 + 1", "v^3 + v*sin(x2) + x3")] {
                for _ in 0..3 {
                    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let vel: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let r = conservation_identity(&forces, &p, &PhaseState::new(x, vel)).unwrap();
                    assert!(r.speed_rate_minus_a.abs() < 1e-12, "{r:?}");
                    assert!(r.w_rate_minus_h.abs() < 1e-11, "{r:?}");
                }
            }
        }
    }

    #[test]
    fn conservation_examples() {
        let c = euclid();
        for (p, x0, v0) in [
            (pair("0", "v*exp(-x1) + x2"), [0.1, 0.0, 0.2], [0.5, 0.7, -0.2]),
            (pair("1", "v"), [0.0; 3], [0.3, 0.4, 0.0]),
            (pair("0", "x1 + v"), [0.3, -0.2, 0.1], [0.2, 0.9, 0.4]),
        ] {
            let f = PairForce { forces: Forces::new(&c), pair: &p };
            let rec = integrate(&f, &x0, &v0, (0.0, 1.0), FIXED).unwrap();
            assert!(rec.completed());
            let cons = conservation(&rec, &p).unwrap();
            assert!(cons.max_abs < 1e-8, "{}: {}", p.w_expr(), cons.max_abs);
        }
    }

    #[test]
    fn global_construction_conserves_w_by_fd_oracle() {
        let c = euclid();
        let p = pair("0", "x1 + v");
        let f = PairForce { forces: Forces::new(&c), pair: &p };
        let rec = integrate(&f, &[0.3, -0.2, 0.1], &[0.2, 0.9, 0.4], (0.0, 1.0), FIXED).unwrap();
        let w0 = 0.3 + (0.04f64 + 0.81 + 0.16).sqrt();
        let w: Vec<f64> = rec.x.iter().zip(&rec.speed).map(|(x, s)| x[0] + s).collect();
        assert!(w.iter().all(|w| (w - w0).abs() < 1e-7));
        // Independent oracle: the time derivative of W along the record vanishes.
        let dt = 1e-3;
        assert!(w.windows(3).all(|s| ((s[2] - s[0]) / (2.0 * dt)).abs() < 1e-7));
    }

    #[test]
    fn rk4_order_on_curved_speed_law() {
        let c = conformal();
        let p = pair("1", "v");
        let f = PairForce { forces: Forces::new(&c), pair: &p };
        let run = |dt: f64| {
            let rec = integrate(&f, &[0.1, 0.2, -0.3], &[0.9, -0.5, 0.4], (0.0, 1.0), StepPolicy::Fixed { dt }).unwrap();
            conservation_residual(&rec, &p).unwrap()
        };
        let (coarse, fine) = (run(1e-2), run(5e-3));
        assert!(coarse / fine >= 8.0, "{coarse:e} / {fine:e}");
    }

    #[test]
    fn chart_exit_is_recorded() {
        let c = RiemannianChart::euclidean(CoordBox::cube(3, -1.0, 1.0)).unwrap();
        let rec = integrate(&ZeroForce(&c), &[0.0; 3], &[1.0, 0.0, 0.0], (0.0, 2.0), FIXED).unwrap();
        assert!(matches!(rec.halt, HaltReason::DomainExit { .. }));
        assert!(rec.x.iter().all(|x| x[0] <= 1.0));
        assert!(rec.len() > 900 && rec.len() < 1002);
    }

    #[test]
    fn stopping_is_recorded() {
        // h = -1 with W = v: |v| = 1 - t reaches zero at t = 1.
        let c = euclid();
        let p = pair("-1", "v");
        let f = PairForce { forces: Forces::new(&c), pair: &p };
        let rec = integrate(&f, &[0.0; 3], &[1.0, 0.0, 0.0], (0.0, 2.0), FIXED).unwrap();
        assert!(!rec.completed());
        assert!(rec.speed.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn adaptive_mode_agrees_with_fixed() {
        let c = conformal();
        let p = pair("w", "v*exp(-x1)");
        let f = PairForce { forces: Forces::new(&c), pair: &p };
        let a = integrate(&f, &[0.1, 0.2, -0.3], &[0.5, -0.2, 0.1], (0.0, 0.5), FIXED).unwrap();
        let b = integrate(&f, &[0.1, 0.2, -0.3], &[0.5, -0.2, 0.1], (0.0, 0.5), StepPolicy::Adaptive { tol: 1e-9 }).unwrap();
        assert!(b.completed() && b.len() < a.len());
        let (xa, xb) = (&a.x[a.len() - 1], &b.x[b.len() - 1]);
        assert!(xa.iter().zip(xb).all(|(p, q)| (p - q).abs() < 1e-7));
        assert!(conservation_residual(&b, &p).unwrap() < 1e-7);
    }
}
