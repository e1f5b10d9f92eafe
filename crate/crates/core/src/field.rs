//! Force fields of the normal-shift class and their scalar reductions.
//!
//! Covariant components `F_k` are primary; `F^k` is obtained by raising the
//! index with the chart metric.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Dual, Scalar};
use crate::geometry::{contract, mat_vec, RiemannianChart};
use crate::pair::GeneratingPair;
use crate::section::{CovectorField, PhaseMap, TRANSVERSALITY_EPS};

/// Speeds below this are rejected by default.
pub const DEFAULT_V_MIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub vel: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, vel: Vec<f64>) -> Self {
        PhaseState { x, vel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceVector {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Speed and unit direction of a velocity, with both index positions.
#[derive(Debug, Clone)]
pub struct Kinematics<S> {
    pub speed: S,
    pub n_up: Vec<S>,
    pub n_low: Vec<S>,
}

/// The scalar `A(x, v)` from which a force is rebuilt by the ansatz.
/// Implementations evaluate over any [`Scalar`] in the velocity slot.
pub trait ScalarAnsatz: Sync {
    fn eval<S: Scalar>(&self, forces: &Forces<'_>, x: &[f64], vel: &[S]) -> Result<S>;
}

/// `A = c`.
pub struct ConstAnsatz(pub f64);

impl ScalarAnsatz for ConstAnsatz {
    fn eval<S: Scalar>(&self, forces: &Forces<'_>, x: &[f64], vel: &[S]) -> Result<S> {
        forces.kinematics(x, vel)?;
        Ok(S::cst(self.0))
    }
}

/// `A = h(W)/W_v − (v/W_v)(∇W|N)`.
pub struct PairAnsatz<'p>(pub &'p GeneratingPair);

impl ScalarAnsatz for PairAnsatz<'_> {
    fn eval<S: Scalar>(&self, forces: &Forces<'_>, x: &[f64], vel: &[S]) -> Result<S> {
        let k = forces.kinematics(x, vel)?;
        let xs: Vec<S> = x.iter().map(|c| S::cst(*c)).collect();
        let d = self.0.w_partials(&xs, k.speed)?;
        let grad_n = d.grad.iter().zip(&k.n_up).fold(S::cst(0.0), |s, (g, n)| s + *g * *n);
        Ok(self.0.h_at(d.w)? / d.w_v - k.speed * grad_n / d.w_v)
    }
}

/// `A = (1 − Σ ω_i v^i)/ω_{n+1}`.
pub struct OmegaAnsatz<'w>(pub &'w CovectorField);

impl ScalarAnsatz for OmegaAnsatz<'_> {
    fn eval<S: Scalar>(&self, forces: &Forces<'_>, x: &[f64], vel: &[S]) -> Result<S> {
        let k = forces.kinematics(x, vel)?;
        let xs: Vec<S> = x.iter().map(|c| S::cst(*c)).collect();
        let w = self.0.eval(&xs, k.speed)?;
        let n = x.len();
        let last = transversal(x, k.speed.re(), w[n])?;
        let pairing = w[..n].iter().zip(vel).fold(S::cst(0.0), |s, (wi, vi)| s + *wi * *vi);
        Ok((S::cst(1.0) - pairing) / last)
    }
}

fn transversal<S: Scalar>(x: &[f64], v: f64, last: S) -> Result<S> {
    if last.re().abs() < TRANSVERSALITY_EPS {
        return Err(Error::Transversality { what: "omega_{n+1}", x: x.to_vec(), v, value: last.re() });
    }
    Ok(last)
}

/// Force evaluation on one chart.
#[derive(Debug, Clone, Copy)]
pub struct Forces<'c> {
    pub chart: &'c RiemannianChart,
    pub v_min: f64,
}

impl<'c> Forces<'c> {
    pub fn new(chart: &'c RiemannianChart) -> Self {
        Forces { chart, v_min: DEFAULT_V_MIN }
    }

    pub fn with_v_min(mut self, v_min: f64) -> Self {
        self.v_min = v_min;
        self
    }

    pub fn kinematics<S: Scalar>(&self, x: &[f64], vel: &[S]) -> Result<Kinematics<S>> {
        if vel.len() != self.chart.dim() {
            return Err(Error::Dimension(format!("velocity has {} components, chart has {}", vel.len(), self.chart.dim())));
        }
        let g = self.chart.metric_at(x)?;
        let speed = contract(&g, vel, vel).sqrt();
        if !(speed.re() >= self.v_min) {
            return Err(Error::ZeroVelocity { speed: speed.re(), v_min: self.v_min });
        }
        let n_up: Vec<S> = vel.iter().map(|c| *c / speed).collect();
        let n_low = mat_vec(&g, &n_up);
        Ok(Kinematics { speed, n_up, n_low })
    }

    fn finish(&self, x: &[f64], lower: Vec<f64>) -> Result<ForceVector> {
        let upper = self.chart.raise(x, &lower)?;
        Ok(ForceVector { lower, upper })
    }

    /// `F_k = h(W) N_k/W_v − v Σ_i (∇_iW/W_v)(2 N^i N_k − δ^i_k)`.
    pub fn force_from_pair(&self, pair: &GeneratingPair, state: &PhaseState) -> Result<ForceVector> {
        let k = self.kinematics(&state.x, &state.vel)?;
        let d = pair.w_partials(&state.x, k.speed)?;
        let h = pair.h_at(d.w)?;
        let lower = self.normal_form(&k, h / d.w_v, &d.grad.iter().map(|g| g / d.w_v).collect::<Vec<_>>());
        self.finish(&state.x, lower)
    }

    /// `F_k = c N_k − v Σ_i β_i (2 N^i N_k − δ^i_k)`.
    fn normal_form(&self, k: &Kinematics<f64>, c: f64, beta: &[f64]) -> Vec<f64> {
        let beta_n: f64 = beta.iter().zip(&k.n_up).map(|(b, n)| b * n).sum();
        (0..beta.len()).map(|j| c * k.n_low[j] - k.speed * (2.0 * beta_n * k.n_low[j] - beta[j])).collect()
    }

    pub fn scalar_a_from_pair(&self, pair: &GeneratingPair, state: &PhaseState) -> Result<f64> {
        PairAnsatz(pair).eval(self, &state.x, &state.vel)
    }

    /// `A = Σ F_k N^k`.
    pub fn project_force_to_a(&self, state: &PhaseState, force: &ForceVector) -> Result<f64> {
        let k = self.kinematics(&state.x, &state.vel)?;
        Ok(force.lower.iter().zip(&k.n_up).map(|(f, n)| f * n).sum())
    }

    /// `F_k = A N_k − |v| Σ_i P^i_k ∂A/∂v^i` with `P^i_k = δ^i_k − N^i N_k`;
    /// velocity derivatives come from forward-mode AD.
    pub fn force_from_a<A: ScalarAnsatz + ?Sized>(&self, ansatz: &A, state: &PhaseState) -> Result<ForceVector> {
        let n = state.vel.len();
        let k = self.kinematics(&state.x, &state.vel)?;
        let mut a = 0.0;
        let mut grad = vec![0.0; n];
        for i in 0..n {
            let vel: Vec<Dual<f64>> =
                state.vel.iter().enumerate().map(|(j, c)| Dual::new(*c, if i == j { 1.0 } else { 0.0 })).collect();
            let d = ansatz.eval(self, &state.x, &vel)?;
            a = d.re;
            grad[i] = d.eps;
        }
        let grad_n: f64 = grad.iter().zip(&k.n_up).map(|(g, n)| g * n).sum();
        let lower = (0..n).map(|j| a * k.n_low[j] - k.speed * (grad[j] - grad_n * k.n_low[j])).collect();
        self.finish(&state.x, lower)
    }

    /// `F_k = N_k/ω_{n+1} − v Σ_i (ω_i/ω_{n+1})(2 N^i N_k − δ^i_k)`. The
    /// 1-form is used as given: no gauge factor `h` enters.
    pub fn force_from_omega(&self, omega: &CovectorField, state: &PhaseState) -> Result<ForceVector> {
        let k = self.kinematics(&state.x, &state.vel)?;
        let w = omega.omega_at(&state.x, k.speed)?;
        let n = state.x.len();
        let last = transversal(&state.x, k.speed, w[n])?;
        let beta: Vec<f64> = w[..n].iter().map(|c| c / last).collect();
        let lower = self.normal_form(&k, 1.0 / last, &beta);
        self.finish(&state.x, lower)
    }

    pub fn a_from_omega(&self, omega: &CovectorField, state: &PhaseState) -> Result<f64> {
        OmegaAnsatz(omega).eval(self, &state.x, &state.vel)
    }
}

/// A force law usable by the trajectory integrator.
pub trait ForceField: Sync {
    fn chart(&self) -> &RiemannianChart;
    /// Covariant components `F_k` at `(x, vel)`.
    fn force_lower(&self, x: &[f64], vel: &[f64]) -> Result<Vec<f64>>;
}

pub struct PairForce<'a> {
    pub forces: Forces<'a>,
    pub pair: &'a GeneratingPair,
}

impl ForceField for PairForce<'_> {
    fn chart(&self) -> &RiemannianChart {
        self.forces.chart
    }
    fn force_lower(&self, x: &[f64], vel: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forces.force_from_pair(self.pair, &PhaseState::new(x.to_vec(), vel.to_vec()))?.lower)
    }
}

pub struct OmegaForce<'a> {
    pub forces: Forces<'a>,
    pub omega: &'a CovectorField,
}

impl ForceField for OmegaForce<'_> {
    fn chart(&self) -> &RiemannianChart {
        self.forces.chart
    }
    fn force_lower(&self, x: &[f64], vel: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forces.force_from_omega(self.omega, &PhaseState::new(x.to_vec(), vel.to_vec()))?.lower)
    }
}

/// `F = 0`: trajectories are geodesics.
pub struct ZeroForce<'a>(pub &'a RiemannianChart);

impl ForceField for ZeroForce<'_> {
    fn chart(&self) -> &RiemannianChart {
        self.0
    }
    fn force_lower(&self, x: &[f64], vel: &[f64]) -> Result<Vec<f64>> {
        self.0.check_point(x)?;
        Ok(vec![0.0; vel.len()])
    }
}
