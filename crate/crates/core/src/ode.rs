//! Explicit Runge–Kutta integrators for first-order systems `y' = f(t, y)`.

use crate::error::{Error, Result};

/// One classical RK4 step.
pub fn rk4_step<F>(f: &F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(a, k)| a + s * k).collect() };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, &k1, 0.5 * h))?;
    let k3 = f(t + 0.5 * h, &axpy(y, &k2, 0.5 * h))?;
    let k4 = f(t + h, &axpy(y, &k3, h))?;
    Ok((0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand–Prince step: fifth-order solution and the embedded error
/// estimate (difference to the fourth-order solution).
pub fn dopri5_step<F>(f: &F, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let m = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let ys: Vec<f64> = (0..m).map(|i| y[i] + h * (0..s).map(|r| A[s][r] * k[r][i]).sum::<f64>()).collect();
        k.push(f(t + C[s] * h, &ys)?);
    }
    let y5: Vec<f64> = (0..m).map(|i| y[i] + h * (0..7).map(|s| B5[s] * k[s][i]).sum::<f64>()).collect();
    let err: Vec<f64> = (0..m).map(|i| h * (0..7).map(|s| (B5[s] - B4[s]) * k[s][i]).sum::<f64>()).collect();
    Ok((y5, err))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub atol: f64,
    pub rtol: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions { atol: 1e-10, rtol: 1e-10, h_min: 1e-12, max_steps: 1_000_000 }
    }
}

impl AdaptiveOptions {
    pub fn with_tol(tol: f64) -> Self {
        AdaptiveOptions { atol: tol, rtol: tol, ..Default::default() }
    }
}

/// Integrates from `t0` to `t1` with step-size control. After every accepted
/// step `observe(t, y)` is called; returning `false` stops the integration
/// there. Returns the final time and state.
pub fn dopri5<F, O>(f: &F, t0: f64, y0: &[f64], t1: f64, opts: AdaptiveOptions, mut observe: O) -> Result<(f64, Vec<f64>)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
    O: FnMut(f64, &[f64]) -> Result<bool>,
{
    let span = t1 - t0;
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0.to_vec();
    if span == 0.0 {
        return Ok((t, y));
    }
    let mut h = dir * (span.abs() * 0.01).min(0.1);
    for _ in 0..opts.max_steps {
        if (t1 - t) * dir <= 0.0 {
            return Ok((t, y));
        }
        let last = (t + h - t1) * dir >= 0.0;
        if last {
            h = t1 - t;
        }
        let (yn, err) = dopri5_step(f, t, &y, h)?;
        let norm = (err
            .iter()
            .zip(y.iter().zip(&yn))
            .map(|(e, (a, b))| {
                let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / y.len().max(1) as f64)
            .sqrt();
        if norm <= 1.0 {
            t = if last { t1 } else { t + h };
            y = yn;
            if !observe(t, &y)? {
                return Ok((t, y));
            }
        }
        h *= if !norm.is_finite() {
            0.2
        } else if norm == 0.0 {
            5.0
        } else {
            (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        if h.abs() < opts.h_min && (t1 - t) * dir > opts.h_min {
            return Err(Error::StepUnderflow(t));
        }
    }
    Err(Error::StepUnderflow(t))
}

/// Fixed-step Dormand–Prince integration with `steps` equal steps. The
/// result is a smooth function of the initial data and of parameters
/// entering `f`, which finite-difference checks rely on.
pub fn dopri5_fixed<F>(f: &F, t0: f64, y0: &[f64], t1: f64, steps: usize) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    for k in 0..steps {
        y = dopri5_step(f, t0 + k as f64 * h, &y, h)?.0;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_: f64, y: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![-y[0], y[0] - 2.0 * y[1]])
    }

    // y0 = e^{-t}, y1 = e^{-t} - e^{-2t} for y(0) = (1, 0)
    fn exact(t: f64) -> [f64; 2] {
        [(-t).exp(), (-t).exp() - (-2.0 * t).exp()]
    }

    #[test]
    fn rk4_is_fourth_order() {
        let run = |h: f64| {
            let mut y = vec![1.0, 0.0];
            let steps = (1.0 / h).round() as usize;
            for k in 0..steps {
                y = rk4_step(&decay, k as f64 * h, &y, h).unwrap();
            }
            (y[1] - exact(1.0)[1]).abs()
        };
        let ratio = run(0.02) / run(0.01);
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }

    #[test]
    fn rk4_integrates_cubics_exactly() {
        let f = |t: f64, _: &[f64]| Ok(vec![3.0 * t * t]);
        let mut y = vec![0.0];
        for k in 0..10 {
            y = rk4_step(&f, k as f64 * 0.1, &y, 0.1).unwrap();
        }
        assert!((y[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_meets_tolerance() {
        let mut count = 0;
        let (t, y) = dopri5(&decay, 0.0, &[1.0, 0.0], 3.0, AdaptiveOptions::with_tol(1e-11), |_, _| {
            count += 1;
            Ok(true)
        })
        .unwrap();
        assert_eq!(t, 3.0);
        let e = exact(3.0);
        assert!((y[0] - e[0]).abs() < 1e-10 && (y[1] - e[1]).abs() < 1e-10);
        assert!(count > 5);
    }

    #[test]
    fn adaptive_runs_backwards_and_stops_on_request() {
        let (t, y) = dopri5(&decay, 1.0, &exact(1.0), 0.0, AdaptiveOptions::default(), |_, _| Ok(true)).unwrap();
        assert_eq!(t, 0.0);
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
        let (t, _) = dopri5(&decay, 0.0, &[1.0, 0.0], 10.0, AdaptiveOptions::default(), |t, _| Ok(t < 1.0)).unwrap();
        assert!((1.0..10.0).contains(&t));
    }

    #[test]
    fn fixed_dopri_is_fifth_order() {
        let err = |n| (dopri5_fixed(&decay, 0.0, &[1.0, 0.0], 1.0, n).unwrap()[1] - exact(1.0)[1]).abs();
        let ratio = err(10) / err(20);
        assert!(ratio > 25.0, "{ratio}");
    }

    #[test]
    fn underflow_reported() {
        let blow = |_: f64, y: &[f64]| Ok(vec![y[0] * y[0]]);
        let r = dopri5(&blow, 0.0, &[1.0], 2.0, AdaptiveOptions::default(), |_, _| Ok(true));
        assert!(matches!(r, Err(Error::StepUnderflow(_))));
    }
}
