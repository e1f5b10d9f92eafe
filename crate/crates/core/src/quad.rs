//! Adaptive Gauss–Kronrod quadrature (7-point Gauss, 15-point Kronrod).

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let s = f(c - r * XGK[j])? + f(c + r * XGK[j])?;
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok((r * kronrod, (r * (kronrod - gauss)).abs()))
}

/// `∫_a^b f` to absolute tolerance `tol` by recursive bisection.
pub fn integrate<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64, tol: f64, depth: usize) -> Result<f64> {
        let (v, err) = gk15(f, a, b)?;
        // Below the roundoff floor of the panel, further bisection cannot help.
        let settled = err <= tol || err <= 1e-14 * v.abs();
        if settled || depth == 0 {
            if !settled {
                return Err(Error::Invalid(format!("quadrature did not converge on [{a}, {b}] (error {err:e})")));
            }
            return Ok(v);
        }
        let m = 0.5 * (a + b);
        Ok(rec(f, a, m, 0.5 * tol, depth - 1)? + rec(f, m, b, 0.5 * tol, depth - 1)?)
    }
    rec(&mut f, a, b, tol, 40)
}
