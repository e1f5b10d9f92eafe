//! Scalars for forward-mode differentiation.
//!
//! Every evaluator in the crate is generic over [`Scalar`], implemented for
//! `f64` and for [`Dual<T>`] with any scalar `T`. A `Dual<f64>` carries one
//! directional derivative; nesting once (`Dual<Dual<f64>>`) yields mixed
//! second derivatives, which is how derivatives of quantities that are
//! themselves built from first partials (the section components `b_i`, the
//! normalizing scalar `a`) are obtained.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(c: f64) -> Self;
    /// Primal (real) part, used for domain checks.
    fn re(self) -> f64;
    /// True when every component, including all tangent parts, is finite.
    fn is_finite(self) -> bool;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    /// `self^c` for a constant exponent.
    fn powf(self, c: f64) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(c: f64) -> Self {
        c
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn powf(self, c: f64) -> Self {
        if c == 2.0 {
            self * self
        } else if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
            self.powi(c as i32)
        } else {
            f64::powf(self, c)
        }
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    /// Independent variable seeded with unit tangent.
    pub fn var(re: T) -> Self {
        Dual { re, eps: T::cst(1.0) }
    }

    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::cst(0.0) }
    }

    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Dual { re: f, eps: self.eps * df }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.eps * o.re + self.re * o.eps }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual { re: q, eps: (self.eps - q * o.eps) / o.re }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn cst(c: f64) -> Self {
        Dual { re: T::cst(c), eps: T::cst(0.0) }
    }
    #[inline]
    fn re(self) -> f64 {
        self.re.re()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::cst(1.0) / self.re)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, T::cst(0.5) / s)
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, T::cst(1.0) - t * t)
    }
    fn powf(self, c: f64) -> Self {
        if c == 0.0 {
            return Self::cst(1.0);
        }
        let d = self.re.powf(c - 1.0).scale(c);
        self.chain(self.re.powf(c), d)
    }
}

/// Derivative of a scalar function at `x` by a single forward pass.
pub fn derivative<T: Scalar, E>(
    x: T,
    f: impl FnOnce(Dual<T>) -> Result<Dual<T>, E>,
) -> Result<(T, T), E> {
    let y = f(Dual::var(x))?;
    Ok((y.re, y.eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::var(3.0);
        let f = x * x + Dual::cst(2.0) * x;
        assert_eq!(f.re, 15.0);
        assert_eq!(f.eps, 8.0);
    }

    #[test]
    fn nested_gives_second_derivative() {
        // d²/dx² sin(x) = -sin(x)
        let x0 = 0.7;
        let x = Dual::var(Dual::var(x0));
        let y = x.sin();
        assert!((y.eps.eps + x0.sin()).abs() < 1e-15);
        assert!((y.eps.re - x0.cos()).abs() < 1e-15);
    }

    #[test]
    fn powf_matches_closed_form() {
        let x = Dual::var(2.0);
        let y = x.powf(3.0);
        assert_eq!(y.re, 8.0);
        assert_eq!(y.eps, 12.0);
        let z = x.powf(0.5);
        assert!((z.eps - 0.5 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quotient_and_tanh() {
        let (v, d) = derivative(0.3, |x: Dual<f64>| Ok::<_, ()>(x.tanh() / (x + Dual::cst(1.0)))).unwrap();
        let t = 0.3f64.tanh();
        assert!((v - t / 1.3).abs() < 1e-15);
        let expect = ((1.0 - t * t) * 1.3 - t) / (1.3 * 1.3);
        assert!((d - expect).abs() < 1e-14);
    }
}
