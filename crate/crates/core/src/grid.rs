//! Coordinate boxes, validation lattices and seeded sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoordBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension(format!("box bounds have lengths {} and {}", lo.len(), hi.len())));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::Invalid(format!("empty or non-finite box {lo:?} .. {hi:?}")));
        }
        Ok(CoordBox { lo, hi })
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        CoordBox { lo: vec![lo; n], hi: vec![hi; n] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| *a <= *x && *x <= *b)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { point: x.to_vec() })
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Box with every side shrunk about the center by `factor` (in (0, 1]).
    pub fn shrink(&self, factor: f64) -> CoordBox {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let c = 0.5 * (a + b);
                let r = 0.5 * (b - a) * factor;
                (c - r, c + r)
            })
            .unzip();
        CoordBox { lo, hi }
    }

    /// Tensor lattice with `k` points per axis, endpoints included, in
    /// lexicographic order (last axis fastest).
    pub fn lattice(&self, k: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self.lo.iter().zip(&self.hi).map(|(a, b)| linspace(*a, *b, k)).collect();
        tensor(&axes)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| rng.random_range(*a..*b)).collect()
    }
}

/// The phase box `box × [v_lo, v_hi]` in `M × ℝ⁺`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub space: CoordBox,
    pub v_range: (f64, f64),
}

impl PhaseBox {
    pub fn new(space: CoordBox, v_range: (f64, f64)) -> Result<Self> {
        let (a, b) = v_range;
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::Invalid(format!("v_range [{a}, {b}] must be a non-empty interval of (0, inf)")));
        }
        Ok(PhaseBox { space, v_range })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn contains(&self, x: &[f64], v: f64) -> bool {
        self.space.contains(x) && self.v_range.0 <= v && v <= self.v_range.1
    }

    pub fn check(&self, x: &[f64], v: f64) -> Result<()> {
        if self.contains(x, v) {
            Ok(())
        } else {
            let mut point = x.to_vec();
            point.push(v);
            Err(Error::OutOfDomain { point })
        }
    }

    /// Lattice with `k` points along each of the `n + 1` axes.
    pub fn lattice(&self, k: usize) -> Vec<(Vec<f64>, f64)> {
        let vs = linspace(self.v_range.0, self.v_range.1, k);
        let mut out = Vec::new();
        for x in self.space.lattice(k) {
            for v in &vs {
                out.push((x.clone(), *v));
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let x = self.space.sample(rng);
        (x, rng.random_range(self.v_range.0..self.v_range.1))
    }

    pub fn shrink(&self, factor: f64) -> PhaseBox {
        let (a, b) = self.v_range;
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a) * factor;
        PhaseBox { space: self.space.shrink(factor), v_range: (c - r, c + r) }
    }
}

pub fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![0.5 * (a + b)],
        _ => (0..k).map(|i| if i + 1 == k { b } else { a + (b - a) * i as f64 / (k - 1) as f64 }).collect(),
    }
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |c| {
                    let mut q = p.clone();
                    q.push(*c);
                    q
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_order_and_size() {
        let b = CoordBox::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let pts = b.lattice(3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[1], vec![0.0, 1.0]);
        assert_eq!(pts[8], vec![1.0, 2.0]);
        assert!(pts.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn phase_box_rejects_nonpositive_speeds() {
        assert!(PhaseBox::new(CoordBox::cube(2, -1.0, 1.0), (0.0, 1.0)).is_err());
        assert!(PhaseBox::new(CoordBox::cube(2, -1.0, 1.0), (2.0, 1.0)).is_err());
        let p = PhaseBox::new(CoordBox::cube(2, -1.0, 1.0), (0.5, 1.0)).unwrap();
        assert_eq!(p.lattice(5).len(), 125);
    }
}
