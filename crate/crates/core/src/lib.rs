//! Force fields of Newtonian dynamical systems that admit the normal shift
//! of hypersurfaces in a Riemannian manifold.
//!
//! The crate builds the force field from a generating pair `(h, W)`,
//! integrates trajectories and shifted hypersurfaces, and checks the
//! associated geometric structures on `M × ℝ⁺` (the projective section `b`,
//! the normalizing scalar `a`, closed 1-forms `ω`) through pointwise residuals
//! evaluated with forward-mode derivatives.

pub mod dynamics;
pub mod error;
pub mod expr;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod ode;
pub mod pair;
pub mod pfaff;
pub mod quad;
pub mod roots;
pub mod scenario;
pub mod section;
pub mod shift;

pub use error::{Error, Result};
pub use expr::{Dual, Expression, Scalar, Var};
pub use geometry::{ChartTransition, RiemannianChart};
pub use grid::{CoordBox, PhaseBox};
pub use pair::GeneratingPair;
