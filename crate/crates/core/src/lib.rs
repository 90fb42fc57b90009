//! Numerical laboratory for one-parameter min-max widths of the prescribed
//! mean curvature functional `A^h(Ω) = Area(∂Ω) − ∫_Ω h` in R³.
//!
//! Regions are star-shaped radial graphs over a fixed spherical quadrature
//! grid; energies and their gradients are exact derivatives of the discrete
//! quadrature formulas.

pub mod conformal;
pub mod engine;
pub mod error;
pub mod functional;
pub mod grid;
pub mod harness;
pub mod hypotheses;
pub mod prescription;
pub mod quadrature;
pub mod region;

pub use error::{Error, Result};
pub use grid::{Point, SphereGrid};
pub use region::{flat_distance, RegionPath, StarRegion};
