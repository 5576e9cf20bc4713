//! Quantitative geometry of caloric functions: frequency functionals,
//! symmetry and pinching, beta numbers, strata, neck regions and graphs.

pub mod caloricpoly;
pub mod checks;
pub mod error;
pub mod frequency;
pub mod gaussquad;
pub mod graph;
pub mod linalg;
pub mod measures;
pub mod neck;
pub mod spacetime;
pub mod strata;
pub mod symmetry;

pub use caloricpoly::{heat_polynomial, CaloricPolynomial, FloatPoly, FunctionSpec, Q};
pub use error::{Error, Result};
pub use frequency::{CaloricFunction, FrequencyProfile, Functionals, PinchingReport};
pub use spacetime::{IndependentSet, ParabolicBall, ParabolicPlane, SpaceTimePoint};
