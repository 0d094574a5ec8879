//! Numerical laboratory for the quadratic blow-up of `Δu = χ_{|∇u|>0}` at a
//! singular free-boundary point.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod harmonics;
pub mod solver;
pub mod quad;

pub use error::{Error, Result};
