//! Reduced rectangular Morley (RRM) finite elements for the fourth-order
//! elliptic singular perturbation problem
//!
//! ```text
//!     ε²Δ²u − Δu = f  in Ω,     u = ∂u/∂n = 0  on ∂Ω,
//! ```
//!
//! on rectangular tensor-product grids. The crate builds the 3×3-patch
//! basis functions of the piecewise-quadratic RRM space, the locally
//! averaged quasi-interpolation operators, the broken Hessian/gradient
//! Galerkin system, manufactured-solution convergence studies, and the
//! Gram-rank machinery that decides whether a locally defined interpolation
//! can be a projection.

pub mod assembly;
pub mod basis;
pub mod error;
pub mod interpolation;
pub mod mesh;
pub mod polynomial;
pub mod projection;
pub mod study;
pub mod suite;

pub use error::{Error, Result};
