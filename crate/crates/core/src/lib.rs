//! Numerical tools for fully nonlinear prescribed-curvature equations.
//!
//! - [`symmfunc`]: elementary symmetric functions, Gårding cones and the
//!   curvature operators built from them.
//! - [`sphere`]: discrete geometry of starshaped surfaces given by a radial
//!   function on a latitude-longitude grid.
//! - [`measure`]: prescribed curvature measures on starshaped surfaces.
//! - [`graph`]: Dirichlet problems for curvature equations of graphs.
//! - [`inequality`]: randomized checks of concavity inequalities.
//! - [`study`]: grid-refinement studies and observed orders.

pub mod error;
pub mod graph;
pub mod inequality;
pub mod measure;
pub mod newton;
pub mod poly;
pub mod sphere;
pub mod study;
pub mod symmfunc;

pub use error::{Error, Result};
pub use poly::{Monomial, Polynomial};
pub use symmfunc::{OperatorSpec, Spectrum, SymTensor2};
