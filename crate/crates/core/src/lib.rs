//! Space-time stochastic Galerkin boundary elements for the 3D wave equation.

pub mod error;
pub mod geom;
pub mod kernels;
pub mod mesh;
pub mod pc_basis;
pub mod post;
pub mod quadrature;
pub mod solver;
pub mod study;
pub mod validate;

pub use error::{Error, Result};
