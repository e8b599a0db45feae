//! Numerical laboratory for degenerate nonlocal equations
//! `-|Du + p|^gamma I(u) = f` in one space dimension.

pub mod error;
pub mod fixtures;
pub mod gridfn;
pub mod kernels;
pub mod nonlocal_ops;
pub mod probe;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
