//! Bregman iteration for box-constrained linear-quadratic control of the
//! Poisson equation, with bang-bang test problems and rate diagnostics.

pub mod analysis;
pub mod bregman;
pub mod checks;
pub mod cli;
pub mod error;
pub mod grid;
pub mod pde;
pub mod problems;

pub use error::{Error, Result};
