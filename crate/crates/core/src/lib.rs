//! Fermi-coordinate geometry of normal tubes and a numerical verifier for weak
//! comparison of degenerate quasilinear elliptic problems posed on them.

pub mod analysis;
mod error;
pub mod fermi;
pub mod geometry;
pub mod pde;
pub mod quadrature;
pub mod reach;
pub mod wcp;

pub use error::{Error, Result};
