//! Spectral toolkit for the Lamé operator with complex potentials on periodic
//! lattices: Helmholtz splitting, resolvents, potential norms, discrete
//! spectra and eigenvalue enclosures.

pub mod enclosure;
pub mod error;
pub mod helmholtz;
pub mod io;
pub mod lame;
pub mod lattice;
pub mod norms;
pub mod potentials;
pub mod spectra;

pub use error::{Error, Result};
pub use num_complex::Complex64;
