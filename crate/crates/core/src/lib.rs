//! Numerical laboratory for the one-dimensional defocusing NLS
//! `i ∂_t u = -Δu + V(x,t) u + |u|^{p-1} u` on a periodic box.

// `!(x > 0.0)` deliberately rejects NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod fit;
pub mod microlocal;
pub mod observables;
pub mod potential;
pub mod scattering;
pub mod spectral;

pub use error::{LabError, Result};
pub use spectral::{Grid, SpectralCoeffs, StateVector};
