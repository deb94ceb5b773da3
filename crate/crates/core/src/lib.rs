//! Transfer matrices, trace maps, approximant spectra and wave-packet
//! dynamics for one-dimensional discrete Schrödinger operators with
//! substitution potentials.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dd;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod mat2;
pub mod numeric;
pub mod roots;
pub mod spectra;
pub mod traces;

pub use error::{Error, Result};
pub use mat2::{Mat2, C64};
