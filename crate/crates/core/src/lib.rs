//! Non-equilibrium almost-stationary states of perturbed gapped lattice
//! fermions, computed by exact diagonalization on small boxes.

// `!(x > 0.0)` is used on purpose so that NaN fails input checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driving;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod hall;
pub mod interactions;
pub mod lattice;
pub mod linalg;
pub mod neass;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
