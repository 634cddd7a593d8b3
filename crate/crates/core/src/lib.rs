//! A numerical laboratory for the Degasperis–Procesi equation
//!
//! `u_t + (u^2/2)_x + (3/2) (1 - d^2)^{-1} (u^2)_x = 0`.
//!
//! The crate evolves sign-structured initial data, evaluates the conserved
//! functionals and the identities behind peakon stability, and measures the
//! stability phenomenology (modulation, orbital distance, localized
//! monotonicity) along runs.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod grid;
pub mod helmholtz;
pub mod identities;
pub mod particles;
pub mod profiles;
pub mod solver;
pub mod spectral;

#[doc(hidden)]
pub mod test_util;

pub use error::{DpError, Result};
pub use grid::{Field, Grid};
