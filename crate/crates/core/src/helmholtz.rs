//! The resolvents `(1 - d^2)^{-1}` and `(4 - d^2)^{-1}` and the derived fields
//! `y = (1 - d^2) u`, `v = (4 - d^2)^{-1} u`, `h = (1 - d^2)^{-1} u^2`.

use num_complex::Complex64;

use crate::error::{DpError, Result};
use crate::grid::Field;
use crate::spectral::{self, apply_multiplier};

/// Apply `(a - d^2)^{-1}` mode-wise; only `a = 1` and `a = 4` are supported.
pub fn invert_helmholtz(f: &Field, a: f64) -> Result<Field> {
    if a != 1.0 && a != 4.0 {
        return Err(DpError::Invalid(format!("Helmholtz shift {a} not in {{1, 4}}")));
    }
    Ok(resolvent(f, a))
}

pub(crate) fn resolvent(f: &Field, a: f64) -> Field {
    apply_multiplier(f, |k, _| Complex64::new(1.0 / (a + k * k), 0.0))
}

/// `(a - d^2) f`.
pub fn apply_helmholtz(f: &Field, a: f64) -> Field {
    apply_multiplier(f, |k, _| Complex64::new(a + k * k, 0.0))
}

/// Max-norm of `(4-d^2)^{-1}(1-d^2)^{-1} f - [(1-d^2)^{-1} f - (4-d^2)^{-1} f] / 3`.
pub fn resolvent_identity_residual(f: &Field) -> f64 {
    let lhs = resolvent(&resolvent(f, 1.0), 4.0);
    let r1 = resolvent(f, 1.0);
    let r4 = resolvent(f, 4.0);
    let rhs = (&r1 - &r4).scale(1.0 / 3.0);
    (&lhs - &rhs).max_abs()
}

#[derive(Debug, Clone)]
pub struct DerivedFields {
    pub u: Field,
    pub y: Field,
    pub v: Field,
    pub h: Field,
}

impl DerivedFields {
    pub fn v_x(&self) -> Field {
        spectral::derivative(&self.v, 1)
    }

    /// `v_xx = 4 v - u` exactly (no differentiation needed).
    pub fn v_xx(&self) -> Field {
        self.v.zip_map(&self.u, |v, u| 4.0 * v - u)
    }

    pub fn h_x(&self) -> Field {
        spectral::derivative(&self.h, 1)
    }
}

pub fn derived_fields(u: &Field) -> DerivedFields {
    let y = apply_helmholtz(u, 1.0);
    let v = resolvent(u, 4.0);
    let h = resolvent(&u.map(|x| x * x), 1.0);
    DerivedFields { u: u.clone(), y, v, h }
}
