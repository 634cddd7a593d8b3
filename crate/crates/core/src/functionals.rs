//! Conserved functionals `M`, `E`, `F`, the H-norm, the weights `Ψ`, `Φ` and
//! the localized/weighted functionals built from them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{DpError, Result};
use crate::grid::{Field, Grid};
use crate::helmholtz::derived_fields;
use crate::spectral::{self, product_integral};

/// `M`, `E`, `F` together with the residuals of their alternative forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedTriple {
    pub m: f64,
    pub e: f64,
    pub f: f64,
    /// `|∫(4v²+5v_x²+v_xx²) - ∫yv|`.
    pub e_residual: f64,
    /// `|∫u³ - ∫(-v_xx³ + 12 v v_xx² - 48 v² v_xx + 64 v³)|`.
    pub f_residual: f64,
}

/// Energy density `4v² + 5v_x² + v_xx²`.
pub fn energy_density(v: &Field, v_x: &Field, v_xx: &Field) -> Field {
    let mut out = Vec::with_capacity(v.values().len());
    for ((a, b), c) in v.values().iter().zip(v_x.values()).zip(v_xx.values()) {
        out.push(4.0 * a * a + 5.0 * b * b + c * c);
    }
    Field::from_vec(*v.grid(), out)
}

/// Cubic density in the smooth variable, `-v_xx³ + 12 v v_xx² - 48 v² v_xx + 64 v³`,
/// which equals `u³` pointwise because `u = 4v - v_xx`.
pub fn cubic_density(v: &Field, v_xx: &Field) -> Field {
    v.zip_map(v_xx, |a, c| -c * c * c + 12.0 * a * c * c - 48.0 * a * a * c + 64.0 * a * a * a)
}

pub fn conserved(u: &Field) -> ConservedTriple {
    let d = derived_fields(u);
    let v_x = d.v_x();
    let v_xx = d.v_xx();
    let m = u.quadrature();
    let e = energy_density(&d.v, &v_x, &v_xx).quadrature();
    let e_yv = (&d.y * &d.v).quadrature();
    // ∫u³ of the interpolant, computed without aliasing
    let f = product_integral(&[u, u, u]);
    let v = &d.v;
    let f_v = -product_integral(&[&v_xx, &v_xx, &v_xx]) + 12.0 * product_integral(&[v, &v_xx, &v_xx])
        - 48.0 * product_integral(&[v, v, &v_xx])
        + 64.0 * product_integral(&[v, v, v]);
    ConservedTriple { m, e, f, e_residual: (e - e_yv).abs(), f_residual: (f - f_v).abs() }
}

/// `‖u‖_H = √E(u)`.
pub fn h_norm(u: &Field) -> f64 {
    conserved(u).e.max(0.0).sqrt()
}

/// `Ψ(x) = (2/π) arctan(e^{x/6})`.
pub fn psi(x: f64) -> f64 {
    if x <= 0.0 {
        2.0 / PI * (x / 6.0).exp().atan()
    } else {
        1.0 - psi(-x)
    }
}

/// `Ψ'(x) = sech(x/6) / (6π)`.
pub fn psi_prime(x: f64) -> f64 {
    1.0 / (6.0 * PI * (x / 6.0).cosh())
}

/// `Ψ''(x) = -sech(x/6) tanh(x/6) / (36π)`.
pub fn psi_second(x: f64) -> f64 {
    -(x / 6.0).tanh() / (36.0 * PI * (x / 6.0).cosh())
}

/// `Ψ'''(x) = sech(x/6) (1 - 2 sech²(x/6)) / (216π)`.
pub fn psi_third(x: f64) -> f64 {
    let s = 1.0 / (x / 6.0).cosh();
    s * (1.0 - 2.0 * s * s) / (216.0 * PI)
}

/// Piecewise-linear ramp: 0 for `x <= 0`, `x/2` on `[0, 2]`, 1 for `x >= 2`.
pub fn phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 * x
    }
}

pub fn phi_prime(x: f64) -> f64 {
    if x > 0.0 && x < 2.0 {
        0.5
    } else {
        0.0
    }
}

/// Smoothly scaled weight `Ψ_K(x) = Ψ(x/K)`.
pub fn psi_k(x: f64, k: f64) -> f64 {
    psi(x / k)
}

/// Width scale and centres of the moving weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub k: f64,
    pub centers: Vec<f64>,
    pub lambda: f64,
}

impl WeightSpec {
    pub fn new(k: f64, centers: Vec<f64>, lambda: f64) -> Result<WeightSpec> {
        let s = WeightSpec { k, centers, lambda };
        s.validate()?;
        Ok(s)
    }

    /// `K = √L / 8`.
    pub fn default_k(separation: f64) -> f64 {
        separation.sqrt() / 8.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(DpError::Invalid(format!("weight width K = {} must be positive", self.k)));
        }
        if self.centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DpError::Invalid("weight centres must be strictly increasing".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(DpError::Invalid(format!("λ = {} must be nonnegative", self.lambda)));
        }
        Ok(())
    }

    /// Additional check when attached to a train whose slowest peakon has speed `c1`.
    pub fn validate_lambda(&self, c1: f64) -> Result<()> {
        if self.lambda > 1.0 / (2.0 * c1) * (1.0 + 1e-12) {
            return Err(DpError::Invalid(format!("λ = {} exceeds 1/(2 c_1) = {}", self.lambda, 1.0 / (2.0 * c1))));
        }
        Ok(())
    }

    /// `Ψ_K(x - y_j)`.
    pub fn psi_j(&self, x: f64, j: usize) -> f64 {
        psi_k(x - self.centers[j], self.k)
    }

    /// Window `Φ_i = Ψ_K(· - y_i) - Ψ_K(· - y_{i+1})` (last window open to the right).
    pub fn window(&self, x: f64, i: usize) -> f64 {
        let a = self.psi_j(x, i);
        if i + 1 < self.centers.len() {
            a - self.psi_j(x, i + 1)
        } else {
            a
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.centers.len() {
            return Err(DpError::Invalid(format!("weight index {i} out of range ({} centres)", self.centers.len())));
        }
        Ok(())
    }

    pub fn window_field(&self, grid: &Grid, i: usize) -> Result<Field> {
        self.check_index(i)?;
        Ok(Field::from_fn(*grid, |x| self.window(x, i)))
    }
}

/// `∫ (Π fields) w` with the product of the interpolants sampled on a
/// refinement fine enough to hold it exactly; `w` is evaluated in closed form.
pub fn weighted_product_integral(fields: &[&Field], w: impl Fn(f64) -> f64) -> f64 {
    let g = *fields[0].grid();
    let m = spectral::product_size(g.n(), fields.len() + 1);
    let s = spectral::product_samples(fields, m);
    let h = g.length() / m as f64;
    let mut acc = 0.0;
    for (j, a) in s.iter().enumerate() {
        acc += a * w(g.left() + j as f64 * h);
    }
    acc * h
}

/// `∫(4v²+5v_x²+v_xx²) w` and `∫u³ w`.
pub fn weighted_energy_cubic(u: &Field, w: impl Fn(f64) -> f64 + Copy) -> (f64, f64) {
    let d = derived_fields(u);
    let v_x = d.v_x();
    let v_xx = d.v_xx();
    let e = 4.0 * weighted_product_integral(&[&d.v, &d.v], w)
        + 5.0 * weighted_product_integral(&[&v_x, &v_x], w)
        + weighted_product_integral(&[&v_xx, &v_xx], w);
    let f = weighted_product_integral(&[u, u, u], w);
    (e, f)
}

/// Localized `(E_i, F_i)` with the window `Φ_i`.
pub fn localized_pair(u: &Field, spec: &WeightSpec, i: usize) -> Result<(f64, f64)> {
    spec.check_index(i)?;
    Ok(weighted_energy_cubic(u, |x| spec.window(x, i)))
}

/// `𝒥_{j,λ,K} = ∫[(4v²+5v_x²+v_xx²) - λu³] Ψ_K(· - y_j)`.
pub fn j_functional(u: &Field, spec: &WeightSpec, j: usize) -> Result<f64> {
    spec.check_index(j)?;
    let (e, f) = weighted_energy_cubic(u, |x| spec.psi_j(x, j));
    Ok(e - spec.lambda * f)
}

/// Periodic Green function of `a - d²` on a box of length `l`, with `sa = √a`:
/// `cosh(sa(|s| - l/2)) / (2 sa sinh(sa l/2))`, written without overflow.
pub fn periodic_green(sa: f64, l: f64, s: f64) -> f64 {
    let s = (s - l * (s / l).round()).abs();
    ((sa * (s - l)).exp() + (-sa * s).exp()) / (2.0 * sa * (1.0 - (-sa * l).exp()))
}

/// `∫ φ_c(·-r) · (4-d²)^{-1} φ_d(·-q)` for periodic peakons of unit speed,
/// i.e. `(4/3)[G_1 - G_4](r - q)`.
fn periodic_pair(l: f64, s: f64) -> f64 {
    4.0 / 3.0 * (periodic_green(1.0, l, s) - periodic_green(2.0, l, s))
}

/// `E` of a periodic superposition of peakons `(c_j, r_j)`, in closed form.
pub fn periodic_train_energy(length: f64, peaks: &[(f64, f64)]) -> f64 {
    let mut e = 0.0;
    for &(ci, ri) in peaks {
        for &(cj, rj) in peaks {
            e += ci * cj * periodic_pair(length, ri - rj);
        }
    }
    e
}

/// `‖u - Σ φ_{c_j}(· - r_j)‖²_H` with the peakons taken as exact periodic
/// functions: resolved modes are summed directly and the unresolved peakon tail
/// is added in closed form, so no corner is ever sampled.
pub fn h_distance_sq_to_peakons(u: &Field, peaks: &[(f64, f64)]) -> f64 {
    let g = u.grid();
    let n = g.n();
    let l = g.length();
    let coefs = spectral::fft(u.values());
    let inv_n = 1.0 / n as f64;
    let b_of = |k: f64| -> Complex64 {
        let mut b = Complex64::new(0.0, 0.0);
        for &(c, r) in peaks {
            let phase = -k * (r - g.left());
            b += Complex64::from_polar(2.0 * c / (l * (1.0 + k * k)), phase);
        }
        b
    };
    let mut resolved = 0.0;
    let mut peak_resolved = 0.0;
    let mut add = |a: Complex64, k: f64| {
        let m = (1.0 + k * k) / (4.0 + k * k);
        let b = b_of(k);
        resolved += (a - b).norm_sqr() * m;
        peak_resolved += b.norm_sqr() * m;
    };
    for j in 0..n {
        let k = spectral::wavenumber(j, n, l);
        let a = coefs[j] * inv_n;
        if j == n / 2 {
            add(a * 0.5, k);
            add(a * 0.5, -k);
        } else {
            add(a, k);
        }
    }
    let tail = periodic_train_energy(l, peaks) - l * peak_resolved;
    (l * resolved + tail).max(0.0)
}

pub fn h_distance_to_peakons(u: &Field, peaks: &[(f64, f64)]) -> f64 {
    h_distance_sq_to_peakons(u, peaks).sqrt()
}
