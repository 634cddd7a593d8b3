//! Weighted virial identities and the smooth-variable evolution law, checked
//! by centred time differences of solver states.
//!
//! For a static weight `g`:
//!
//! ```text
//! d/dt ∫(4v²+5v_x²+v_xx²) g = (2/3)∫u³g' - 4∫u²v g' + a∫v h g' + ∫v_x h_x g'
//! d/dt ∫u³ g               = (3/4)∫u⁴g' + (9/4)∫(h² - h_x²) g'
//! d/dt ∫y g                = ∫y u g' + b∫(u² - u_x²) g'
//! ```
//!
//! Carrying the derivation through gives `a = 4` and `b = 1`
//! (`y_t = -(yu)_x - 2y u_x`). The set `a = 5`, `b = 3/2` is kept as
//! [`VirialCoefficients::ALTERNATE`]: the order study stalls on it, which is
//! how the two are told apart.

use serde::{Deserialize, Serialize};

use super::{dealiased_square, rk4};
use crate::error::{DpError, Result};
use crate::functionals::{psi, psi_prime, psi_second, psi_third, weighted_product_integral};
use crate::grid::Field;
use crate::helmholtz::invert_helmholtz;
use crate::identities::IdentityReport;
use crate::spectral::derivative;

/// Static weight `g` with closed-form `g'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VirialWeight {
    /// `g ≡ 1`.
    Constant,
    /// `g(x) = Ψ((x - center)/k)`.
    Psi { center: f64, k: f64 },
}

impl VirialWeight {
    pub fn g(&self, x: f64) -> f64 {
        match *self {
            VirialWeight::Constant => 1.0,
            VirialWeight::Psi { center, k } => psi((x - center) / k),
        }
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        match *self {
            VirialWeight::Constant => 0.0,
            VirialWeight::Psi { center, k } => psi_prime((x - center) / k) / k,
        }
    }

    pub fn g_second(&self, x: f64) -> f64 {
        match *self {
            VirialWeight::Constant => 0.0,
            VirialWeight::Psi { center, k } => psi_second((x - center) / k) / (k * k),
        }
    }

    pub fn g_third(&self, x: f64) -> f64 {
        match *self {
            VirialWeight::Constant => 0.0,
            VirialWeight::Psi { center, k } => psi_third((x - center) / k) / (k * k * k),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            VirialWeight::Psi { k, center } if !(k > 0.0) || !center.is_finite() => {
                Err(DpError::Invalid(format!("weight scale k = {k} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Coefficients `a` (of `∫v h g'`) and `b` (of `∫(u²-u_x²) g'`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialCoefficients {
    pub vh: f64,
    pub momentum: f64,
}

impl VirialCoefficients {
    pub const DERIVED: VirialCoefficients = VirialCoefficients { vh: 4.0, momentum: 1.0 };
    pub const ALTERNATE: VirialCoefficients = VirialCoefficients { vh: 5.0, momentum: 1.5 };
}

impl Default for VirialCoefficients {
    fn default() -> Self {
        VirialCoefficients::DERIVED
    }
}

/// Left-hand functionals `(∫(4v²+5v_x²+v_xx²)g, ∫u³g, ∫y g)`.
pub fn virial_functionals(u: &Field, w: &VirialWeight) -> [f64; 3] {
    let g = |x: f64| w.g(x);
    let v = invert_helmholtz(u, 4.0).expect("4 is a valid resolvent parameter");
    let v_x = derivative(&v, 1);
    let v_xx = v.zip_map(u, |v, u| 4.0 * v - u);
    let e = 4.0 * weighted_product_integral(&[&v, &v], g)
        + 5.0 * weighted_product_integral(&[&v_x, &v_x], g)
        + weighted_product_integral(&[&v_xx, &v_xx], g);
    let f = weighted_product_integral(&[u, u, u], g);
    // ∫y g = ∫u (g - g''): no second derivative of the (steep) field
    let m = weighted_product_integral(&[u], |x| w.g(x) - w.g_second(x));
    [e, f, m]
}

/// Right-hand sides of the three identities at `u`, with `h` built from the
/// dealiased square (the quantity the solver actually transports).
pub fn virial_rates(u: &Field, w: &VirialWeight, coef: VirialCoefficients) -> [f64; 3] {
    if *w == VirialWeight::Constant {
        return [0.0; 3];
    }
    let gp = |x: f64| w.g_prime(x);
    let int = |fs: &[&Field]| weighted_product_integral(fs, gp);
    let v = invert_helmholtz(u, 4.0).expect("4 is a valid resolvent parameter");
    let v_x = derivative(&v, 1);
    let h = invert_helmholtz(&dealiased_square(u), 1.0).expect("1 is a valid resolvent parameter");
    let h_x = derivative(&h, 1);
    let u_x = derivative(u, 1);
    let e = 2.0 / 3.0 * int(&[u, u, u]) - 4.0 * int(&[u, u, &v]) + coef.vh * int(&[&v, &h]) + int(&[&v_x, &h_x]);
    let f = 0.75 * int(&[u, u, u, u]) + 2.25 * (int(&[&h, &h]) - int(&[&h_x, &h_x]));
    // ∫y u g' = ∫(u² + u_x²) g' + ∫u u_x g''  and  ∫u u_x g'' = -½∫u² g'''
    let u2_g3 = weighted_product_integral(&[u, u], |x| w.g_third(x));
    let m = (1.0 + coef.momentum) * int(&[u, u]) + (1.0 - coef.momentum) * int(&[&u_x, &u_x]) - 0.5 * u2_g3;
    [e, f, m]
}

pub const VIRIAL_NAMES: [&str; 3] = ["virial_energy", "virial_cubic", "virial_momentum"];

/// Centred difference `(I(u₊) - I(u₋)) / 2τ` against the rates at `u₀`.
/// Residuals are relative to the sum of the magnitudes of both sides plus
/// the size of the functional, so `g ≡ 1` reduces to a drift check.
pub fn virial_reports(
    u_minus: &Field,
    u0: &Field,
    u_plus: &Field,
    tau: f64,
    w: &VirialWeight,
    coef: VirialCoefficients,
    tolerance: f64,
) -> Result<Vec<IdentityReport>> {
    w.validate()?;
    if !(tau > 0.0) {
        return Err(DpError::Invalid(format!("time step {tau} must be positive")));
    }
    let a = virial_functionals(u_minus, w);
    let b = virial_functionals(u_plus, w);
    let mid = virial_functionals(u0, w);
    let r = virial_rates(u0, w, coef);
    Ok((0..3)
        .map(|i| {
            let lhs = (b[i] - a[i]) / (2.0 * tau);
            let scale = lhs.abs() + r[i].abs() + mid[i].abs();
            IdentityReport::with_scale(VIRIAL_NAMES[i], lhs, r[i], scale, tolerance)
        })
        .collect())
}

/// Reports at every interior snapshot of an equally spaced `history`.
pub fn virial_residuals(
    history: &[(f64, Field)],
    w: &VirialWeight,
    coef: VirialCoefficients,
    tolerance: f64,
) -> Result<Vec<IdentityReport>> {
    if history.len() < 3 {
        return Err(DpError::Invalid("virial residuals need at least three snapshots".into()));
    }
    let mut out = Vec::new();
    for tri in history.windows(3) {
        let (ta, tb, tc) = (tri[0].0, tri[1].0, tri[2].0);
        let (h1, h2) = (tb - ta, tc - tb);
        if !(h1 > 0.0) || (h1 - h2).abs() > 1e-9 * h1 {
            return Err(DpError::Invalid(format!("snapshots around t = {tb} are not equally spaced")));
        }
        for mut r in virial_reports(&tri[0].1, &tri[1].1, &tri[2].1, h1, w, coef, tolerance)? {
            r.name = format!("{}@{tb}", r.name);
            out.push(r);
        }
    }
    Ok(out)
}

/// Least-squares slope of `log r` against `log dt`.
pub fn fitted_order(dts: &[f64], residuals: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> =
        dts.iter().zip(residuals).map(|(d, r)| (d.ln(), r.max(f64::MIN_POSITIVE).ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in &pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    pub dts: Vec<f64>,
    /// `residuals[i][k]`: absolute residual of identity `i` at `dts[k]`.
    pub residuals: [Vec<f64>; 3],
    pub orders: [f64; 3],
}

/// Residuals of the three identities at `u0` with `u±` produced by one RK4
/// step of `±dt`, for each `dt`.
pub fn virial_order_study(u0: &Field, w: &VirialWeight, coef: VirialCoefficients, dts: &[f64]) -> Result<OrderStudy> {
    if dts.len() < 2 {
        return Err(DpError::Invalid("order study needs at least two time steps".into()));
    }
    let mut residuals: [Vec<f64>; 3] = Default::default();
    for &dt in dts {
        let reports = virial_reports(&rk4(u0, -dt), u0, &rk4(u0, dt), dt, w, coef, f64::INFINITY)?;
        for (i, r) in reports.iter().enumerate() {
            residuals[i].push(r.residual);
        }
    }
    let orders = [0, 1, 2].map(|i| fitted_order(dts, &residuals[i]));
    Ok(OrderStudy { dts: dts.to_vec(), residuals, orders })
}

/// Which law the time-differenced smooth variable follows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothVariableCheck {
    /// `v_t` against `-½h_x`.
    pub half: IdentityReport,
    /// `v_t` against `-h_x`.
    pub full: IdentityReport,
    /// Same residual as `half` with `dt/2`.
    pub half_refined: f64,
    /// `‖v_t‖ / ‖h_x‖`, ≈ ½ when the half-factor law holds.
    pub ratio: f64,
    /// Observed order of the matching form under `dt → dt/2`.
    pub order: f64,
    pub verdict: String,
}

fn l2(f: &Field) -> f64 {
    f.l2_norm_sq().sqrt()
}

fn smooth_variable_residuals(u: &Field, dt: f64) -> (Field, Field) {
    let v = |f: &Field| invert_helmholtz(f, 4.0).expect("4 is a valid resolvent parameter");
    let vt = (&v(&rk4(u, dt)) - &v(&rk4(u, -dt))).scale(0.5 / dt);
    let h_x = derivative(&invert_helmholtz(&dealiased_square(u), 1.0).expect("1 is valid"), 1);
    (vt, h_x)
}

/// Compares the centred difference of `v` with `-½h_x` and with `-h_x`.
pub fn smooth_variable_rhs_check(u: &Field, dt: f64, tolerance: f64) -> Result<SmoothVariableCheck> {
    if !(dt > 0.0) {
        return Err(DpError::Invalid(format!("time step {dt} must be positive")));
    }
    let (vt, h_x) = smooth_variable_residuals(u, dt);
    let vt_n = l2(&vt);
    let hx_n = l2(&h_x);
    let r_half = l2(&(&vt + &h_x.scale(0.5)));
    let r_full = l2(&(&vt + &h_x));
    let (vt2, _) = smooth_variable_residuals(u, 0.5 * dt);
    let r_half2 = l2(&(&vt2 + &h_x.scale(0.5)));
    let scale = vt_n.max(0.5 * hx_n);
    let half = IdentityReport::with_scale("v_t = -h_x/2", vt_n, 0.5 * hx_n, scale, tolerance);
    let half = IdentityReport {
        residual: r_half,
        rel_residual: if scale > 0.0 { r_half / scale } else { r_half },
        pass: false,
        ..half
    };
    let half = IdentityReport { pass: half.rel_residual <= tolerance, ..half };
    let fscale = vt_n.max(hx_n);
    let r_full_rel = if fscale > 0.0 { r_full / fscale } else { r_full };
    let full = IdentityReport {
        name: "v_t = -h_x".into(),
        lhs: vt_n,
        rhs: hx_n,
        residual: r_full,
        rel_residual: r_full_rel,
        pass: r_full_rel <= tolerance,
        ..half.clone()
    };
    let ratio = if hx_n > 0.0 { vt_n / hx_n } else { 0.0 };
    let order = if r_half > 0.0 && r_half2 > 0.0 { (r_half / r_half2).log2() } else { f64::NAN };
    let verdict = match (half.pass, full.pass) {
        (true, false) => "v_t = -h_x/2",
        (false, true) => "v_t = -h_x",
        (true, true) => "indistinguishable (h_x negligible)",
        (false, false) => "neither",
    }
    .to_string();
    Ok(SmoothVariableCheck { half, full, half_refined: r_half2, ratio, order, verdict })
}
