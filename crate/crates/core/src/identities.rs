//! The identity chain around the modulation point: auxiliary profiles `g`
//! and `h`, the quadratic identities, the `∫g²` / `∫hg²` identities and the
//! cubic bound, plus their windowed versions for trains.
//!
//! Integrals of piecewise profiles are evaluated exactly on the trigonometric
//! interpolant (split at `ξ`), so residuals measure the identities themselves
//! rather than the quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{critical_extremum, ExtremumKind};
use crate::error::{DpError, Result};
use crate::functionals::{h_distance_sq_to_peakons, weighted_energy_cubic, WeightSpec};
use crate::grid::{Field, Grid};
use crate::helmholtz::{derived_fields, DerivedFields};
use crate::profiles::{self, Perturbation, PerturbationShape, TrainSpec};
use crate::spectral::{product_integral, product_samples, product_size, split_integral, Spectrum};

/// Below this scale a relative residual falls back to the absolute one.
pub const ABS_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// `lhs = rhs`; passes when `rel_residual <= tolerance`.
    Equality,
    /// `lhs <= rhs`; `residual` is the violation `max(lhs - rhs, 0)`.
    Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub kind: ReportKind,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub rel_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityReport {
    pub const CSV_HEADER: &'static str = "name,lhs,rhs,residual,rel_residual,tolerance,pass";

    /// Equality normalized by `max(|lhs|, |rhs|)`.
    pub fn equality(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> IdentityReport {
        IdentityReport::with_scale(name, lhs, rhs, lhs.abs().max(rhs.abs()), tolerance)
    }

    /// Equality normalized by an explicit scale (`1.0` gives an absolute test).
    pub fn with_scale(name: &str, lhs: f64, rhs: f64, scale: f64, tolerance: f64) -> IdentityReport {
        let residual = (lhs - rhs).abs();
        let rel = if scale > ABS_FLOOR { residual / scale } else { residual };
        IdentityReport {
            name: name.to_string(),
            kind: ReportKind::Equality,
            lhs,
            rhs,
            residual,
            rel_residual: rel,
            tolerance,
            pass: rel <= tolerance,
        }
    }

    /// `lhs <= rhs` up to `tolerance` relative to `max(|rhs|, ABS_FLOOR)`.
    pub fn inequality(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> IdentityReport {
        let residual = (lhs - rhs).max(0.0);
        let rel = residual / rhs.abs().max(ABS_FLOOR);
        IdentityReport {
            name: name.to_string(),
            kind: ReportKind::Inequality,
            lhs,
            rhs,
            residual,
            rel_residual: rel,
            tolerance,
            pass: lhs.is_finite() && rhs.is_finite() && rel <= tolerance,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.3e},{}",
            self.name, self.lhs, self.rhs, self.residual, self.rel_residual, self.tolerance, self.pass
        )
    }
}

/// Write reports as CSV with header.
pub fn write_csv(reports: &[IdentityReport], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "{}", IdentityReport::CSV_HEADER)?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Left/right branches of `g = 2v + v_xx ∓ 3v_x`.
fn g_branches(d: &DerivedFields) -> (Field, Field) {
    let v_x = d.v_x();
    let base = d.v.zip_map(&d.v_xx(), |v, w| 2.0 * v + w);
    (&base - &v_x.scale(3.0), &base + &v_x.scale(3.0))
}

/// Left/right branches of the auxiliary `h = -v_xx ∓ 6v_x + 16v`.
fn h_branches(d: &DerivedFields) -> (Field, Field) {
    let v_x = d.v_x();
    let base = d.v.zip_map(&d.v_xx(), |v, w| 16.0 * v - w);
    (&base - &v_x.scale(6.0), &base + &v_x.scale(6.0))
}

/// Nodes at or left of `xi` (and the node nearest `xi`) take the left branch.
fn piecewise(left: &Field, right: &Field, xi: f64) -> Field {
    let g = *left.grid();
    let near = g.nearest_node(xi);
    let vals =
        (0..g.n()).map(|j| if g.node(j) <= xi || j == near { left.values()[j] } else { right.values()[j] }).collect();
    Field::from_vec(g, vals)
}

/// `g(x) = 2v + v_xx - 3v_x` for `x <= ξ`, `2v + v_xx + 3v_x` for `x > ξ`.
pub fn g_profile(u: &Field, xi: f64) -> Field {
    let (l, r) = g_branches(&derived_fields(u));
    piecewise(&l, &r, xi)
}

/// `h(x) = -v_xx - 6v_x + 16v` for `x <= ξ`, `-v_xx + 6v_x + 16v` for `x > ξ`.
pub fn h_profile(u: &Field, xi: f64) -> Field {
    let (l, r) = h_branches(&derived_fields(u));
    piecewise(&l, &r, xi)
}

/// `∫ (Π left)·w` over `[-L/2, ξ]` plus `∫ (Π right)·w` over `[ξ, L/2]`.
/// Exact without a weight; with a smooth weight the product is resampled
/// on a refinement and integrated as an interpolant.
fn weighted_split(left: &[&Field], right: &[&Field], w: Option<&dyn Fn(f64) -> f64>, xi: f64) -> f64 {
    let g = *left[0].grid();
    let extra = if w.is_some() { 2 } else { 0 };
    let m = product_size(g.n(), left.len() + extra);
    let spec = |fs: &[&Field]| {
        let mut s = product_samples(fs, m);
        if let Some(w) = w {
            let h = g.length() / m as f64;
            for (j, a) in s.iter_mut().enumerate() {
                *a *= w(g.left() + j as f64 * h);
            }
        }
        Spectrum::from_samples(g.length(), &s)
    };
    split_integral(&spec(left), &spec(right), g.wrap(xi).0)
}

/// `E` of the interpolant, `∫(4v²+5v_x²+v_xx²)`, computed exactly.
fn exact_energy(d: &DerivedFields) -> f64 {
    let v_x = d.v_x();
    let v_xx = d.v_xx();
    4.0 * product_integral(&[&d.v, &d.v]) + 5.0 * product_integral(&[&v_x, &v_x]) + product_integral(&[&v_xx, &v_xx])
}

/// The modulation point: the maximum of `v`, polished to a zero of `v_x`.
pub fn locate_xi(u: &Field) -> f64 {
    critical_extremum(&derived_fields(u).v, None, ExtremumKind::Max).x
}

fn v_at(d: &DerivedFields, xi: f64) -> f64 {
    Spectrum::of_field(&d.v).eval(xi)
}

/// `∫g² = E(u) - 12 v(ξ)²` (valid at critical points of `v`).
pub fn gg2_report(u: &Field, xi: f64, tolerance: f64) -> IdentityReport {
    let d = derived_fields(u);
    let (gl, gr) = g_branches(&d);
    let lhs = weighted_split(&[&gl, &gl], &[&gr, &gr], None, xi);
    let m = v_at(&d, xi);
    IdentityReport::equality("gg2", lhs, exact_energy(&d) - 12.0 * m * m, tolerance)
}

/// `F(u) - 144 v(ξ)³ = ∫ h g²`.
pub fn hh2_report(u: &Field, xi: f64, tolerance: f64) -> IdentityReport {
    let d = derived_fields(u);
    let (gl, gr) = g_branches(&d);
    let (hl, hr) = h_branches(&d);
    let lhs = weighted_split(&[&hl, &gl, &gl], &[&hr, &gr, &gr], None, xi);
    let m = v_at(&d, xi);
    IdentityReport::equality("hh2", lhs, product_integral(&[u, u, u]) - 144.0 * m.powi(3), tolerance)
}

/// `∫g² = ‖u - φ_c(· - ξ)‖²_H - 12(c/6 - v(ξ))²`.
pub fn improvement_report(u: &Field, xi: f64, c: f64, tolerance: f64) -> IdentityReport {
    let d = derived_fields(u);
    let (gl, gr) = g_branches(&d);
    let lhs = weighted_split(&[&gl, &gl], &[&gr, &gr], None, xi);
    let m = v_at(&d, xi);
    let dist = h_distance_sq_to_peakons(u, &[(c, xi)]);
    IdentityReport::equality("improvement", lhs, dist - 12.0 * (c / 6.0 - m).powi(2), tolerance)
}

/// `E(u) - E(φ_c) = ‖u - φ_c(· - ξ)‖²_H + 4c(v(ξ) - c/6)` with `ξ` the argmax of `v`.
pub fn quadratic_identity(u: &Field, c: f64) -> IdentityReport {
    quadratic_identity_at(u, c, locate_xi(u), 1e-6)
}

pub fn quadratic_identity_at(u: &Field, c: f64, xi: f64, tolerance: f64) -> IdentityReport {
    let d = derived_fields(u);
    let lhs = exact_energy(&d) - c * c / 3.0;
    let rhs = h_distance_sq_to_peakons(u, &[(c, xi)]) + 4.0 * c * (v_at(&d, xi) - c / 6.0);
    IdentityReport::equality("quadratic", lhs, rhs, tolerance)
}

/// Extrema of `v` near each bump of a train: maxima for peakons, minima for
/// antipeakons, searched within `±L/4` of `guesses`.
pub fn locate_train(u: &Field, spec: &TrainSpec, guesses: &[f64]) -> Vec<f64> {
    let v = derived_fields(u).v;
    let half = 0.25 * spec.separation;
    spec.velocities
        .iter()
        .zip(guesses)
        .map(|(&c, &z)| critical_extremum(&v, Some((z - half, z + half)), ExtremumKind::for_speed(c)).x)
        .collect()
}

/// The global quadratic identity for a train, together with the size of the
/// peakon-peakon interaction it neglects.
pub fn train_quadratic_identity(u: &Field, spec: &TrainSpec, xi: &[f64]) -> Result<(IdentityReport, IdentityReport)> {
    if xi.len() != spec.len() {
        return Err(DpError::Invalid(format!("{} modulation points for {} bumps", xi.len(), spec.len())));
    }
    let g = u.grid();
    let mut min_gap = f64::INFINITY;
    for w in xi.windows(2) {
        min_gap = min_gap.min(w[1] - w[0]);
    }
    if xi.len() > 1 {
        // the wrap-around gap through the periodic seam
        min_gap = min_gap.min(g.length() - (xi[xi.len() - 1] - xi[0]));
    }
    if min_gap < 0.5 * spec.separation {
        return Err(DpError::Invalid(format!(
            "modulation points {min_gap} apart, need at least L/2 = {}",
            0.5 * spec.separation
        )));
    }
    let d = derived_fields(u);
    let vspec = Spectrum::of_field(&d.v);
    let peaks: Vec<(f64, f64)> = spec.velocities.iter().copied().zip(xi.iter().copied()).collect();
    let e = exact_energy(&d);
    let lhs = e - spec.velocities.iter().map(|c| c * c / 3.0).sum::<f64>();
    let mut rhs = h_distance_sq_to_peakons(u, &peaks);
    for &(c, x) in &peaks {
        rhs += 4.0 * c * (vspec.eval(x) - c / 6.0);
    }
    let l1 = spec.l1();
    let tol = l1 * (-0.5 * spec.separation).exp() + 1e-12 * e.max(1.0);
    let main = IdentityReport::with_scale("train_quadratic", lhs, rhs, 1.0, tol);
    let mut cross: f64 = 0.0;
    for (i, &(_, xi_i)) in peaks.iter().enumerate() {
        let mut s = 0.0;
        for (j, &(cj, xj)) in peaks.iter().enumerate() {
            if i != j {
                let r = g.min_image(xi_i - xj).abs();
                s += cj / 3.0 * (-r).exp() - cj / 6.0 * (-2.0 * r).exp();
            }
        }
        cross = cross.max(s.abs());
    }
    let cross_report = IdentityReport::inequality(
        "train_cross_term",
        cross,
        l1 * (-min_gap.min(2.0 * spec.separation / 3.0)).exp(),
        0.0,
    );
    Ok((main, cross_report))
}

/// `P(M) = M³ - E M / 4 + F / 72`.
pub fn cubic_polynomial(m: f64, e: f64, f: f64) -> f64 {
    m.powi(3) - 0.25 * e * m + f / 72.0
}

/// `P(M)` at the peakon values `E = c²/3`, `F = 2c³/3`, in factorized form `(c/6 - M)²(M + c/3)`.
pub fn peakon_cubic_factorized(m: f64, c: f64) -> f64 {
    (c / 6.0 - m).powi(2) * (m + c / 3.0)
}

/// Thresholds of the cubic-bound hypotheses (`‖u - φ_c(·-ξ)‖_H ≤ distance_factor (2+ε)ε`,
/// `‖u - φ_c(·-ξ)‖_∞ ≤ linf_fraction c`, `u - 6v ≤ ε²` on `[ξ - θ, ξ + θ]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicThresholds {
    pub distance_factor: f64,
    pub linf_fraction: f64,
    pub theta_half_width: f64,
}

impl Default for CubicThresholds {
    fn default() -> Self {
        CubicThresholds { distance_factor: 3.0, linf_fraction: 1e-5, theta_half_width: 6.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicBoundReport {
    pub report: IdentityReport,
    pub m: f64,
    pub e: f64,
    pub f: f64,
    /// `(c/6 - M)²(M + c/3)`.
    pub factorized: f64,
    /// `max h - 18M - ε²` over the box; `<= 0` is the key step of the bound.
    pub h_margin: f64,
    pub hypotheses_hold: bool,
    pub warnings: Vec<String>,
}

/// `M³ - E M/4 + F/72 <= (2+c)² ε⁴ / 8` with `ε² = alpha2`. Hypotheses are
/// checked and reported; the evaluation is carried out regardless.
pub fn cubic_bound(u: &Field, c: f64, alpha2: f64, thr: &CubicThresholds) -> CubicBoundReport {
    let d = derived_fields(u);
    let xi = critical_extremum(&d.v, None, ExtremumKind::Max).x;
    let m = v_at(&d, xi);
    let e = exact_energy(&d);
    let f = product_integral(&[u, u, u]);
    let eps = alpha2.max(0.0).sqrt();
    let mut warnings = Vec::new();
    let dist = h_distance_sq_to_peakons(u, &[(c, xi)]).sqrt();
    if dist > thr.distance_factor * (2.0 + eps) * eps {
        warnings.push(format!("H-distance {dist:.3e} exceeds {:.3e}", thr.distance_factor * (2.0 + eps) * eps));
    }
    let g = *u.grid();
    let linf =
        (0..g.n()).map(|j| (u.values()[j] - c * (-g.min_image(g.node(j) - xi).abs()).exp()).abs()).fold(0.0, f64::max);
    if linf > thr.linf_fraction * c {
        warnings.push(format!("L-infinity distance {linf:.3e} exceeds {:.3e}", thr.linf_fraction * c));
    }
    let mut excess: f64 = f64::NEG_INFINITY;
    for j in 0..g.n() {
        if g.min_image(g.node(j) - xi).abs() <= thr.theta_half_width {
            excess = excess.max(u.values()[j] - 6.0 * d.v.values()[j]);
        }
    }
    if excess > alpha2 {
        warnings.push(format!("u - 6v reaches {excess:.3e} > {alpha2:.3e} near the crest"));
    }
    let (hl, hr) = h_branches(&d);
    let h = piecewise(&hl, &hr, xi);
    let h_margin = h.max() - 18.0 * m - alpha2;
    let lhs = cubic_polynomial(m, e, f);
    let rhs = (2.0 + c).powi(2) * alpha2 * alpha2 / 8.0;
    for w in &warnings {
        log::debug!("cubic bound hypothesis: {w}");
    }
    CubicBoundReport {
        report: IdentityReport::inequality("cubic_bound", lhs, rhs, 1e-9),
        m,
        e,
        f,
        factorized: peakon_cubic_factorized(m, c),
        h_margin,
        hypotheses_hold: warnings.is_empty(),
        warnings,
    }
}

/// `|E(u) - E(φ_c)| <= 2γ(2+c)` and `|F(u) - F(φ_c)| <= 6γ(2+c)²` with
/// `γ = ‖u - φ_c(· - r)‖_H` measured.
pub fn distance_bounds(u: &Field, c: f64, r: f64) -> (f64, [IdentityReport; 2]) {
    let d = derived_fields(u);
    let gamma = h_distance_sq_to_peakons(u, &[(c, r)]).sqrt();
    let de = (exact_energy(&d) - c * c / 3.0).abs();
    let df = (product_integral(&[u, u, u]) - 2.0 * c.powi(3) / 3.0).abs();
    (
        gamma,
        [
            IdentityReport::inequality("energy_distance", de, 2.0 * gamma * (2.0 + c), 0.0),
            IdentityReport::inequality("cubic_distance", df, 6.0 * gamma * (2.0 + c).powi(2), 0.0),
        ],
    )
}

/// Per-bump results of the windowed identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedRecord {
    pub index: usize,
    pub xi: f64,
    pub m: f64,
    pub e_i: f64,
    pub f_i: f64,
    /// `∫ g_i² Φ_i` and `E_i - 12 M_i²`.
    pub gg_lhs: f64,
    pub gg_rhs: f64,
    /// `∫ h_i g_i² Φ_i` and `F_i - 144 M_i³ Φ_i(ξ_i)`.
    pub hh_lhs: f64,
    pub hh_rhs: f64,
    /// `‖u‖_H`.
    pub norm: f64,
}

impl LocalizedRecord {
    pub fn gg_residual(&self) -> f64 {
        (self.gg_lhs - self.gg_rhs).abs()
    }

    pub fn hh_residual(&self) -> f64 {
        (self.hh_lhs - self.hh_rhs).abs()
    }

    /// `18 M_i E_i - 72 M_i³ - F_i`; nonnegative in the regime of the cubic bound.
    pub fn cubic_margin(&self) -> f64 {
        18.0 * self.m * self.e_i - 72.0 * self.m.powi(3) - self.f_i
    }
}

/// Windowed identities for every bump of a train: `Φ_i` from `weights`, `g_i`,
/// `h_i` split at `ξ_i`.
pub fn localized_records(
    u: &Field,
    spec: &TrainSpec,
    weights: &WeightSpec,
    xi: &[f64],
) -> Result<Vec<LocalizedRecord>> {
    let n = spec.len();
    if xi.len() != n || weights.centers.len() != n {
        return Err(DpError::Invalid(format!(
            "{n} bumps but {} modulation points and {} windows",
            xi.len(),
            weights.centers.len()
        )));
    }
    for (i, &x) in xi.iter().enumerate() {
        let w = weights.window(x, i);
        if w < 0.5 {
            return Err(DpError::Invalid(format!("window {i} has weight {w:.3} at its modulation point {x}")));
        }
    }
    let d = derived_fields(u);
    let vspec = Spectrum::of_field(&d.v);
    let (gl, gr) = g_branches(&d);
    let (hl, hr) = h_branches(&d);
    let norm = exact_energy(&d).max(0.0).sqrt();
    let mut out = Vec::with_capacity(n);
    for (i, &x) in xi.iter().enumerate() {
        let w = |s: f64| weights.window(s, i);
        let (e_i, f_i) = weighted_energy_cubic(u, w);
        let m = vspec.eval(x);
        let gg_lhs = weighted_split(&[&gl, &gl], &[&gr, &gr], Some(&w), x);
        let hh_lhs = weighted_split(&[&hl, &gl, &gl], &[&hr, &gr, &gr], Some(&w), x);
        out.push(LocalizedRecord {
            index: i,
            xi: x,
            m,
            e_i,
            f_i,
            gg_lhs,
            gg_rhs: e_i - 12.0 * m * m,
            hh_lhs,
            hh_rhs: f_i - 144.0 * m.powi(3) * w(x),
            norm,
        });
    }
    Ok(out)
}

/// Reports for the windowed identities. Residuals are normalized by `‖u‖²_H`
/// (resp. `‖u‖³_H`) and compared with the envelope `envelope · L^{-1/2}`; the
/// cubic inequality is reported for right-moving bumps.
pub fn localized_identity_suite(
    u: &Field,
    spec: &TrainSpec,
    weights: &WeightSpec,
    xi: &[f64],
    envelope: f64,
) -> Result<Vec<IdentityReport>> {
    let recs = localized_records(u, spec, weights, xi)?;
    let tol = envelope / spec.separation.sqrt();
    let mut out = Vec::new();
    for r in &recs {
        let n2 = r.norm * r.norm;
        out.push(IdentityReport::with_scale(&format!("gg22[{}]", r.index), r.gg_lhs, r.gg_rhs, n2, tol));
        out.push(IdentityReport::with_scale(&format!("hh22[{}]", r.index), r.hh_lhs, r.hh_rhs, n2 * r.norm, tol));
        if spec.velocities[r.index] > 0.0 {
            out.push(IdentityReport::inequality(
                &format!("cubic_local[{}]", r.index),
                r.f_i,
                18.0 * r.m * r.e_i - 72.0 * r.m.powi(3) + tol * n2 * r.norm,
                0.0,
            ));
        }
    }
    Ok(out)
}

/// Mollified peakon `φ_c` at the origin with random Hypothesis-1 momentum
/// perturbations of relative size `amp`: positive bumps right of the crest,
/// negative bumps left of it, and a random change of the peakon mass.
pub fn random_near_peakon(grid: &Grid, c: f64, amp: f64, seed: u64, n_moll: u32) -> Result<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass = 2.0 * c;
    let peak = c * (1.0 + amp * rng.gen_range(-1.0..1.0));
    let mut perts = Vec::new();
    for _ in 0..rng.gen_range(1..=2) {
        perts.push(Perturbation {
            shape: PerturbationShape::Bump,
            amplitude: amp * mass * rng.gen_range(0.2..1.0),
            center: rng.gen_range(2.0..8.0),
            width: rng.gen_range(0.4..1.2),
        });
    }
    for _ in 0..rng.gen_range(0..=2) {
        perts.push(Perturbation {
            shape: PerturbationShape::LeftNegativeMomentum,
            amplitude: amp * mass * rng.gen_range(0.2..1.0),
            center: rng.gen_range(-8.0..-2.0),
            width: rng.gen_range(0.4..1.2),
        });
    }
    profiles::perturbed_profile(grid, &[(peak, 0.0)], &perts, n_moll)
}
