//! Explicit profiles (peakons, smooth peakons, shock peakons, trains) and
//! mollified sign-structured initial data.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::grid::{Field, Grid};
use crate::helmholtz;

/// `∫_{-1}^{1} exp(1/(x^2-1)) dx`.
pub const MOLLIFIER_MASS: f64 = 0.443_993_816_168_079_4;

fn nonzero(c: f64) -> Result<()> {
    if c == 0.0 || !c.is_finite() {
        return Err(DpError::Invalid(format!("speed c = {c} must be nonzero")));
    }
    Ok(())
}

/// `c e^{-|x - x0|}` sampled with minimum-image distance.
pub fn peakon(c: f64, x0: f64, grid: &Grid) -> Result<Field> {
    nonzero(c)?;
    Ok(Field::from_fn(*grid, |x| c * (-grid.min_image(x - x0).abs()).exp()))
}

/// `(4 - d^2)^{-1}` of the peakon: `(c/3) e^{-|x-x0|} - (c/6) e^{-2|x-x0|}`.
pub fn smooth_peakon(c: f64, x0: f64, grid: &Grid) -> Result<Field> {
    nonzero(c)?;
    Ok(Field::from_fn(*grid, |x| {
        let d = grid.min_image(x - x0).abs();
        c / 3.0 * (-d).exp() - c / 6.0 * (-2.0 * d).exp()
    }))
}

/// Derivative of the smooth peakon, in closed form.
pub fn smooth_peakon_derivative(c: f64, x0: f64, grid: &Grid) -> Result<Field> {
    nonzero(c)?;
    Ok(Field::from_fn(*grid, |x| {
        let s = grid.min_image(x - x0);
        let d = s.abs();
        -s.signum() * c / 3.0 * ((-d).exp() - (-2.0 * d).exp())
    }))
}

/// Shock peakon `-(t+k)^{-1} sgn(x) e^{-|x|}`; the node at the origin takes 0.
pub fn shock_peakon(k: f64, t: f64, grid: &Grid) -> Result<Field> {
    if !(k > 0.0) {
        return Err(DpError::Invalid(format!("shock parameter k = {k} must be positive")));
    }
    if !(t >= 0.0) {
        return Err(DpError::Invalid(format!("time t = {t} must be nonnegative")));
    }
    let a = 1.0 / (t + k);
    Ok(Field::from_fn(*grid, |x| {
        let s = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        -a * s * (-x.abs()).exp()
    }))
}

/// Ordered velocities and positions of an antipeakon/peakon superposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub velocities: Vec<f64>,
    pub shifts: Vec<f64>,
    pub separation: f64,
}

impl TrainSpec {
    pub fn new(velocities: Vec<f64>, shifts: Vec<f64>, separation: f64) -> Result<TrainSpec> {
        let s = TrainSpec { velocities, shifts, separation };
        let problems = s.problems();
        if let Some(p) = problems.into_iter().next() {
            return Err(DpError::Invalid(p));
        }
        Ok(s)
    }

    /// Antipeakon/peakon pair `(-a, b)` at `-L/2, L/2`.
    pub fn symmetric_pair(c_neg: f64, c_pos: f64, separation: f64) -> Result<TrainSpec> {
        TrainSpec::new(vec![c_neg, c_pos], vec![-0.5 * separation, 0.5 * separation], separation)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.velocities.is_empty() {
            out.push("train needs at least one bump".to_string());
        }
        if self.velocities.len() != self.shifts.len() {
            out.push(format!("{} velocities but {} shifts", self.velocities.len(), self.shifts.len()));
            return out;
        }
        if self.velocities.iter().any(|&c| c == 0.0 || !c.is_finite()) {
            out.push("velocities must be nonzero and finite".to_string());
        }
        if self.velocities.windows(2).any(|w| w[1] <= w[0]) {
            out.push("velocities must be strictly increasing".to_string());
        }
        if !(self.separation >= 0.0) {
            out.push("separation L must be nonnegative".to_string());
        }
        for (i, w) in self.shifts.windows(2).enumerate() {
            if w[1] - w[0] < self.separation * (1.0 - 1e-12) {
                out.push(format!(
                    "shift gap z[{}] - z[{}] = {} is below the separation L = {}",
                    i + 1,
                    i,
                    w[1] - w[0],
                    self.separation
                ));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    /// Number of antipeakons (negative speeds).
    pub fn n_neg(&self) -> usize {
        self.velocities.iter().filter(|&&c| c < 0.0).count()
    }

    /// `‖c‖₁`.
    pub fn l1(&self) -> f64 {
        self.velocities.iter().map(|c| c.abs()).sum()
    }

    /// `σ(c)`: smallest gap between consecutive speeds, counting the gap
    /// across zero as `c_1 - c_{-1}`.
    pub fn min_gap(&self) -> f64 {
        self.velocities.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

/// Superposition of peakons `Σ φ_{c_j}(· - z_j)`.
pub fn train(spec: &TrainSpec, grid: &Grid) -> Result<Field> {
    if let Some(p) = spec.problems().into_iter().next() {
        return Err(DpError::Invalid(p));
    }
    let spread = spec.shifts.last().unwrap() - spec.shifts[0];
    if grid.length() <= spread + 16.0 {
        return Err(DpError::Invalid(format!(
            "box length {} too small for a train spread of {spread}: periodic images overlap",
            grid.length()
        )));
    }
    let mut acc = Field::zeros(*grid);
    for (&c, &z) in spec.velocities.iter().zip(&spec.shifts) {
        acc = &acc + &peakon(c, z, grid)?;
    }
    Ok(acc)
}

/// The unnormalized mollifier `exp(1/(x^2-1))` on `|x| < 1`.
pub fn mollifier(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 / (x * x - 1.0)).exp()
    } else {
        0.0
    }
}

/// Smooth compactly supported momentum bump of total (trapezoid) mass `mass`,
/// centred at `center`, half-width `width`.
pub fn momentum_bump(grid: &Grid, mass: f64, center: f64, width: f64) -> Result<Field> {
    if !(width > 0.0) {
        return Err(DpError::Invalid(format!("bump width {width} must be positive")));
    }
    let raw = Field::from_fn(*grid, |x| mollifier(grid.min_image(x - center) / width));
    let q = raw.quadrature();
    if q == 0.0 {
        return Err(DpError::Invalid(format!("bump of width {width} falls between grid nodes; refine the grid")));
    }
    Ok(raw.scale(mass / q))
}

/// Point mass at `x`, split linearly between the two neighbouring nodes so
/// that both mass and first moment are exact.
pub fn point_mass(grid: &Grid, mass: f64, x: f64) -> Field {
    let h = grid.spacing();
    let (xw, _) = grid.wrap(x);
    let s = (xw - grid.left()) / h;
    let j = s.floor();
    let frac = s - j;
    let n = grid.n();
    let j = j as usize % n;
    let mut v = vec![0.0; n];
    v[j] += mass * (1.0 - frac) / h;
    v[(j + 1) % n] += mass * frac / h;
    Field::from_vec(*grid, v)
}

/// Half-line kernel representation `u = ½∫ e^{-|x-x'|} y(x') dx'` by trapezoid
/// sweeps (no periodic images).
pub fn representation_from_momentum(y: &Field) -> Field {
    let g = *y.grid();
    let h = g.spacing();
    let n = g.n();
    let e = (-h).exp();
    let ys = y.values();
    let mut left = vec![0.0; n];
    let mut acc = 0.0;
    for j in 0..n {
        acc = acc * e + ys[j];
        left[j] = acc;
    }
    let mut out = vec![0.0; n];
    acc = 0.0;
    for j in (0..n).rev() {
        acc = acc * e + ys[j];
        out[j] = 0.5 * h * (left[j] + acc - ys[j]);
    }
    Field::from_vec(g, out)
}

/// Location certified by the sign check: `y <= tol` left of `x0`, `y >= -tol` right of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignStructure {
    pub x0: f64,
    pub tol: f64,
}

/// Witness that positive momentum sits left of negative momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignViolation {
    /// First node carrying `y > tol`.
    pub first_positive: f64,
    /// Last node carrying `y < -tol`.
    pub last_negative: f64,
    pub tol: f64,
}

impl fmt::Display for SignViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "no admissible x0: positive momentum at x = {} lies left of negative momentum at x = {} (tol {:e})",
            self.first_positive, self.last_negative, self.tol
        )
    }
}

/// Default sign tolerance: `1e-10 * max|y|`.
pub fn default_sign_tol(y: &Field) -> f64 {
    1e-10 * y.max_abs()
}

/// Certify Hypothesis 1: all negative momentum left of all positive momentum.
///
/// Returns the smallest admissible `x0`, the last node with `y < -tol`
/// (leftmost node when there is no negative momentum).
pub fn check_hypothesis1(y: &Field, tol: f64) -> std::result::Result<SignStructure, SignViolation> {
    let g = y.grid();
    let v = y.values();
    let last_neg = v.iter().rposition(|&a| a < -tol);
    let first_pos = v.iter().position(|&a| a > tol);
    match (last_neg, first_pos) {
        (Some(i), Some(j)) if j < i => Err(SignViolation { first_positive: g.node(j), last_negative: g.node(i), tol }),
        (Some(i), _) => Ok(SignStructure { x0: g.node(i), tol }),
        (None, _) => Ok(SignStructure { x0: g.node(0), tol }),
    }
}

/// Discrete mollification weights `ρ_n(m h - shift)` over integer offsets `m`,
/// normalized to unit sum.
fn mollifier_weights(h: f64, n: u32, shift: f64) -> Vec<(i64, f64)> {
    let width = 1.0 / n as f64;
    let reach = ((width + shift.abs()) / h).ceil() as i64 + 1;
    let mut w: Vec<(i64, f64)> =
        (-reach..=reach).map(|m| (m, mollifier((m as f64 * h - shift) / width))).filter(|&(_, v)| v > 0.0).collect();
    let s: f64 = w.iter().map(|p| p.1).sum();
    for p in w.iter_mut() {
        p.1 /= s;
    }
    w
}

fn convolve(y: &Field, weights: &[(i64, f64)]) -> Vec<f64> {
    let n = y.grid().n() as i64;
    let src = y.values();
    let mut out = vec![0.0; n as usize];
    for (j, &yj) in src.iter().enumerate() {
        if yj == 0.0 {
            continue;
        }
        for &(m, w) in weights {
            let i = (j as i64 + m).rem_euclid(n) as usize;
            out[i] += w * yj;
        }
    }
    out
}

/// Smallest grid spacing ratio accepted by the mollifier: `spacing <= 1/(2n)`.
pub fn max_spacing_for(n: u32) -> f64 {
    0.5 / n as f64
}

/// Mollified sign-structured momentum:
/// `y_n = -(ρ_n * y⁻)(· + 1/n) + (ρ_n * y⁺)(· - 1/n)`.
pub fn mollify_momentum(y_neg: &Field, y_pos: &Field, n: u32) -> Result<Field> {
    let g = *y_neg.grid();
    if *y_pos.grid() != g {
        return Err(DpError::Invalid("momentum parts live on different grids".into()));
    }
    if n < 1 {
        return Err(DpError::Invalid("mollification index must be at least 1".into()));
    }
    if g.spacing() > max_spacing_for(n) * (1.0 + 1e-12) {
        return Err(DpError::Invalid(format!(
            "spacing {} too coarse for mollification index {n}: need spacing <= 1/(2n) = {}",
            g.spacing(),
            max_spacing_for(n)
        )));
    }
    let scale = y_neg.max_abs().max(y_pos.max_abs());
    let tol = 1e-10 * scale;
    if let Some(j) = y_neg.values().iter().position(|&a| a > tol) {
        return Err(DpError::SignStructure(format!(
            "negative part is positive ({}) at x = {}",
            y_neg.values()[j],
            g.node(j)
        )));
    }
    if let Some(j) = y_pos.values().iter().position(|&a| a < -tol) {
        return Err(DpError::SignStructure(format!(
            "positive part is negative ({}) at x = {}",
            y_pos.values()[j],
            g.node(j)
        )));
    }
    let last_neg = y_neg.values().iter().rposition(|&a| a < -tol);
    let first_pos = y_pos.values().iter().position(|&a| a > tol);
    if let (Some(i), Some(j)) = (last_neg, first_pos) {
        if j <= i {
            return Err(DpError::SignStructure(format!(
                "positive momentum at x = {} is not right of negative momentum at x = {}",
                g.node(j),
                g.node(i)
            )));
        }
    }
    let shift = 1.0 / n as f64;
    let h = g.spacing();
    // y⁻ moves left by 1/n, y⁺ right by 1/n: the gap around x0 only widens
    let wl = mollifier_weights(h, n, -shift);
    let wr = mollifier_weights(h, n, shift);
    let a = convolve(y_neg, &wl);
    let b = convolve(y_pos, &wr);
    Ok(Field::from_vec(g, a.into_iter().zip(b).map(|(p, q)| p + q).collect()))
}

/// `u_n = p * y_n` with `y_n` the mollified momentum; the discrete momentum
/// of the result equals `y_n` to rounding.
pub fn mollified_from_momentum(y_neg: &Field, y_pos: &Field, n: u32) -> Result<Field> {
    let yn = mollify_momentum(y_neg, y_pos, n)?;
    Ok(helmholtz::resolvent(&yn, 1.0))
}

/// Mollified peakon (or antipeakon for `c < 0`) located at `x0`.
pub fn mollified_peakon(c: f64, x0: f64, grid: &Grid, n: u32) -> Result<Field> {
    nonzero(c)?;
    let spike = point_mass(grid, 2.0 * c, x0);
    let zero = Field::zeros(*grid);
    if c > 0.0 {
        mollified_from_momentum(&zero, &spike, n)
    } else {
        mollified_from_momentum(&spike, &zero, n)
    }
}

/// Mollified train: antipeakons contribute to `y⁻`, peakons to `y⁺`.
pub fn mollified_train(spec: &TrainSpec, grid: &Grid, n: u32) -> Result<Field> {
    if let Some(p) = spec.problems().into_iter().next() {
        return Err(DpError::Invalid(p));
    }
    let mut neg = Field::zeros(*grid);
    let mut pos = Field::zeros(*grid);
    for (&c, &z) in spec.velocities.iter().zip(&spec.shifts) {
        let s = point_mass(grid, 2.0 * c, z);
        if c < 0.0 {
            neg = &neg + &s;
        } else {
            pos = &pos + &s;
        }
    }
    mollified_from_momentum(&neg, &pos, n)
}

/// Shape of an initial-data perturbation, given as extra momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    /// Momentum bump whose sign follows `amplitude`.
    Bump,
    /// Negative momentum of mass `|amplitude|`, required to sit left of every positive part.
    LeftNegativeMomentum,
}

/// A smooth momentum perturbation of mass `amplitude` centred at `center`
/// with half-width `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub shape: PerturbationShape,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Perturbation {
    /// Signed momentum mass carried by the perturbation.
    pub fn mass(&self) -> f64 {
        match self.shape {
            PerturbationShape::Bump => self.amplitude,
            PerturbationShape::LeftNegativeMomentum => -self.amplitude.abs(),
        }
    }
}

/// Split peakons/antipeakons and perturbations into the two momentum parts.
pub fn momentum_parts(grid: &Grid, peaks: &[(f64, f64)], perturbations: &[Perturbation]) -> Result<(Field, Field)> {
    let mut neg = Field::zeros(*grid);
    let mut pos = Field::zeros(*grid);
    for &(c, z) in peaks {
        nonzero(c)?;
        let s = point_mass(grid, 2.0 * c, z);
        if c < 0.0 {
            neg = &neg + &s;
        } else {
            pos = &pos + &s;
        }
    }
    for p in perturbations {
        let m = p.mass();
        if m == 0.0 {
            continue;
        }
        let b = momentum_bump(grid, m, p.center, p.width)?;
        if m < 0.0 {
            neg = &neg + &b;
        } else {
            pos = &pos + &b;
        }
    }
    Ok((neg, pos))
}

/// Mollified superposition of peakons `(c, z)` and momentum perturbations;
/// fails unless the result satisfies the sign structure.
pub fn perturbed_profile(grid: &Grid, peaks: &[(f64, f64)], perturbations: &[Perturbation], n: u32) -> Result<Field> {
    let (neg, pos) = momentum_parts(grid, peaks, perturbations)?;
    mollified_from_momentum(&neg, &pos, n)
}
