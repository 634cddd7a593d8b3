//! Stability measurements: modulation points, orbital distances, momentum
//! mass splits, decay windows and monotonicity series.

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::functionals::{conserved, h_distance_sq_to_peakons, phi, psi_k, weighted_product_integral, WeightSpec};
use crate::grid::Field;
use crate::helmholtz::DerivedFields;
use crate::particles::PeakonSystem;
use crate::profiles::{check_hypothesis1, TrainSpec};
use crate::solver::{Trajectory, TrajectoryLabel};
use crate::spectral::{barycentric_eval, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Max,
    Min,
}

impl ExtremumKind {
    /// Maximum for peakons (`c > 0`), minimum for antipeakons.
    pub fn for_speed(c: f64) -> ExtremumKind {
        if c > 0.0 {
            ExtremumKind::Max
        } else {
            ExtremumKind::Min
        }
    }

    fn sign(self) -> f64 {
        match self {
            ExtremumKind::Max => 1.0,
            ExtremumKind::Min => -1.0,
        }
    }
}

/// Located extremum; `degenerate` flags a flat field (position is then the window centre).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub x: f64,
    pub value: f64,
    pub degenerate: bool,
}

/// Discrete extremum of `v` over `window` (whole box when `None`) refined by a
/// three-point parabola. Windows may straddle the periodic seam; the leftmost
/// node wins exact ties.
pub fn argmax_refined(v: &Field, window: Option<(f64, f64)>, kind: ExtremumKind) -> Extremum {
    let g = v.grid();
    let n = g.n();
    let h = g.spacing();
    let vals = v.values();
    let s = kind.sign();
    let (start, count, center) = match window {
        None => (0usize, n, 0.0),
        Some((lo, hi)) => {
            let lo_w = g.wrap(lo).0;
            let first = ((lo_w - g.left()) / h).ceil() as usize % n;
            let count = (((hi - lo) / h).floor() as usize + 1).clamp(1, n);
            (first, count, 0.5 * (lo + hi))
        }
    };
    let mut best = start;
    let mut best_val = s * vals[start];
    let mut lowest = best_val;
    for i in 1..count {
        let j = (start + i) % n;
        let a = s * vals[j];
        lowest = lowest.min(a);
        if a > best_val {
            best_val = a;
            best = j;
        }
    }
    if best_val - lowest <= f64::EPSILON * best_val.abs().max(f64::MIN_POSITIVE) {
        return Extremum { x: g.wrap(center).0, value: vals[start], degenerate: true };
    }
    let fm = s * vals[(best + n - 1) % n];
    let fp = s * vals[(best + 1) % n];
    let curv = fm - 2.0 * best_val + fp;
    let mut x = g.node(best);
    let mut value = vals[best];
    if curv < 0.0 {
        let d = 0.5 * (fm - fp) / curv;
        if d.abs() <= 1.0 {
            x += d * h;
            value = s * (best_val - 0.25 * (fm - fp) * d);
        }
    }
    Extremum { x: g.wrap(x).0, value, degenerate: false }
}

/// Newton refinement of a critical point of a trigonometric interpolant,
/// kept within `max_step` of the starting point.
pub fn polish_critical_point(spec: &Spectrum, x: f64, max_step: f64) -> f64 {
    let mut y = x;
    for _ in 0..8 {
        let d1 = spec.eval_derivative(y, 1);
        let d2 = spec.eval_derivative(y, 2);
        if d2 == 0.0 {
            break;
        }
        let step = -d1 / d2;
        if !step.is_finite() || (y + step - x).abs() > max_step {
            break;
        }
        y += step;
        if step.abs() < 1e-15 * (1.0 + y.abs()) {
            break;
        }
    }
    y
}

/// Extremum of `v` located by [`argmax_refined`] and polished to a zero of `v_x`.
pub fn critical_extremum(v: &Field, window: Option<(f64, f64)>, kind: ExtremumKind) -> Extremum {
    let e = argmax_refined(v, window, kind);
    if e.degenerate {
        return e;
    }
    let spec = Spectrum::of_field(v);
    let x = polish_critical_point(&spec, e.x, v.grid().spacing());
    Extremum { x, value: spec.eval(x), degenerate: false }
}

/// What the stability diagnostics need from a solution snapshot; implemented
/// by grid fields and by peakon-particle systems.
pub trait Observable {
    /// `(M, E, F)`.
    fn conserved_mef(&self) -> (f64, f64, f64);
    /// Extremum of `v` on `[lo, hi]`.
    fn v_extremum(&self, lo: f64, hi: f64, kind: ExtremumKind) -> Extremum;
    /// Box length for periodic data.
    fn period(&self) -> Option<f64>;
    /// Natural resolution of shift scans.
    fn shift_resolution(&self) -> f64;
    fn h_distance_sq(&self, peaks: &[(f64, f64)]) -> f64;
    fn linf_distance(&self, c: f64, r: f64) -> f64;
    /// `(∫y⁺, ∫y⁻)` over `[left, ∞)` (whole domain for `None`).
    fn y_mass(&self, left: Option<f64>) -> (f64, f64);
    fn max_u_minus_6v(&self, lo: f64, hi: f64) -> f64;
    /// `(min u, max u)`.
    fn u_range(&self) -> (f64, f64);
    fn u_l2(&self) -> f64;
    /// `(∫(4v²+5v_x²+v_xx²) w, ∫u³ w)`.
    fn weighted_energy_cubic(&self, w: &dyn Fn(f64) -> f64) -> (f64, f64);
    /// `∫y w`.
    fn weighted_momentum(&self, w: &dyn Fn(f64) -> f64) -> f64;
    /// Sign structure: `Ok(x0)` with all `y⁻` left of `x0` and all `y⁺` right of it.
    fn hypothesis1(&self) -> std::result::Result<Option<f64>, String>;

    fn y_l1(&self) -> f64 {
        let (p, n) = self.y_mass(None);
        p + n
    }

    fn max_abs_u(&self) -> f64 {
        let (a, b) = self.u_range();
        a.abs().max(b)
    }
}

impl Observable for DerivedFields {
    fn conserved_mef(&self) -> (f64, f64, f64) {
        let c = conserved(&self.u);
        (c.m, c.e, c.f)
    }

    fn v_extremum(&self, lo: f64, hi: f64, kind: ExtremumKind) -> Extremum {
        critical_extremum(&self.v, Some((lo, hi)), kind)
    }

    fn period(&self) -> Option<f64> {
        Some(self.u.grid().length())
    }

    fn shift_resolution(&self) -> f64 {
        self.u.grid().spacing()
    }

    fn h_distance_sq(&self, peaks: &[(f64, f64)]) -> f64 {
        h_distance_sq_to_peakons(&self.u, peaks)
    }

    fn linf_distance(&self, c: f64, r: f64) -> f64 {
        let g = self.u.grid();
        let nodes = g.nodes();
        let at_nodes = nodes
            .iter()
            .zip(self.u.values())
            .map(|(&x, &u)| (u - c * (-g.min_image(x - r).abs()).exp()).abs())
            .fold(0.0, f64::max);
        at_nodes.max((barycentric_eval(&self.u, r) - c).abs())
    }

    fn y_mass(&self, left: Option<f64>) -> (f64, f64) {
        let g = self.y.grid();
        let h = g.spacing();
        let (mut p, mut n) = (0.0, 0.0);
        for (x, &y) in g.nodes().into_iter().zip(self.y.values()) {
            if left.is_none_or(|l| x >= l) {
                if y > 0.0 {
                    p += h * y;
                } else {
                    n -= h * y;
                }
            }
        }
        (p, n)
    }

    fn max_u_minus_6v(&self, lo: f64, hi: f64) -> f64 {
        let g = self.u.grid();
        g.nodes()
            .into_iter()
            .zip(self.u.values().iter().zip(self.v.values()))
            .filter(|(x, _)| *x >= lo && *x <= hi)
            .map(|(_, (u, v))| u - 6.0 * v)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn u_range(&self) -> (f64, f64) {
        (self.u.min(), self.u.max())
    }

    fn u_l2(&self) -> f64 {
        self.u.l2_norm_sq().sqrt()
    }

    fn weighted_energy_cubic(&self, w: &dyn Fn(f64) -> f64) -> (f64, f64) {
        crate::functionals::weighted_energy_cubic(&self.u, w)
    }

    fn weighted_momentum(&self, w: &dyn Fn(f64) -> f64) -> f64 {
        weighted_product_integral(&[&self.y], w)
    }

    fn hypothesis1(&self) -> std::result::Result<Option<f64>, String> {
        let tol = 1e-6 * self.y.max_abs();
        check_hypothesis1(&self.y, tol).map(|s| Some(s.x0)).map_err(|e| e.to_string())
    }
}

impl Observable for PeakonSystem {
    fn conserved_mef(&self) -> (f64, f64, f64) {
        self.conserved()
    }

    fn v_extremum(&self, lo: f64, hi: f64, kind: ExtremumKind) -> Extremum {
        PeakonSystem::v_extremum(self, lo, hi, kind)
    }

    fn period(&self) -> Option<f64> {
        None
    }

    fn shift_resolution(&self) -> f64 {
        0.01
    }

    fn h_distance_sq(&self, peaks: &[(f64, f64)]) -> f64 {
        self.distance_sq_to_peakons(peaks)
    }

    fn linf_distance(&self, c: f64, r: f64) -> f64 {
        self.linf_distance_to_peakon(c, r)
    }

    fn y_mass(&self, left: Option<f64>) -> (f64, f64) {
        self.y_mass_split(left)
    }

    fn max_u_minus_6v(&self, lo: f64, hi: f64) -> f64 {
        let k = ((hi - lo) / 0.01).ceil().max(1.0) as usize;
        let mut xs: Vec<f64> = (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
        xs.extend(self.q.iter().filter(|&&q| q >= lo && q <= hi));
        xs.sort_by(f64::total_cmp);
        PeakonSystem::max_u_minus_6v(self, &xs)
    }

    fn u_range(&self) -> (f64, f64) {
        let mut xs = self.cloud(0.25).x;
        xs.extend_from_slice(&self.q);
        xs.sort_by(f64::total_cmp);
        let u = self.fields_at(&xs).u;
        (u.iter().cloned().fold(f64::INFINITY, f64::min), u.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    }

    fn u_l2(&self) -> f64 {
        let c = self.cloud(0.25);
        let u = self.fields_at(&c.x).u;
        c.integrate(&u.iter().map(|u| u * u).collect::<Vec<_>>()).sqrt()
    }

    fn weighted_energy_cubic(&self, w: &dyn Fn(f64) -> f64) -> (f64, f64) {
        PeakonSystem::weighted_energy_cubic(self, w)
    }

    fn weighted_momentum(&self, w: &dyn Fn(f64) -> f64) -> f64 {
        2.0 * self.q.iter().zip(&self.m).map(|(&q, &m)| m * w(q)).sum::<f64>()
    }

    fn hypothesis1(&self) -> std::result::Result<Option<f64>, String> {
        self.sign_gap().map(|(neg, pos)| neg.or(pos))
    }
}

/// Nearest representative of `x` (known modulo `period`) to `reference`.
fn unwrap_near(x: f64, reference: f64, period: Option<f64>) -> f64 {
    match period {
        Some(l) => x + l * ((reference - x) / l).round(),
        None => x,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalDistance {
    /// `min_r ‖u - φ_c(· - r)‖_H`.
    pub distance: f64,
    /// Minimizing shift.
    pub shift: f64,
    /// Extremum of `v` in the same window.
    pub xi: f64,
    /// `‖u - φ_c(· - ξ)‖_H`; never below `distance`.
    pub distance_at_xi: f64,
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// H-distance to the peakon family minimized over shifts in `window`: a scan
/// at the snapshot's resolution, then golden-section refinement.
pub fn orbital_distance(s: &dyn Observable, c: f64, window: (f64, f64)) -> OrbitalDistance {
    orbital_distance_scan(s, c, window, s.shift_resolution())
}

pub fn orbital_distance_scan(s: &dyn Observable, c: f64, window: (f64, f64), step: f64) -> OrbitalDistance {
    let (lo, hi) = window;
    let k = ((hi - lo) / step).ceil().max(1.0) as usize;
    let d2 = |r: f64| s.h_distance_sq(&[(c, r)]);
    let (mut best, mut best_val) = (lo, f64::INFINITY);
    for i in 0..=k {
        let r = lo + (hi - lo) * i as f64 / k as f64;
        let v = d2(r);
        if v < best_val {
            best_val = v;
            best = r;
        }
    }
    let h = (hi - lo) / k as f64;
    let r = golden_min(&d2, (best - h).max(lo), (best + h).min(hi), 1e-10);
    let (mut shift, mut dist2) = if d2(r) < best_val { (r, d2(r)) } else { (best, best_val) };
    let xi = s.v_extremum(lo, hi, ExtremumKind::for_speed(c)).x;
    let xi = unwrap_near(xi, 0.5 * (lo + hi), s.period());
    let at_xi = d2(xi);
    if at_xi < dist2 {
        shift = xi;
        dist2 = at_xi;
    }
    OrbitalDistance { distance: dist2.sqrt(), shift, xi, distance_at_xi: at_xi.sqrt() }
}

/// `σ(c) = min |c_i - c_{i-1}|` over consecutive speeds with `c_0 = 0`
/// inserted between antipeakons and peakons.
pub fn speed_separation(velocities: &[f64]) -> f64 {
    let mut all: Vec<f64> = velocities.iter().copied().filter(|c| *c < 0.0).collect();
    all.push(0.0);
    all.extend(velocities.iter().copied().filter(|c| *c > 0.0));
    all.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min)
}

/// Index labels `-N_-, …, -1, 1, …, N_+` of a train with `n_neg` antipeakons.
pub fn train_labels(len: usize, n_neg: usize) -> Vec<i64> {
    (0..len).map(|k| if k < n_neg { k as i64 - n_neg as i64 } else { (k - n_neg) as i64 + 1 }).collect()
}

/// Windowed argmax/argmin tracking of every bump of a train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationTrack {
    pub velocities: Vec<f64>,
    pub half_width: f64,
    pub tracks: Vec<Trajectory>,
    current: Vec<f64>,
}

impl ModulationTrack {
    /// Starts from `guesses` (ascending) with windows `ξ_i ± half_width`.
    pub fn new(velocities: &[f64], guesses: &[f64], half_width: f64) -> Result<ModulationTrack> {
        if velocities.len() != guesses.len() || velocities.is_empty() {
            return Err(DpError::Invalid("one position guess per bump required".into()));
        }
        if !(half_width > 0.0) {
            return Err(DpError::Invalid(format!("window half-width {half_width} must be positive")));
        }
        let n_neg = velocities.iter().filter(|c| **c < 0.0).count();
        let tracks = train_labels(velocities.len(), n_neg)
            .into_iter()
            .map(|i| Trajectory::new(TrajectoryLabel::Modulation { index: i }))
            .collect();
        Ok(ModulationTrack { velocities: velocities.to_vec(), half_width, tracks, current: guesses.to_vec() })
    }

    /// Train windows of half-width `L/4` centred on the initial shifts.
    pub fn for_train(spec: &TrainSpec) -> Result<ModulationTrack> {
        let hw = if spec.len() > 1 { 0.25 * spec.separation } else { 10.0 };
        ModulationTrack::new(&spec.velocities, &spec.shifts, hw)
    }

    pub fn positions(&self) -> &[f64] {
        &self.current
    }

    /// Locate every bump in its re-centred window; fails on ordering loss or
    /// overlapping windows.
    pub fn observe(&mut self, t: f64, s: &dyn Observable) -> Result<()> {
        let mut next = Vec::with_capacity(self.current.len());
        for (i, &x) in self.current.iter().enumerate() {
            let kind = ExtremumKind::for_speed(self.velocities[i]);
            let e = s.v_extremum(x - self.half_width, x + self.half_width, kind);
            if e.degenerate {
                return Err(DpError::Tracking { t, reason: format!("flat v around bump {i}") });
            }
            next.push(unwrap_near(e.x, x, s.period()));
        }
        for (i, w) in next.windows(2).enumerate() {
            if w[1] - w[0] <= 2.0 * self.half_width && self.current.len() > 1 {
                return Err(DpError::Tracking {
                    t,
                    reason: format!("windows of bumps {i} and {} collide (gap {})", i + 1, w[1] - w[0]),
                });
            }
        }
        for (tr, &x) in self.tracks.iter_mut().zip(&next) {
            tr.push(t, x, 0)?;
        }
        self.current = next;
        Ok(())
    }

    /// Mean speeds `dξ_i/dt` over `t >= t_from`.
    pub fn speeds(&self, t_from: f64) -> Vec<Option<f64>> {
        self.tracks.iter().map(|tr| tr.mean_speed(0.0, t_from)).collect()
    }

    /// `|ξ̇_i - c_i| <= σ(c)/8` for every bump.
    pub fn speed_band_ok(&self, t_from: f64) -> bool {
        let sigma = speed_separation(&self.velocities);
        self.speeds(t_from).iter().zip(&self.velocities).all(|(s, c)| s.is_some_and(|s| (s - c).abs() <= sigma / 8.0))
    }

    /// Least-squares slope of `ξ_{i+1} - ξ_i` over `t >= t_from`.
    pub fn gap_slope(&self, i: usize, t_from: f64) -> Option<f64> {
        let (a, b) = (self.tracks.get(i)?, self.tracks.get(i + 1)?);
        let mut gap = Trajectory::new(TrajectoryLabel::SignChange);
        for k in 0..a.len() {
            gap.push(a.times[k], b.positions[k] - a.positions[k], 0).ok()?;
        }
        gap.mean_speed(0.0, t_from)
    }
}

/// Negative momentum right of the moving window `ξ(t) - ct/16` against its
/// exponential bound, plus `max (u - 6v)` right of `ξ(t) - 8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayWindowReport {
    pub t: f64,
    pub window_left: f64,
    pub mass: f64,
    /// `e^{-ct/8} ‖y₀‖_{L¹}`.
    pub bound: f64,
    pub u_minus_6v: f64,
    /// `e^{9 - ct/32} ‖y₀‖_{L¹}`.
    pub u_minus_6v_bound: f64,
}

pub fn decay_window_report(s: &dyn Observable, t: f64, xi: f64, c: f64, y0_l1: f64, right: f64) -> DecayWindowReport {
    let window_left = xi - c * t / 16.0;
    let (_, mass) = s.y_mass(Some(window_left));
    DecayWindowReport {
        t,
        window_left,
        mass,
        bound: (-c * t / 8.0).exp() * y0_l1,
        u_minus_6v: s.max_u_minus_6v(xi - 8.0, right),
        u_minus_6v_bound: (9.0 - c * t / 32.0).exp() * y0_l1,
    }
}

/// Reports over `(t, ξ(t), snapshot)` samples; `right` closes the `u - 6v`
/// window (the box edge for grid data).
pub fn decay_window_series(samples: &[(f64, f64, &dyn Observable)], c: f64, right: f64) -> Vec<DecayWindowReport> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let y0 = first.2.y_l1();
    samples.iter().map(|&(t, xi, s)| decay_window_report(s, t, xi, c, y0, right)).collect()
}

/// Centres `y_j(t)` of the monotonicity weights: `y_1 = x_1(0) + c_1 t/2 - L/4`
/// and `y_j = (x_{j-1}(t) + x_j(t))/2` over the tracked peakons `x_j`.
pub fn weight_centers(x1_initial: f64, c1: f64, separation: f64, t: f64, peakons_now: &[f64]) -> Vec<f64> {
    let mut out = vec![x1_initial + 0.5 * c1 * t - 0.25 * separation];
    for w in peakons_now.windows(2) {
        out.push(0.5 * (w[0] + w[1]));
    }
    out
}

/// `𝒥_j = ∫[(4v²+5v_x²+v_xx²) - λu³] Ψ_K(· - y_j)` for every centre.
pub fn j_values(s: &dyn Observable, k: f64, lambda: f64, centers: &[f64]) -> Vec<f64> {
    centers
        .iter()
        .map(|&y| {
            let (e, f) = s.weighted_energy_cubic(&|x| psi_k(x - y, k));
            e - lambda * f
        })
        .collect()
}

/// `∫(4v²+5v_x²+v_xx²) Φ(· - y) + (c_1/2⁹) ∫y Φ(· - y)`.
pub fn energy_momentum_value(s: &dyn Observable, c1: f64, y: f64) -> f64 {
    let (e, _) = s.weighted_energy_cubic(&|x| phi(x - y));
    e + c1 / 512.0 * s.weighted_momentum(&|x| phi(x - y))
}

/// A scalar series with its largest forward increment `max_t (J(t) - J(0))`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotonicitySeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl MonotonicitySeries {
    pub fn new(label: impl Into<String>) -> MonotonicitySeries {
        MonotonicitySeries { label: label.into(), ..Default::default() }
    }

    pub fn push(&mut self, t: f64, value: f64) {
        self.times.push(t);
        self.values.push(value);
    }

    pub fn max_forward_increment(&self) -> f64 {
        match self.values.first() {
            Some(&v0) => self.values.iter().map(|v| v - v0).fold(0.0, f64::max),
            None => 0.0,
        }
    }
}

/// Per-`j` series of `𝒥` along stored `(t, snapshot, tracked peakon positions)`.
pub fn monotonicity_series(
    samples: &[(f64, &dyn Observable, Vec<f64>)],
    weights: &WeightSpec,
    c1: f64,
    separation: f64,
) -> Result<Vec<MonotonicitySeries>> {
    let Some(first) = samples.first() else {
        return Err(DpError::Invalid("monotonicity needs a tracked history".into()));
    };
    let x1 = *first.2.first().ok_or_else(|| DpError::Invalid("no tracked peakon".into()))?;
    let mut out: Vec<MonotonicitySeries> = Vec::new();
    for (t, s, peakons) in samples {
        let centers = weight_centers(x1, c1, separation, *t, peakons);
        let vals = j_values(*s, weights.k, weights.lambda, &centers);
        if out.is_empty() {
            out = (1..=vals.len()).map(|j| MonotonicitySeries::new(format!("J_{j}"))).collect();
        }
        for (series, v) in out.iter_mut().zip(vals) {
            series.push(*t, v);
        }
    }
    Ok(out)
}

/// `ρ_c'(x) = c sgn(x)(e^{-2|x|} - e^{-|x|})/3`.
pub fn smooth_peakon_slope(c: f64, x: f64) -> f64 {
    let a = x.abs();
    c * x.signum() * ((-2.0 * a).exp() - (-a).exp()) / 3.0
}

/// `∫ v ρ_c'(· - ξ)`: zero at an orthogonality-based modulation point.
pub fn orthogonality_residual(v: &Field, xi: f64, c: f64) -> f64 {
    let g = *v.grid();
    weighted_product_integral(&[v], |x| smooth_peakon_slope(c, g.min_image(x - xi)))
}

/// One line of the per-run JSONL stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub M: f64,
    pub E: f64,
    pub F: f64,
    pub Hnorm: f64,
    pub maxu: f64,
    pub minu: f64,
    pub xi: Vec<f64>,
    pub x0: Option<f64>,
    pub ymass_pos: f64,
    pub ymass_neg: f64,
    pub J: Vec<f64>,
}

impl DiagnosticsRow {
    pub fn collect(t: f64, s: &dyn Observable, xi: Vec<f64>, x0: Option<f64>, j: Vec<f64>) -> DiagnosticsRow {
        let (m, e, f) = s.conserved_mef();
        let (minu, maxu) = s.u_range();
        let (p, n) = s.y_mass(None);
        DiagnosticsRow {
            t,
            M: m,
            E: e,
            F: f,
            Hnorm: e.max(0.0).sqrt(),
            maxu,
            minu,
            xi,
            x0,
            ymass_pos: p,
            ymass_neg: n,
            J: j,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::profiles::smooth_peakon;

    #[test]
    fn argmax_of_known_profiles() {
        let g = Grid::new(40.0, 1024).unwrap();
        let h = g.spacing();
        let v = smooth_peakon(1.0, 1.2345, &g).unwrap();
        let e = argmax_refined(&v, None, ExtremumKind::Max);
        assert!((e.x - 1.2345).abs() <= h * h, "{}", e.x);
        let cosine = Field::from_fn(g, |x| (2.0 * std::f64::consts::PI * x / 40.0).cos());
        let e = argmax_refined(&cosine, None, ExtremumKind::Max);
        assert!(e.x.abs() <= h * h);
        let e = argmax_refined(&cosine, Some((10.0, 30.0)), ExtremumKind::Min);
        assert!((e.x.abs() - 20.0).abs() <= h * h, "{}", e.x);
        let flat = Field::constant(g, 2.0);
        let e = argmax_refined(&flat, Some((1.0, 3.0)), ExtremumKind::Max);
        assert!(e.degenerate && e.x == 2.0);
        let anti = smooth_peakon(-1.0, -3.0, &g).unwrap();
        let e = critical_extremum(&anti, Some((-8.0, 2.0)), ExtremumKind::Min);
        assert!((e.x + 3.0).abs() < h * h && (e.value + 1.0 / 6.0).abs() < 1e-3);
    }

    #[test]
    fn polish_reaches_critical_point() {
        let g = Grid::new(40.0, 256).unwrap();
        let v = Field::from_fn(g, |x| (-(x - 0.37) * (x - 0.37) / 4.0).exp());
        let e = critical_extremum(&v, None, ExtremumKind::Max);
        assert!((e.x - 0.37).abs() < 1e-10);
        assert!((e.value - 1.0).abs() < 1e-10);
    }

    use crate::helmholtz::derived_fields;
    use crate::profiles::{mollified_from_momentum, mollified_peakon, mollified_train, momentum_bump};

    #[test]
    fn orbital_distance_examples() {
        let g = Grid::new(60.0, 4096).unwrap();
        let d = derived_fields(&mollified_peakon(1.0, 0.0, &g, 16).unwrap());
        let o = orbital_distance(&d, 1.0, (-5.0, 5.0));
        // the mollified positive momentum sits 1/n to the right
        assert!(o.distance < 2e-2 && (o.shift - 1.0 / 16.0).abs() < 1e-2, "{o:?}");
        assert!(o.distance <= o.distance_at_xi);
        let d3 = derived_fields(&mollified_peakon(1.0, 3.0, &g, 16).unwrap());
        let o3 = orbital_distance(&d3, 1.0, (-2.0, 8.0));
        assert!((o3.shift - o.shift - 3.0).abs() < 1e-3, "{o3:?}");
        // exact peakon plus a smooth bump: distance bracket and brute-force oracle
        let mut sys = PeakonSystem::new(vec![0.0], vec![1.0]).unwrap();
        let base = sys.clone();
        sys = PeakonSystem::from_profile(
            &[(1.0, 0.0)],
            &[crate::profiles::Perturbation {
                shape: crate::profiles::PerturbationShape::Bump,
                amplitude: 0.0,
                center: 4.0,
                width: 1.0,
            }],
            20,
        )
        .unwrap();
        assert_eq!(sys, base);
        let unit = PeakonSystem::from_profile(
            &[(1.0, 0.0)],
            &[crate::profiles::Perturbation {
                shape: crate::profiles::PerturbationShape::Bump,
                amplitude: 1.0,
                center: 4.0,
                width: 1.0,
            }],
            20,
        )
        .unwrap();
        let amp = 0.01 / unit.distance_sq_to_peakons(&[(1.0, 0.0)]).sqrt();
        let p = PeakonSystem::from_profile(
            &[(1.0, 0.0)],
            &[crate::profiles::Perturbation {
                shape: crate::profiles::PerturbationShape::Bump,
                amplitude: amp,
                center: 4.0,
                width: 1.0,
            }],
            20,
        )
        .unwrap();
        let o = orbital_distance(&p, 1.0, (-3.0, 3.0));
        assert!(o.distance >= 0.005 && o.distance <= 0.02, "{o:?}");
        let fine = orbital_distance_scan(&p, 1.0, (-3.0, 3.0), 0.001);
        let brute = (0..=6000)
            .map(|i| p.distance_sq_to_peakons(&[(1.0, -3.0 + i as f64 * 0.001)]).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(o.distance <= brute + 1e-12 && (o.distance - fine.distance).abs() < 1e-9);
    }

    #[test]
    fn y_mass_examples() {
        let g = Grid::new(60.0, 8192).unwrap();
        let spec = TrainSpec::symmetric_pair(-1.0, 2.0, 30.0).unwrap();
        let d = derived_fields(&mollified_train(&spec, &g, 16).unwrap());
        let (p, n) = d.y_mass(None);
        assert!((p - 4.0).abs() < 1e-2 && (n - 2.0).abs() < 1e-2, "{p} {n}");
        let (p, n) = d.y_mass(Some(29.0));
        assert!(p < 1e-6 && n < 1e-6);
        let pos = momentum_bump(&g, 1.0, 0.0, 1.0).unwrap();
        let d = derived_fields(&mollified_from_momentum(&Field::zeros(g), &pos, 16).unwrap());
        assert!(d.y_mass(None).1 < 1e-8 * d.y_mass(None).0);
        let sys = PeakonSystem::new(vec![-15.0, 15.0], vec![-1.0, 2.0]).unwrap();
        assert_eq!(sys.y_mass(None), (4.0, 2.0));
        assert_eq!(sys.y_mass(Some(16.0)), (0.0, 0.0));
    }

    #[test]
    fn decay_window_of_pure_peakon() {
        let mut sys = PeakonSystem::new(vec![0.0], vec![1.0]).unwrap();
        let mut samples = vec![(0.0, 0.0, sys.clone())];
        for k in 1..=10 {
            for _ in 0..10 {
                sys.step(0.1).unwrap();
            }
            samples.push((k as f64, sys.q[0], sys.clone()));
        }
        let refs: Vec<(f64, f64, &dyn Observable)> =
            samples.iter().map(|(t, x, s)| (*t, *x, s as &dyn Observable)).collect();
        let reps = decay_window_series(&refs, 1.0, 100.0);
        for r in &reps {
            assert_eq!(r.mass, 0.0);
            // u - 6v <= 0 for a peakon, with equality at the crest
            assert!(r.u_minus_6v.abs() < 1e-12, "{r:?}");
        }
        assert!((reps[10].bound - (-10.0f64 / 8.0).exp() * 2.0).abs() < 1e-12);
    }

    #[test]
    fn tracking_and_monotonicity() {
        let spec = TrainSpec::symmetric_pair(-1.0, 1.0, 30.0).unwrap();
        let mut sys = PeakonSystem::new(vec![-15.0, 15.0], vec![-1.0, 1.0]).unwrap();
        let mut tr = ModulationTrack::for_train(&spec).unwrap();
        let w = WeightSpec::new(WeightSpec::default_k(30.0), vec![0.0], 0.0).unwrap();
        let mut hist = Vec::new();
        for k in 0..=40 {
            if k > 0 {
                for _ in 0..5 {
                    sys.step(0.02).unwrap();
                }
            }
            let t = 0.1 * k as f64;
            tr.observe(t, &sys).unwrap();
            hist.push((t, sys.clone(), vec![tr.positions()[1]]));
        }
        let sp = tr.speeds(0.0);
        assert!((sp[0].unwrap() + 1.0).abs() < 1e-6 && (sp[1].unwrap() - 1.0).abs() < 1e-6, "{sp:?}");
        assert!(tr.speed_band_ok(0.0));
        assert!((tr.gap_slope(0, 0.0).unwrap() - 2.0).abs() < 1e-6);
        assert_eq!(speed_separation(&[-1.0, 1.0]), 1.0);
        assert_eq!(train_labels(3, 1), vec![-1, 1, 2]);
        let refs: Vec<(f64, &dyn Observable, Vec<f64>)> =
            hist.iter().map(|(t, s, p)| (*t, s as &dyn Observable, p.clone())).collect();
        let series = monotonicity_series(&refs, &w, 1.0, 30.0).unwrap();
        assert_eq!(series.len(), 1);
        let e = sys.energy();
        // the weight ahead of the peakon fills up by at most E_peak (1 - Ψ(L/4K))
        let inc = series[0].max_forward_increment();
        assert!(inc >= 0.0 && inc <= e * (1.0 - crate::functionals::psi(7.5 / w.k)), "{inc}");
        // single peakon far from its weight: J is E and constant
        let one = PeakonSystem::new(vec![0.0], vec![1.0]).unwrap();
        let j = j_values(&one, 1.0, 0.0, &[-200.0])[0];
        assert!((j - one.energy()).abs() < 1e-8);
    }

    #[test]
    fn window_collision_aborts() {
        let sys = PeakonSystem::new(vec![-2.0, 2.0], vec![1.0, 1.5]).unwrap();
        let mut tr = ModulationTrack::new(&[1.0, 1.5], &[-2.0, 2.0], 3.0).unwrap();
        assert!(matches!(tr.observe(0.0, &sys), Err(DpError::Tracking { .. })));
    }

    #[test]
    fn orthogonality_residual_examples() {
        let g = Grid::new(40.0, 2048).unwrap();
        let v = crate::profiles::smooth_peakon(1.0, 0.0, &g).unwrap();
        assert!(orthogonality_residual(&v, 0.0, 1.0).abs() < 1e-6);
        assert!(orthogonality_residual(&v, 0.5, 1.0) > 0.0);
        assert!(orthogonality_residual(&v, -0.5, 1.0) < 0.0);
        assert_eq!(orthogonality_residual(&Field::zeros(g), 0.3, 1.0), 0.0);
    }

    #[test]
    fn diagnostics_row_json() {
        let sys = PeakonSystem::new(vec![0.0], vec![1.0]).unwrap();
        let row = DiagnosticsRow::collect(0.0, &sys, vec![0.0], Some(0.0), vec![]);
        assert!((row.E - 1.0 / 3.0).abs() < 1e-12 && (row.F - 2.0 / 3.0).abs() < 1e-12 && row.M == 2.0);
        let js = serde_json::to_string(&row).unwrap();
        assert!(js.contains("\"Hnorm\"") && js.contains("\"ymass_neg\""));
        let back: DiagnosticsRow = serde_json::from_str(&js).unwrap();
        assert_eq!(back, row);
    }
}
