//! Peakon-particle representation on the whole line:
//! `u = Σ m_i e^{-|x - q_i|}`, `y = 2 Σ m_i δ_{q_i}`.
//!
//! Sign-structured momentum is a finite sum of peakons and antipeakons after
//! discretizing its smooth parts, and the equation restricted to such sums
//! is the ODE
//!
//! ```text
//! q̇_i = u(q_i),   ṁ_i = 2 m_i Σ_j m_j sgn(q_i - q_j) e^{-|q_i - q_j|}.
//! ```
//!
//! Nothing here is periodic and no derivative of a kink is ever sampled, so
//! momentum concentration costs nothing. All sums are `O(N)` recursions over
//! sorted positions. `v`, `E`, `M` and `F` are exact; weighted integrals use
//! Gauss–Legendre panels split at the particles.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{Extremum, ExtremumKind};
use crate::error::{DpError, Result};
use crate::grid::{Field, Grid};
use crate::profiles::Perturbation;

/// Sums `Σ_{q_j < x} m_j e^{-a(x - q_j)}`, `Σ_{q_j = x} m_j`, `Σ_{q_j > x} m_j e^{-a(q_j - x)}`
/// at ascending points `xs`, for ascending `q`.
fn side_sums(q: &[f64], m: &[f64], xs: &[f64], a: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let (mut left, mut at, mut right) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut acc = 0.0;
    let mut pos = f64::NEG_INFINITY;
    let mut j = 0;
    for (i, &x) in xs.iter().enumerate() {
        while j < q.len() && q[j] < x {
            acc = if pos.is_finite() { acc * (-a * (q[j] - pos)).exp() } else { 0.0 } + m[j];
            pos = q[j];
            j += 1;
        }
        left[i] = if pos.is_finite() { acc * (-a * (x - pos)).exp() } else { 0.0 };
        let mut k = j;
        while k < q.len() && q[k] == x {
            at[i] += m[k];
            k += 1;
        }
    }
    acc = 0.0;
    pos = f64::INFINITY;
    let mut j = q.len();
    for (i, &x) in xs.iter().enumerate().rev() {
        while j > 0 && q[j - 1] > x {
            acc = if pos.is_finite() { acc * (-a * (pos - q[j - 1])).exp() } else { 0.0 } + m[j - 1];
            pos = q[j - 1];
            j -= 1;
        }
        right[i] = if pos.is_finite() { acc * (-a * (pos - x)).exp() } else { 0.0 };
    }
    (left, at, right)
}

/// `u`, `u_x`, `v`, `v_x` at a set of points (`u_x` is the one-sided average at particles).
#[derive(Debug, Clone, Default)]
pub struct PointFields {
    pub u: Vec<f64>,
    pub u_x: Vec<f64>,
    pub v: Vec<f64>,
    pub v_x: Vec<f64>,
}

impl PointFields {
    pub fn v_xx(&self) -> Vec<f64> {
        self.v.iter().zip(&self.u).map(|(v, u)| 4.0 * v - u).collect()
    }
}

/// Quadrature nodes and weights covering the support of a particle system.
#[derive(Debug, Clone)]
pub struct QuadCloud {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

const GL_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

impl QuadCloud {
    /// Panels between consecutive breakpoints, each split to length `<= hmax`.
    pub fn from_breakpoints(breaks: &[f64], hmax: f64) -> QuadCloud {
        let mut x = Vec::new();
        let mut w = Vec::new();
        for p in breaks.windows(2) {
            let len = p[1] - p[0];
            if len <= 0.0 {
                continue;
            }
            let k = (len / hmax).ceil().max(1.0) as usize;
            let h = len / k as f64;
            for s in 0..k {
                let a = p[0] + s as f64 * h;
                for (t, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
                    x.push(a + 0.5 * h * (t + 1.0));
                    w.push(0.5 * h * wt);
                }
            }
        }
        QuadCloud { x, w }
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.w.iter().zip(f).map(|(w, f)| w * f).sum()
    }
}

/// A sum of peakons, ordered by position, plus passive tracers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakonSystem {
    pub q: Vec<f64>,
    pub m: Vec<f64>,
    /// Zero-mass points transported by `u`: samples of the flow map.
    pub tracers: Vec<f64>,
}

/// How far beyond the outermost particle the tails are integrated.
pub const TAIL: f64 = 40.0;

impl PeakonSystem {
    pub fn new(q: Vec<f64>, m: Vec<f64>) -> Result<PeakonSystem> {
        if q.len() != m.len() || q.is_empty() {
            return Err(DpError::Invalid(format!("{} positions for {} masses", q.len(), m.len())));
        }
        if q.iter().chain(&m).any(|a| !a.is_finite()) {
            return Err(DpError::Invalid("non-finite particle data".into()));
        }
        if q.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DpError::Invalid("particle positions must be strictly increasing".into()));
        }
        Ok(PeakonSystem { q, m, tracers: Vec::new() })
    }

    /// Peakons `(c, z)` plus discretized momentum perturbations: a smooth bump
    /// of mass `M` becomes `per_bump` particles carrying `M/2` in total.
    pub fn from_profile(peaks: &[(f64, f64)], perturbations: &[Perturbation], per_bump: usize) -> Result<PeakonSystem> {
        let mut pairs: Vec<(f64, f64)> = peaks.iter().map(|&(c, z)| (z, c)).collect();
        for p in perturbations {
            let mass = p.mass();
            if mass == 0.0 {
                continue;
            }
            if !(p.width > 0.0) || per_bump == 0 {
                return Err(DpError::Invalid("perturbation needs positive width and particles".into()));
            }
            // midpoint rule on the mollifier profile; weights normalized to the exact mass
            let h = 2.0 * p.width / per_bump as f64;
            let xs: Vec<f64> = (0..per_bump).map(|k| p.center - p.width + (k as f64 + 0.5) * h).collect();
            let ws: Vec<f64> = xs.iter().map(|&x| crate::profiles::mollifier((x - p.center) / p.width)).collect();
            let total: f64 = ws.iter().sum();
            for (x, w) in xs.into_iter().zip(ws) {
                pairs.push((x, 0.5 * mass * w / total));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // merge coincident positions
        let mut q: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut m: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, mass) in pairs {
            if q.last() == Some(&x) {
                *m.last_mut().unwrap() += mass;
            } else {
                q.push(x);
                m.push(mass);
            }
        }
        PeakonSystem::new(q, m)
    }

    pub fn with_tracers(mut self, mut tracers: Vec<f64>) -> PeakonSystem {
        tracers.sort_by(f64::total_cmp);
        self.tracers = tracers;
        self
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `u(q_i)` and `Σ_j m_j sgn(q_i - q_j) e^{-|q_i - q_j|}` at the particles.
    fn self_sums(q: &[f64], m: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = q.len();
        let mut left = vec![0.0; n];
        for i in 1..n {
            left[i] = (left[i - 1] + m[i - 1]) * (-(q[i] - q[i - 1])).exp();
        }
        let mut right = vec![0.0; n];
        for i in (0..n - 1).rev() {
            right[i] = (right[i + 1] + m[i + 1]) * (-(q[i + 1] - q[i])).exp();
        }
        let u = (0..n).map(|i| m[i] + left[i] + right[i]).collect();
        let s = (0..n).map(|i| left[i] - right[i]).collect();
        (u, s)
    }

    fn velocity_at(q: &[f64], m: &[f64], xs: &[f64]) -> Vec<f64> {
        let (l, a, r) = side_sums(q, m, xs, 1.0);
        (0..xs.len()).map(|i| l[i] + a[i] + r[i]).collect()
    }

    /// Time derivatives `(q̇, ṁ, ṗ)` for particles and tracers.
    fn rhs(q: &[f64], m: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (u, s) = PeakonSystem::self_sums(q, m);
        let dm = m.iter().zip(&s).map(|(m, s)| 2.0 * m * s).collect();
        let dp = if p.is_empty() { Vec::new() } else { PeakonSystem::velocity_at(q, m, p) };
        (u, dm, dp)
    }

    /// One classical RK4 step.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if dt == 0.0 {
            return Ok(());
        }
        let comb = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + s * b).collect() };
        let (q, m, p) = (&self.q, &self.m, &self.tracers);
        let k1 = PeakonSystem::rhs(q, m, p);
        let k2 = PeakonSystem::rhs(&comb(q, &k1.0, 0.5 * dt), &comb(m, &k1.1, 0.5 * dt), &comb(p, &k1.2, 0.5 * dt));
        let k3 = PeakonSystem::rhs(&comb(q, &k2.0, 0.5 * dt), &comb(m, &k2.1, 0.5 * dt), &comb(p, &k2.2, 0.5 * dt));
        let k4 = PeakonSystem::rhs(&comb(q, &k3.0, dt), &comb(m, &k3.1, dt), &comb(p, &k3.2, dt));
        let upd = |x: &mut Vec<f64>, a: &[f64], b: &[f64], c: &[f64], d: &[f64]| {
            for i in 0..x.len() {
                x[i] += dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
            }
        };
        upd(&mut self.q, &k1.0, &k2.0, &k3.0, &k4.0);
        upd(&mut self.m, &k1.1, &k2.1, &k3.1, &k4.1);
        upd(&mut self.tracers, &k1.2, &k2.2, &k3.2, &k4.2);
        if self.q.iter().chain(&self.m).chain(&self.tracers).any(|a| !a.is_finite()) {
            return Err(DpError::Invalid("particle state became non-finite".into()));
        }
        if let Some(i) = self.q.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DpError::Invalid(format!("particles {i} and {} collided", i + 1)));
        }
        Ok(())
    }

    /// Fields at ascending points.
    pub fn fields_at(&self, xs: &[f64]) -> PointFields {
        let (l1, a1, r1) = side_sums(&self.q, &self.m, xs, 1.0);
        let (l2, a2, r2) = side_sums(&self.q, &self.m, xs, 2.0);
        let n = xs.len();
        let mut out = PointFields { u: vec![0.0; n], u_x: vec![0.0; n], v: vec![0.0; n], v_x: vec![0.0; n] };
        for i in 0..n {
            let (s1, s2) = (l1[i] + a1[i] + r1[i], l2[i] + a2[i] + r2[i]);
            out.u[i] = s1;
            out.u_x[i] = r1[i] - l1[i];
            // v = Σ m (e^{-|s|}/3 - e^{-2|s|}/6)
            out.v[i] = s1 / 3.0 - s2 / 6.0;
            out.v_x[i] = (r1[i] - l1[i]) / 3.0 - (r2[i] - l2[i]) / 3.0;
        }
        out
    }

    pub fn u_at(&self, x: f64) -> f64 {
        self.fields_at(&[x]).u[0]
    }

    pub fn v_at(&self, x: f64) -> f64 {
        self.fields_at(&[x]).v[0]
    }

    /// `M = ∫u = ∫y = 2 Σ m_i`.
    pub fn mass(&self) -> f64 {
        2.0 * self.m.iter().sum::<f64>()
    }

    /// `E = ∫ y v = 2 Σ_i m_i v(q_i)`.
    pub fn energy(&self) -> f64 {
        let f = self.fields_at(&self.q);
        2.0 * self.m.iter().zip(&f.v).map(|(m, v)| m * v).sum::<f64>()
    }

    /// `F = ∫u³` in closed form: `u` is a two-exponential on each gap.
    pub fn cubic(&self) -> f64 {
        let (q, m) = (&self.q, &self.m);
        let n = q.len();
        // left[i]: everything at or left of q_i seen from q_i; right[i] likewise
        let mut left = vec![0.0; n];
        left[0] = m[0];
        for i in 1..n {
            left[i] = left[i - 1] * (-(q[i] - q[i - 1])).exp() + m[i];
        }
        let mut right = vec![0.0; n];
        right[n - 1] = m[n - 1];
        for i in (0..n - 1).rev() {
            right[i] = right[i + 1] * (-(q[i + 1] - q[i])).exp() + m[i];
        }
        let mut f = right[0].powi(3) / 3.0 + left[n - 1].powi(3) / 3.0;
        for i in 0..n - 1 {
            let a = left[i];
            let b = right[i + 1];
            let d = q[i + 1] - q[i];
            let e1 = (-d).exp();
            let om1 = -(-d).exp_m1();
            let om3 = -(-3.0 * d).exp_m1();
            f += (a.powi(3) + b.powi(3)) * om3 / 3.0 + 3.0 * a * b * (a + b) * e1 * om1;
        }
        f
    }

    pub fn conserved(&self) -> (f64, f64, f64) {
        (self.mass(), self.energy(), self.cubic())
    }

    pub fn support(&self) -> (f64, f64) {
        (self.q[0], self.q[self.q.len() - 1])
    }

    /// Gauss–Legendre panels over `[q_0 - TAIL, q_N + TAIL]`, split at particles.
    pub fn cloud(&self, hmax: f64) -> QuadCloud {
        let (a, b) = self.support();
        let mut breaks = Vec::with_capacity(self.q.len() + 2);
        breaks.push(a - TAIL);
        breaks.extend_from_slice(&self.q);
        breaks.push(b + TAIL);
        QuadCloud::from_breakpoints(&breaks, hmax)
    }

    /// `∫(4v²+5v_x²+v_xx²) w` and `∫u³ w`.
    pub fn weighted_energy_cubic(&self, w: impl Fn(f64) -> f64) -> (f64, f64) {
        let c = self.cloud(0.25);
        let f = self.fields_at(&c.x);
        let mut e = 0.0;
        let mut cub = 0.0;
        for i in 0..c.x.len() {
            let vxx = 4.0 * f.v[i] - f.u[i];
            let wt = c.w[i] * w(c.x[i]);
            e += wt * (4.0 * f.v[i] * f.v[i] + 5.0 * f.v_x[i] * f.v_x[i] + vxx * vxx);
            cub += wt * f.u[i].powi(3);
        }
        (e, cub)
    }

    /// Extremum of `v` over `[lo, hi]` by a scan at spacing `<= 0.01` and
    /// Newton refinement on `v_x` (with `v_xx = 4v - u`).
    pub fn v_extremum(&self, lo: f64, hi: f64, kind: ExtremumKind) -> Extremum {
        let s = if kind == ExtremumKind::Max { 1.0 } else { -1.0 };
        let k = ((hi - lo) / 0.01).ceil().max(2.0) as usize;
        let xs: Vec<f64> = (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
        let f = self.fields_at(&xs);
        let (mut best, mut bv) = (0, s * f.v[0]);
        for (i, &v) in f.v.iter().enumerate() {
            if s * v > bv {
                bv = s * v;
                best = i;
            }
        }
        let h = (hi - lo) / k as f64;
        let mut x = xs[best];
        for _ in 0..30 {
            let p = self.fields_at(&[x]);
            let vxx = 4.0 * p.v[0] - p.u[0];
            if vxx == 0.0 {
                break;
            }
            let step = -p.v_x[0] / vxx;
            let nx = x + step;
            if !nx.is_finite() || (nx - xs[best]).abs() > 2.0 * h {
                break;
            }
            x = nx;
            if step.abs() < 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        let value = self.v_at(x);
        if s * value < bv {
            return Extremum { x: xs[best], value: f.v[best], degenerate: false };
        }
        Extremum { x, value, degenerate: false }
    }

    /// `‖u - Σ φ_{c_j}(· - r_j)‖²_H`, exact.
    pub fn distance_sq_to_peakons(&self, peaks: &[(f64, f64)]) -> f64 {
        let mut pairs: Vec<(f64, f64)> = self.q.iter().copied().zip(self.m.iter().copied()).collect();
        pairs.extend(peaks.iter().map(|&(c, r)| (r, -c)));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let q: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let m: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (l1, a1, r1) = side_sums(&q, &m, &q, 1.0);
        let (l2, a2, r2) = side_sums(&q, &m, &q, 2.0);
        let mut e = 0.0;
        // coincident positions are fine: `at` collects every copy
        for i in 0..q.len() {
            let v = (l1[i] + a1[i] + r1[i]) / 3.0 - (l2[i] + a2[i] + r2[i]) / 6.0;
            e += 2.0 * m[i] * v;
        }
        e.max(0.0)
    }

    /// `sup |u - φ_c(· - r)|` sampled on the panel nodes, the particles and `r`.
    pub fn linf_distance_to_peakon(&self, c: f64, r: f64) -> f64 {
        let mut xs = self.cloud(0.05).x;
        xs.extend_from_slice(&self.q);
        xs.push(r);
        xs.sort_by(f64::total_cmp);
        let u = PeakonSystem::velocity_at(&self.q, &self.m, &xs);
        xs.iter().zip(u).map(|(&x, u)| (u - c * (-(x - r).abs()).exp()).abs()).fold(0.0, f64::max)
    }

    /// Positive and negative momentum mass `(∫y⁺, ∫y⁻)` right of `left` (whole line if `None`).
    pub fn y_mass_split(&self, left: Option<f64>) -> (f64, f64) {
        let (mut pos, mut neg) = (0.0, 0.0);
        for (&q, &m) in self.q.iter().zip(&self.m) {
            if left.is_none_or(|l| q >= l) {
                if m > 0.0 {
                    pos += 2.0 * m;
                } else {
                    neg -= 2.0 * m;
                }
            }
        }
        (pos, neg)
    }

    /// Sign structure: every negative particle left of every positive one.
    /// Returns the gap `(last negative, first positive)`.
    pub fn sign_gap(&self) -> std::result::Result<(Option<f64>, Option<f64>), String> {
        let last_neg = self.q.iter().zip(&self.m).filter(|(_, &m)| m < 0.0).map(|(&q, _)| q).next_back();
        let first_pos = self.q.iter().zip(&self.m).find(|(_, &m)| m > 0.0).map(|(&q, _)| q);
        match (last_neg, first_pos) {
            (Some(a), Some(b)) if b < a => Err(format!("positive momentum at {b} left of negative momentum at {a}")),
            _ => Ok((last_neg, first_pos)),
        }
    }

    pub fn max_abs_u(&self) -> f64 {
        let mut xs = self.q.clone();
        xs.extend(self.cloud(0.25).x);
        xs.sort_by(f64::total_cmp);
        PeakonSystem::velocity_at(&self.q, &self.m, &xs).into_iter().fold(0.0, |a, u| a.max(u.abs()))
    }

    /// `max (u - 6v)` over ascending `xs`.
    pub fn max_u_minus_6v(&self, xs: &[f64]) -> f64 {
        let f = self.fields_at(xs);
        f.u.iter().zip(&f.v).map(|(u, v)| u - 6.0 * v).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sample `u` on a grid (no periodic images).
    pub fn sample(&self, grid: &Grid) -> Field {
        let xs = grid.nodes();
        Field::from_vec(*grid, PeakonSystem::velocity_at(&self.q, &self.m, &xs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::PerturbationShape;

    fn brute_u(q: &[f64], m: &[f64], x: f64) -> f64 {
        q.iter().zip(m).map(|(q, m)| m * (-(x - q).abs()).exp()).sum()
    }

    fn brute_v(q: &[f64], m: &[f64], x: f64) -> f64 {
        q.iter()
            .zip(m)
            .map(|(q, m)| {
                let s = (x - q).abs();
                m * ((-s).exp() / 3.0 - (-2.0 * s).exp() / 6.0)
            })
            .sum()
    }

    fn sample_system() -> PeakonSystem {
        PeakonSystem::new(vec![-3.0, -1.0, 0.5, 2.0, 5.0], vec![-0.3, -0.1, 1.0, 0.2, 0.05]).unwrap()
    }

    #[test]
    fn sums_match_brute_force() {
        let s = sample_system();
        let xs: Vec<f64> = (0..200).map(|i| -10.0 + 0.1 * i as f64).chain([0.5, 2.0]).collect();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let f = s.fields_at(&xs);
        for (i, &x) in xs.iter().enumerate() {
            assert!((f.u[i] - brute_u(&s.q, &s.m, x)).abs() < 1e-13);
            assert!((f.v[i] - brute_v(&s.q, &s.m, x)).abs() < 1e-13);
            let h = 1e-5;
            let fd = (brute_v(&s.q, &s.m, x + h) - brute_v(&s.q, &s.m, x - h)) / (2.0 * h);
            assert!((f.v_x[i] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn single_peakon_values() {
        let c = 1.7;
        let s = PeakonSystem::new(vec![0.3], vec![c]).unwrap();
        let (m, e, f) = s.conserved();
        assert!((m - 2.0 * c).abs() < 1e-15);
        assert!((e - c * c / 3.0).abs() < 1e-14);
        assert!((f - 2.0 * c.powi(3) / 3.0).abs() < 1e-14);
        assert!(s.distance_sq_to_peakons(&[(c, 0.3)]) < 1e-14);
        let ext = s.v_extremum(-3.0, 3.0, ExtremumKind::Max);
        assert!((ext.x - 0.3).abs() < 1e-7 && (ext.value - c / 6.0).abs() < 1e-12);
        // the peakon translates rigidly at speed c
        let mut t = s.clone().with_tracers(vec![0.3]);
        for _ in 0..100 {
            t.step(0.01).unwrap();
        }
        assert!((t.q[0] - (0.3 + c)).abs() < 1e-12);
        assert!((t.tracers[0] - (0.3 + c)).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let s = sample_system();
        let (e, f) = s.weighted_energy_cubic(|_| 1.0);
        assert!((e - s.energy()).abs() < 1e-10, "{e} {}", s.energy());
        assert!((f - s.cubic()).abs() < 1e-10, "{f} {}", s.cubic());
        let c = s.cloud(0.5);
        let u: Vec<f64> = s.fields_at(&c.x).u;
        assert!((c.integrate(&u) - s.mass()).abs() < 1e-10);
        // distance by expansion E(u) - 4 c v(r) + c²/3
        let (cc, r) = (0.8, 0.2);
        let d2 = s.energy() - 4.0 * cc * s.v_at(r) + cc * cc / 3.0;
        assert!((s.distance_sq_to_peakons(&[(cc, r)]) - d2).abs() < 1e-12);
    }

    #[test]
    fn ode_conserves_and_orders() {
        let mut s = sample_system().with_tracers(vec![-5.0, -2.0, 0.0, 3.0]);
        let (m0, e0, f0) = s.conserved();
        for _ in 0..2000 {
            s.step(0.005).unwrap();
        }
        let (m1, e1, f1) = s.conserved();
        assert!((m1 - m0).abs() < 1e-12);
        assert!((e1 - e0).abs() < 1e-9 * e0, "{e0} {e1}");
        assert!((f1 - f0).abs() < 1e-9 * f0.abs(), "{f0} {f1}");
        assert!(s.tracers.windows(2).all(|w| w[0] < w[1]));
        assert!(s.sign_gap().is_ok());
        // halving dt: fourth order
        let run = |dt: f64| {
            let mut s = sample_system();
            for _ in 0..(1.0 / dt).round() as usize {
                s.step(dt).unwrap();
            }
            s.q[2]
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn from_profile_and_sign_checks() {
        let bump = Perturbation { shape: PerturbationShape::Bump, amplitude: 0.2, center: 3.0, width: 1.0 };
        let neg =
            Perturbation { shape: PerturbationShape::LeftNegativeMomentum, amplitude: 0.1, center: -3.0, width: 1.0 };
        let s = PeakonSystem::from_profile(&[(1.0, 0.0)], &[bump, neg], 64).unwrap();
        assert_eq!(s.len(), 129);
        assert!((s.mass() - (2.0 + 0.2 - 0.1)).abs() < 1e-12);
        let (p, n) = s.y_mass_split(None);
        assert!((p - 2.2).abs() < 1e-12 && (n - 0.1).abs() < 1e-12);
        let (p, n) = s.y_mass_split(Some(0.0));
        assert!((p - 2.2).abs() < 1e-12 && n == 0.0);
        assert!(s.sign_gap().is_ok());
        let bad = PeakonSystem::new(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        assert!(bad.sign_gap().is_err());
        assert!(PeakonSystem::new(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        // sampling agrees with the mollified spectral profile of the same momentum
        let g = Grid::new(40.0, 4096).unwrap();
        let u = s.sample(&g);
        // trapezoid over kinks: O(h²)
        assert!((u.quadrature() - s.mass()).abs() < 1e-4);
        let lin = s.linf_distance_to_peakon(1.0, 0.0);
        assert!(lin > 0.0 && lin < 0.2);
    }
}
