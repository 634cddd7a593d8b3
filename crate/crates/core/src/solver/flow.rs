//! Characteristics `q_t = u(t, q)` integrated through stored snapshots.

use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::grid::Field;
use crate::spectral::barycentric_eval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryLabel {
    Flow { x_init: f64 },
    Modulation { index: i64 },
    SignChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: TrajectoryLabel,
    pub times: Vec<f64>,
    /// Positions wrapped into the box.
    pub positions: Vec<f64>,
    /// Number of times the point crossed the periodic seam (signed).
    pub windings: Vec<i64>,
}

impl Trajectory {
    pub fn new(label: TrajectoryLabel) -> Trajectory {
        Trajectory { label, times: Vec::new(), positions: Vec::new(), windings: Vec::new() }
    }

    pub fn push(&mut self, t: f64, x: f64, winding: i64) -> Result<()> {
        if !x.is_finite() {
            return Err(DpError::Tracking { t, reason: "non-finite position".into() });
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(DpError::Tracking { t, reason: format!("time {t} not after {last}") });
            }
        }
        self.times.push(t);
        self.positions.push(x);
        self.windings.push(winding);
        Ok(())
    }

    /// Positions with the windings undone, for a box of length `length`.
    pub fn unwrapped(&self, length: f64) -> Vec<f64> {
        self.positions.iter().zip(&self.windings).map(|(x, w)| x + *w as f64 * length).collect()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Least-squares slope of the unwrapped position over `t >= t_from`.
    pub fn mean_speed(&self, length: f64, t_from: f64) -> Option<f64> {
        let xs = self.unwrapped(length);
        let pts: Vec<(f64, f64)> =
            self.times.iter().zip(xs).filter(|(t, _)| **t >= t_from).map(|(t, x)| (*t, x)).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let (mt, mx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (t, x) in &pts {
            sxy += (t - mt) * (x - mx);
            sxx += (t - mt) * (t - mt);
        }
        Some(sxy / sxx)
    }
}

/// Spatial interpolation used for the characteristic velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Exact for band-limited fields, `O(n)` per evaluation.
    Barycentric,
    /// Four-point Lagrange, `O(1)`; fourth order in the spacing.
    Cubic,
}

fn interpolate(f: &Field, x: f64, how: Interpolation) -> f64 {
    match how {
        Interpolation::Barycentric => barycentric_eval(f, x),
        Interpolation::Cubic => {
            let g = f.grid();
            let n = g.n() as i64;
            let s = (g.wrap(x).0 - g.left()) / g.spacing();
            let j = s.floor() as i64;
            let t = s - j as f64;
            let at = |k: i64| f.values()[k.rem_euclid(n) as usize];
            let (a, b, c, d) = (at(j - 1), at(j), at(j + 1), at(j + 2));
            -t * (t - 1.0) * (t - 2.0) / 6.0 * a + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * b
                - (t + 1.0) * t * (t - 2.0) / 2.0 * c
                + (t + 1.0) * t * (t - 1.0) / 6.0 * d
        }
    }
}

/// RK4 through the snapshot intervals; `u` at the half step is the linear
/// interpolation in time of the two bracketing snapshots.
pub fn flow_map_with(history: &[(f64, Field)], x_init: f64, how: Interpolation) -> Result<Trajectory> {
    if history.len() < 2 {
        return Err(DpError::Invalid("flow map needs at least two snapshots".into()));
    }
    let g = *history[0].1.grid();
    let mut traj = Trajectory::new(TrajectoryLabel::Flow { x_init });
    let (x0, w0) = g.wrap(x_init);
    traj.push(history[0].0, x0, w0)?;
    let mut x = x_init;
    for pair in history.windows(2) {
        let (ta, ua) = (&pair[0].0, &pair[0].1);
        let (tb, ub) = (&pair[1].0, &pair[1].1);
        let h = tb - ta;
        if !(h > 0.0) {
            return Err(DpError::Invalid(format!("snapshot times not increasing at t = {ta}")));
        }
        let mid = |y: f64| 0.5 * (interpolate(ua, y, how) + interpolate(ub, y, how));
        let k1 = interpolate(ua, x, how);
        let k2 = mid(x + 0.5 * h * k1);
        let k3 = mid(x + 0.5 * h * k2);
        let k4 = interpolate(ub, x + h * k3, how);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let (xw, w) = g.wrap(x);
        traj.push(*tb, xw, w)?;
    }
    Ok(traj)
}

pub fn flow_map(history: &[(f64, Field)], x_init: f64) -> Result<Trajectory> {
    flow_map_with(history, x_init, Interpolation::Barycentric)
}
