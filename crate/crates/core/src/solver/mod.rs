//! Time stepping of the nonlocal form
//! `u_t = -½∂_x(u²) - (3/2)∂_x(1-∂²)^{-1}(u²)`
//! with a Fourier–Galerkin discretization (3/2-rule dealiasing) and classical RK4.
//!
//! Without the filter the semi-discrete system conserves `M`, `E` and the
//! exact `∫u³` of the interpolant, so conservation drift measures only the
//! time integrator.

pub mod flow;
pub mod virial;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::grid::Field;
use crate::helmholtz::{derived_fields, DerivedFields};
use crate::spectral::{fft, ifft_real, pad_spectrum, truncate_spectrum, wavenumber};

pub use flow::{flow_map, flow_map_with, Interpolation, Trajectory, TrajectoryLabel};
pub use virial::{
    smooth_variable_rhs_check, virial_order_study, virial_reports, virial_residuals, OrderStudy, SmoothVariableCheck,
    VirialCoefficients, VirialWeight,
};

/// Exponential filter `exp(-α (|k|/k_N)^p)` applied once per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub alpha: f64,
    pub order: u32,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { alpha: 36.0, order: 36 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cfl: f64,
    /// Fixed step; when absent `dt = cfl · spacing / max(1, max|u|)`.
    pub dt: Option<f64>,
    /// Off by default: the filter breaks the exact conservation of `E` and `F`.
    pub filter: Option<FilterSpec>,
    pub blowup_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { cfl: 0.3, dt: None, filter: None, blowup_threshold: 1e6 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 2.0) {
            return Err(DpError::Config(format!("cfl = {} outside (0, 2]", self.cfl)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(DpError::Config(format!("dt = {dt} must be positive")));
            }
        }
        if let Some(f) = self.filter {
            if !(f.alpha >= 0.0) || f.order == 0 {
                return Err(DpError::Config("filter needs alpha >= 0 and order >= 1".into()));
            }
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(DpError::Config("blow-up threshold must be positive".into()));
        }
        Ok(())
    }

    fn cfl_dt(&self, u: &Field) -> f64 {
        self.cfl * u.grid().spacing() / u.max_abs().max(1.0)
    }
}

/// The dealiased square of `u`: `P_n(u²)` computed on `3n/2` points.
pub fn dealiased_square(u: &Field) -> Field {
    let n = u.grid().n();
    let m = 3 * n / 2;
    let mut s = ifft_real(pad_spectrum(&fft(u.values()), m));
    for a in s.iter_mut() {
        *a *= *a;
    }
    Field::from_vec(*u.grid(), ifft_real(truncate_spectrum(&fft(&s), n)))
}

/// `-½∂_x(u²) - (3/2)∂_x(1-∂²)^{-1}(u²)` with the product dealiased.
pub fn rhs(u: &Field) -> Field {
    let g = *u.grid();
    let n = g.n();
    let m = 3 * n / 2;
    let mut s = ifft_real(pad_spectrum(&fft(u.values()), m));
    for a in s.iter_mut() {
        *a *= *a;
    }
    let mut c = truncate_spectrum(&fft(&s), n);
    for (j, cj) in c.iter_mut().enumerate() {
        let k = wavenumber(j, n, g.length());
        *cj *= Complex64::new(0.0, -k * (0.5 + 1.5 / (1.0 + k * k)));
    }
    c[n / 2] = Complex64::new(0.0, 0.0);
    Field::from_vec(g, ifft_real(c))
}

fn apply_filter(u: &Field, f: &FilterSpec) -> Field {
    let g = *u.grid();
    let kn = std::f64::consts::PI * g.n() as f64 / g.length();
    crate::spectral::apply_multiplier(u, |k, _| {
        Complex64::new((-f.alpha * (k.abs() / kn).powi(f.order as i32)).exp(), 0.0)
    })
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub derived: DerivedFields,
    pub dt: f64,
    pub step_count: u64,
}

impl SimState {
    pub fn new(u: Field, cfg: &SolverConfig) -> Result<SimState> {
        cfg.validate()?;
        let bound = cfg.cfl_dt(&u);
        let dt = cfg.dt.unwrap_or(bound);
        u.warn_if_leaking("initial data");
        Ok(SimState { t: 0.0, derived: derived_fields(&u), u, dt, step_count: 0 })
    }

    pub fn at_time(mut self, t: f64) -> SimState {
        self.t = t;
        self
    }
}

/// One RK4 update of `u` by `dt` (any sign), without filtering.
pub fn rk4(u: &Field, dt: f64) -> Field {
    let k1 = rhs(u);
    let k2 = rhs(&(u + &k1.scale(0.5 * dt)));
    let k3 = rhs(&(u + &k2.scale(0.5 * dt)));
    let k4 = rhs(&(u + &k3.scale(dt)));
    let mut out = u.values().to_vec();
    for j in 0..out.len() {
        out[j] += dt / 6.0 * (k1.values()[j] + 2.0 * k2.values()[j] + 2.0 * k3.values()[j] + k4.values()[j]);
    }
    Field::from_vec(*u.grid(), out)
}

/// Advance by `state.dt` (RK4, then the optional filter).
pub fn step(state: &SimState, cfg: &SolverConfig) -> Result<SimState> {
    step_by(state, cfg, state.dt)
}

fn step_by(state: &SimState, cfg: &SolverConfig, dt: f64) -> Result<SimState> {
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let mut u = rk4(&state.u, dt);
    if let Some(f) = &cfg.filter {
        u = apply_filter(&u, f);
    }
    let step_count = state.step_count + 1;
    let t = state.t + dt;
    if u.values().iter().any(|a| !a.is_finite()) {
        return Err(DpError::BlowUp { step: step_count, t, reason: "non-finite value".into() });
    }
    let mx = u.max_abs();
    if mx > cfg.blowup_threshold {
        return Err(DpError::BlowUp { step: step_count, t, reason: format!("max|u| = {mx:.3e}") });
    }
    let mut next_dt = state.dt;
    if cfg.dt.is_none() {
        next_dt = next_dt.min(cfg.cfl_dt(&u));
    }
    Ok(SimState { t, derived: derived_fields(&u), u, dt: next_dt, step_count })
}

/// Step until `t_end`, calling `observer` on the initial state, every
/// `out_every` steps and on the final state. The last step is shortened to
/// land on `t_end`.
pub fn evolve(
    state: SimState,
    t_end: f64,
    cfg: &SolverConfig,
    out_every: u64,
    observer: &mut dyn FnMut(&SimState) -> Result<()>,
) -> Result<SimState> {
    if t_end < state.t {
        return Err(DpError::Invalid(format!("final time {t_end} before current time {}", state.t)));
    }
    let out_every = out_every.max(1);
    observer(&state)?;
    let mut s = state;
    let mut since = 0;
    while s.t < t_end {
        let remaining = t_end - s.t;
        let dt = if remaining < s.dt * (1.0 + 1e-9) { remaining } else { s.dt };
        let keep = s.dt;
        s = step_by(&s, cfg, dt)?;
        if dt < keep {
            s.dt = keep;
            s.t = t_end;
        }
        since += 1;
        if since % out_every == 0 && s.t < t_end {
            observer(&s)?;
        }
    }
    if since > 0 {
        observer(&s)?;
    }
    Ok(s)
}
