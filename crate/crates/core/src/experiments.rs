//! Scenario configuration, runs and artifacts.
//!
//! A run reads a [`ScenarioConfig`] (JSON), evolves or evaluates the
//! requested scenario, writes its data files plus gnuplot scripts into
//! `output_dir`, and finishes with a `manifest.json` listing every file with
//! its SHA-256 and the pass/fail rollup of the run's checks. Everything
//! except the wall-clock entry of the manifest is a deterministic function of
//! the configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    decay_window_report, energy_momentum_value, j_values, weight_centers, DecayWindowReport, DiagnosticsRow,
    ModulationTrack, MonotonicitySeries, Observable,
};
use crate::error::{DpError, Result};
use crate::functionals::{conserved, WeightSpec};
use crate::grid::{Field, Grid};
use crate::helmholtz::resolvent_identity_residual;
use crate::identities::{self, CubicThresholds, IdentityReport};
use crate::particles::{PeakonSystem, TAIL};
use crate::profiles::{self, Perturbation, PerturbationShape, TrainSpec};
use crate::solver::{evolve, FilterSpec, SimState, SolverConfig};
use crate::spectral::random_band_limited;

/// Bumped whenever a file layout below changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const SERIES_HEADER: &str = "t,M,E,F,Hnorm,maxu,minu,distance,linf,ymass_pos,ymass_neg";
pub const CHECKS_HEADER: &str = "name,value,bound,pass,enforced";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Identities,
    SinglePeakon,
    AntipeakonPeakon,
    Train,
    Shock,
    Sweep,
}

/// How a stability run is evolved: the Fourier–Galerkin solver on the
/// periodic grid, or the exact peakon-particle ODE on the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Spectral,
    Particles,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub length: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { length: 60.0, n: 8192 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub cfl: f64,
    /// Steps between samples.
    pub out_every: u64,
    /// Fixed step; spectral runs default to the CFL bound, particle runs to 0.01.
    pub dt: Option<f64>,
    /// Spectral filter; off unless given, except shock runs use the default.
    pub filter: Option<FilterSpec>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { t_final: 5.0, cfl: 0.3, out_every: 10, dt: None, filter: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    /// Speed of the single peakon.
    pub c: f64,
    /// Train speeds, ascending.
    pub velocities: Vec<f64>,
    /// Train positions; empty means evenly spaced by `separation` around 0.
    pub shifts: Vec<f64>,
    pub separation: f64,
    /// Mollification index of grid data.
    pub mollification: u32,
    pub perturbations: Vec<Perturbation>,
    /// Rescale the perturbations so the initial H-distance to the
    /// unperturbed peakons is exactly this.
    pub delta: Option<f64>,
    /// Particles per smooth perturbation bump.
    pub particles_per_bump: usize,
    pub shock_k: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            c: 1.0,
            velocities: vec![-1.0, 1.0],
            shifts: Vec::new(),
            separation: 30.0,
            mollification: 16,
            perturbations: Vec::new(),
            delta: None,
            particles_per_bump: 20,
            shock_k: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub track: bool,
    pub decay_window: bool,
    pub monotonicity: bool,
    /// Weight scale; defaults to `√L/8`.
    pub k: Option<f64>,
    pub lambda: f64,
    pub snapshot_times: Vec<f64>,
    pub conservation_tol: f64,
    /// `C` in the terminal train bound `5 d(0) + C L^{-1/8}`.
    pub train_distance_constant: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            track: true,
            decay_window: true,
            monotonicity: true,
            k: None,
            lambda: 0.0,
            snapshot_times: Vec::new(),
            conservation_tol: 1e-4,
            train_distance_constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentitiesConfig {
    pub samples: usize,
    /// Relative size of the random momentum perturbations.
    pub amplitude: f64,
    pub resolvent_fields: usize,
    pub resolvent_n: usize,
    pub quadratic_tol: f64,
    pub gg_tol: f64,
    pub improvement_tol: f64,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        IdentitiesConfig {
            samples: 100,
            amplitude: 0.05,
            resolvent_fields: 20,
            resolvent_n: 256,
            quadratic_tol: 1e-6,
            gg_tol: 1e-5,
            improvement_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Separation,
    Delta,
    Speed,
    Seed,
    Amplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: Scenario,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub backend: Backend,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub profile: ProfileConfig,
    pub diagnostics: DiagnosticsConfig,
    pub identities: IdentitiesConfig,
    pub sweep: Option<SweepConfig>,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: Scenario::SinglePeakon,
            backend: Backend::Particles,
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            profile: ProfileConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            identities: IdentitiesConfig::default(),
            sweep: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<ScenarioConfig> {
        serde_json::from_str(text).map_err(|e| DpError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text =
            fs::read_to_string(path).map_err(|e| DpError::Config(format!("cannot read {}: {e}", path.display())))?;
        ScenarioConfig::from_json(&text)
    }

    /// Peakons `(c, z)` of the scenario, unperturbed.
    pub fn peaks(&self) -> Vec<(f64, f64)> {
        match self.scenario {
            Scenario::SinglePeakon => vec![(self.profile.c, 0.0)],
            Scenario::AntipeakonPeakon | Scenario::Train => {
                self.train_spec().map(|s| s.velocities.into_iter().zip(s.shifts).collect()).unwrap_or_default()
            }
            _ => Vec::new(),
        }
    }

    fn shifts(&self) -> Vec<f64> {
        let p = &self.profile;
        if !p.shifts.is_empty() {
            return p.shifts.clone();
        }
        let n = p.velocities.len() as f64;
        (0..p.velocities.len()).map(|i| (i as f64 - 0.5 * (n - 1.0)) * p.separation).collect()
    }

    pub fn train_spec(&self) -> Result<TrainSpec> {
        TrainSpec::new(self.profile.velocities.clone(), self.shifts(), self.profile.separation)
    }

    fn is_stability(&self) -> bool {
        matches!(self.scenario, Scenario::SinglePeakon | Scenario::AntipeakonPeakon | Scenario::Train)
    }

    fn uses_grid(&self) -> bool {
        match self.scenario {
            Scenario::Identities | Scenario::Shock => true,
            Scenario::Sweep => false,
            _ => self.backend == Backend::Spectral,
        }
    }
}

/// Every problem that would prevent `config` from running; empty when valid.
pub fn validate(config: &ScenarioConfig) -> Vec<String> {
    let mut out = Vec::new();
    let g = &config.grid;
    if !(g.length > 0.0 && g.length.is_finite()) {
        out.push(format!("grid.length = {} must be positive", g.length));
    }
    if g.n < 16 || !g.n.is_power_of_two() {
        out.push(format!("grid.n = {} must be a power of two >= 16", g.n));
    }
    let t = &config.time;
    if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
        out.push(format!("time.T = {} must be nonnegative", t.t_final));
    }
    if !(t.cfl > 0.0 && t.cfl <= 2.0) {
        out.push(format!("time.cfl = {} outside (0, 2]", t.cfl));
    }
    if t.out_every == 0 {
        out.push("time.out_every must be at least 1".into());
    }
    if let Some(dt) = t.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            out.push(format!("time.dt = {dt} must be positive"));
        }
    }
    let p = &config.profile;
    if p.mollification == 0 {
        out.push("profile.mollification must be at least 1".into());
    } else if config.uses_grid() && g.n > 0 && g.length / (g.n as f64) > profiles::max_spacing_for(p.mollification) {
        out.push(format!(
            "profile.mollification = {} needs grid spacing <= {} (have {})",
            p.mollification,
            profiles::max_spacing_for(p.mollification),
            g.length / g.n as f64
        ));
    }
    for (i, q) in p.perturbations.iter().enumerate() {
        if !(q.width > 0.0) || !q.center.is_finite() || !q.amplitude.is_finite() {
            out.push(format!("profile.perturbations[{i}] needs finite amplitude/center and positive width"));
        }
    }
    if let Some(d) = p.delta {
        if !(d > 0.0) {
            out.push(format!("profile.delta = {d} must be positive"));
        }
        if p.perturbations.iter().all(|q| q.amplitude == 0.0) {
            out.push("profile.delta needs a nonzero perturbation to rescale".into());
        }
    }
    if p.particles_per_bump == 0 {
        out.push("profile.particles_per_bump must be at least 1".into());
    }
    match config.scenario {
        Scenario::SinglePeakon => {
            if !(p.c > 0.0) {
                out.push(format!("profile.c = {} must be positive for a single peakon", p.c));
            }
        }
        Scenario::AntipeakonPeakon | Scenario::Train => {
            let spec =
                TrainSpec { velocities: p.velocities.clone(), shifts: config.shifts(), separation: p.separation };
            out.extend(spec.problems().into_iter().map(|e| format!("train: {e}")));
            if config.scenario == Scenario::AntipeakonPeakon
                && !(p.velocities.len() == 2 && p.velocities[0] < 0.0 && p.velocities[1] > 0.0)
            {
                out.push("antipeakon_peakon needs velocities [c_-1 < 0, c_1 > 0]".into());
            }
        }
        Scenario::Shock => {
            if !(p.shock_k > 0.0) {
                out.push(format!("profile.shock_k = {} must be positive", p.shock_k));
            }
        }
        Scenario::Identities => {
            let id = &config.identities;
            if id.samples == 0 {
                out.push("identities.samples must be at least 1".into());
            }
            if !(id.amplitude >= 0.0 && id.amplitude < 1.0) {
                out.push(format!("identities.amplitude = {} outside [0, 1)", id.amplitude));
            }
            if id.resolvent_n < 16 || !id.resolvent_n.is_power_of_two() {
                out.push(format!("identities.resolvent_n = {} must be a power of two >= 16", id.resolvent_n));
            }
        }
        Scenario::Sweep => match &config.sweep {
            None => out.push("sweep scenario needs a sweep section".into()),
            Some(s) => {
                if s.base == Scenario::Sweep {
                    out.push("sweep.base cannot itself be a sweep".into());
                }
                if s.values.is_empty() {
                    out.push("sweep.values is empty".into());
                }
                for (i, &v) in s.values.iter().enumerate() {
                    let child = sweep_child(config, s, v, i);
                    out.extend(validate(&child).into_iter().map(|e| format!("sweep value {v}: {e}")));
                }
            }
        },
    }
    if config.is_stability() && out.is_empty() {
        if let Err(e) = sign_structure_of(&config.peaks(), &p.perturbations) {
            out.push(format!("initial data violates the sign structure: {e}"));
        }
    }
    out
}

/// Negative momentum (antipeakons, negative bumps) must sit left of all
/// positive momentum, bump supports included.
fn sign_structure_of(peaks: &[(f64, f64)], perts: &[Perturbation]) -> std::result::Result<(), String> {
    let mut last_neg = f64::NEG_INFINITY;
    let mut first_pos = f64::INFINITY;
    for &(c, z) in peaks {
        if c < 0.0 {
            last_neg = last_neg.max(z);
        } else {
            first_pos = first_pos.min(z);
        }
    }
    for q in perts {
        let m = q.mass();
        if m < 0.0 {
            last_neg = last_neg.max(q.center + q.width);
        } else if m > 0.0 {
            first_pos = first_pos.min(q.center - q.width);
        }
    }
    if last_neg > first_pos {
        return Err(format!("negative momentum reaches x = {last_neg}, positive momentum starts at x = {first_pos}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    /// Informational checks are reported but do not enter the rollup.
    pub enforced: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Check {
        Check { name: name.into(), value, bound, pass: value <= bound, enforced: true }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Check {
        Check { name: name.into(), value, bound, pass: value >= bound, enforced: true }
    }

    pub fn informational(self) -> Check {
        Check { enforced: false, ..self }
    }

    /// Whether this check keeps the rollup green.
    pub fn ok(&self) -> bool {
        self.pass || !self.enforced
    }

    fn csv_row(&self) -> String {
        format!("{},{:e},{:e},{},{}", self.name, self.value, self.bound, self.pass, self.enforced)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildSummary {
    pub value: f64,
    pub output_dir: PathBuf,
    pub rollup: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub wall_clock_seconds: f64,
    pub schemas: std::collections::BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub blowup: Option<String>,
    pub children: Vec<ChildSummary>,
    pub rollup: bool,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Collects every file a run writes, relative to its output directory.
struct Artifacts {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    fn new(root: &Path) -> Result<Artifacts> {
        fs::create_dir_all(root)?;
        Ok(Artifacts { root: root.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.push(FileEntry { path: rel.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn write_str(&mut self, rel: &str, text: &str) -> Result<()> {
        self.write(rel, text.as_bytes())
    }
}

fn checks_csv(checks: &[Check]) -> String {
    let mut s = format!("{CHECKS_HEADER}\n");
    for c in checks {
        s.push_str(&c.csv_row());
        s.push('\n');
    }
    s
}

/// One sampled state of a stability run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// H-distance to the peakons placed at the tracked positions.
    pub distance: f64,
    /// `sup|u - φ_c(· - ξ)|` (single peakon only).
    pub linf: f64,
    pub max_abs_u: f64,
    pub y_l1: f64,
    pub hypothesis1: std::result::Result<Option<f64>, String>,
}

/// Everything measured along a run; the CLI writes it out, tests inspect it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub rows: Vec<DiagnosticsRow>,
    pub samples: Vec<Sample>,
    pub track: Option<ModulationTrack>,
    pub tracking_error: Option<String>,
    pub decay: Vec<DecayWindowReport>,
    pub monotonicity: Vec<MonotonicitySeries>,
    pub energy_momentum: Option<MonotonicitySeries>,
    /// Scale applied to the configured perturbation amplitudes.
    pub perturbation_scale: f64,
    pub initial_distance: f64,
    pub u0_l2: f64,
    pub u0_linf: f64,
    pub y0_l1: f64,
    pub h0: f64,
    /// Shock runs: `(t, -∫_0^{L/2} u / (1 - e^{-L/2}))`, which is `1/(t+k)`
    /// for the exact solution and, unlike `max|u|`, blind to Gibbs overshoot.
    pub shock_amplitude: Vec<(f64, f64)>,
    pub checks: Vec<Check>,
    pub blowup: Option<String>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, Field)>,
}

impl RunRecord {
    pub fn rollup(&self) -> bool {
        self.blowup.is_none() && self.checks.iter().all(Check::ok)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

enum Sim {
    Grid { state: Box<SimState>, cfg: SolverConfig },
    Particles { sys: PeakonSystem, t: f64, dt: f64 },
}

impl Sim {
    fn t(&self) -> f64 {
        match self {
            Sim::Grid { state, .. } => state.t,
            Sim::Particles { t, .. } => *t,
        }
    }

    fn step_size(&self) -> f64 {
        match self {
            Sim::Grid { state, .. } => state.dt,
            Sim::Particles { dt, .. } => *dt,
        }
    }

    fn advance(&mut self, t_next: f64) -> Result<()> {
        match self {
            Sim::Grid { state, cfg } => {
                let s = (**state).clone();
                **state = evolve(s, t_next, cfg, u64::MAX, &mut |_| Ok(()))?;
            }
            Sim::Particles { sys, t, dt } => {
                while *t < t_next {
                    let h = if t_next - *t < *dt * (1.0 + 1e-9) { t_next - *t } else { *dt };
                    sys.step(h)?;
                    *t = if h < *dt { t_next } else { *t + h };
                }
            }
        }
        Ok(())
    }

    fn observable(&self) -> &dyn Observable {
        match self {
            Sim::Grid { state, .. } => &state.derived,
            Sim::Particles { sys, .. } => sys,
        }
    }

    fn field(&self, grid: &Grid) -> Field {
        match self {
            Sim::Grid { state, .. } => state.u.clone(),
            Sim::Particles { sys, .. } => sys.sample(grid),
        }
    }
}

fn scaled(perts: &[Perturbation], s: f64) -> Vec<Perturbation> {
    perts.iter().map(|p| Perturbation { amplitude: p.amplitude * s, ..*p }).collect()
}

fn make_grid(config: &ScenarioConfig) -> Result<Grid> {
    Grid::new(config.grid.length, config.grid.n)
}

fn initial_observable(config: &ScenarioConfig, peaks: &[(f64, f64)], s: f64) -> Result<Box<dyn Observable>> {
    let perts = scaled(&config.profile.perturbations, s);
    Ok(match config.backend {
        Backend::Spectral => {
            let g = make_grid(config)?;
            let u = profiles::perturbed_profile(&g, peaks, &perts, config.profile.mollification)?;
            Box::new(crate::helmholtz::derived_fields(&u))
        }
        Backend::Particles => Box::new(PeakonSystem::from_profile(peaks, &perts, config.profile.particles_per_bump)?),
    })
}

/// Perturbation scale giving initial H-distance `delta`: the squared distance
/// is a quadratic in the scale, fixed by evaluations at 0, 1/2 and 1.
pub fn perturbation_scale(config: &ScenarioConfig) -> Result<f64> {
    let Some(delta) = config.profile.delta else {
        return Ok(1.0);
    };
    let peaks = config.peaks();
    let d2 = |s: f64| -> Result<f64> { Ok(initial_observable(config, &peaks, s)?.h_distance_sq(&peaks)) };
    // nonnegative scales only: flipping a bump's sign can break the sign structure
    let (f0, fh, f1) = (d2(0.0)?, d2(0.5)?, d2(1.0)?);
    let a = 2.0 * (f1 - 2.0 * fh + f0);
    let b = f1 - f0 - a;
    let c = f0 - delta * delta;
    if a <= 0.0 {
        return Err(DpError::Config("perturbation does not change the distance".into()));
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Err(DpError::Config(format!(
            "initial distance {delta} not reachable by rescaling (unperturbed data is {} away)",
            f0.sqrt()
        )));
    }
    Ok((-b + disc.sqrt()) / (2.0 * a))
}

fn initial_sim(config: &ScenarioConfig, scale: f64) -> Result<Sim> {
    let perts = scaled(&config.profile.perturbations, scale);
    match config.scenario {
        Scenario::Shock => {
            let g = make_grid(config)?;
            let u = profiles::shock_peakon(config.profile.shock_k, 0.0, &g)?;
            // the jump needs the filter: unfiltered Galerkin oscillations grow
            let mut c = config.clone();
            c.time.filter = c.time.filter.or(Some(FilterSpec::default()));
            grid_sim(&c, u)
        }
        _ => match config.backend {
            Backend::Spectral => {
                let g = make_grid(config)?;
                let u = profiles::perturbed_profile(&g, &config.peaks(), &perts, config.profile.mollification)?;
                grid_sim(config, u)
            }
            Backend::Particles => {
                let sys = PeakonSystem::from_profile(&config.peaks(), &perts, config.profile.particles_per_bump)?;
                Ok(Sim::Particles { sys, t: 0.0, dt: config.time.dt.unwrap_or(0.01) })
            }
        },
    }
}

fn grid_sim(config: &ScenarioConfig, u: Field) -> Result<Sim> {
    let cfg =
        SolverConfig { cfl: config.time.cfl, dt: config.time.dt, filter: config.time.filter, ..Default::default() };
    Ok(Sim::Grid { state: Box::new(SimState::new(u, &cfg)?), cfg })
}

fn half_line_amplitude(u: &Field) -> f64 {
    let g = u.grid();
    let half = 0.5 * g.length();
    // trapezoid on (0, L/2): the endpoint nodes carry half weight
    let sum: f64 = g
        .nodes()
        .into_iter()
        .zip(u.values())
        .map(|(x, v)| {
            if x.abs() < 1e-12 || (x + half).abs() < 1e-12 {
                0.5 * v
            } else if x > 0.0 {
                *v
            } else {
                0.0
            }
        })
        .sum();
    -sum * g.spacing() / (1.0 - (-half).exp())
}

/// Evolves a stability or shock scenario and measures it.
pub fn simulate(config: &ScenarioConfig) -> Result<RunRecord> {
    let problems = validate(config);
    if !problems.is_empty() {
        return Err(DpError::Config(problems.join("; ")));
    }
    if !matches!(
        config.scenario,
        Scenario::SinglePeakon | Scenario::AntipeakonPeakon | Scenario::Train | Scenario::Shock
    ) {
        return Err(DpError::Config(format!("scenario {:?} is not a time evolution", config.scenario)));
    }
    let grid = make_grid(config)?;
    let scale = if config.is_stability() { perturbation_scale(config)? } else { 1.0 };
    let mut sim = initial_sim(config, scale)?;
    let peaks = config.peaks();
    let dg = &config.diagnostics;
    let mut rec = RunRecord { perturbation_scale: scale, ..Default::default() };
    {
        let s = sim.observable();
        rec.u0_l2 = s.u_l2();
        rec.u0_linf = s.max_abs_u();
        rec.y0_l1 = s.y_l1();
        rec.h0 = s.conserved_mef().1.max(0.0).sqrt();
    }
    let mut track = if dg.track && !peaks.is_empty() {
        let velocities: Vec<f64> = peaks.iter().map(|p| p.0).collect();
        let guesses: Vec<f64> = peaks.iter().map(|p| p.1).collect();
        let hw = if peaks.len() > 1 { 0.25 * config.profile.separation } else { 10.0 };
        Some(ModulationTrack::new(&velocities, &guesses, hw)?)
    } else {
        None
    };
    let first_pos = peaks.iter().position(|p| p.0 > 0.0);
    let k = dg.k.unwrap_or_else(|| WeightSpec::default_k(config.profile.separation));
    let interval = sim.step_size() * config.time.out_every as f64;
    let n_samples = (config.time.t_final / interval).ceil().max(0.0) as usize;
    let mut snaps: Vec<f64> = dg.snapshot_times.clone();
    snaps.sort_by(f64::total_cmp);
    let mut x1_initial = None;
    let mut em = MonotonicitySeries::new("E+gamma*M");
    for i in 0..=n_samples {
        let t_target = (i as f64 * interval).min(config.time.t_final);
        if i > 0 {
            if let Err(e) = sim.advance(t_target) {
                rec.blowup = Some(e.to_string());
                break;
            }
        }
        let t = sim.t();
        if let (Scenario::Shock, Sim::Grid { state, .. }) = (config.scenario, &sim) {
            rec.shock_amplitude.push((t, half_line_amplitude(&state.u)));
        }
        let s = sim.observable();
        let hyp = s.hypothesis1();
        let mut xi = Vec::new();
        if let Some(tr) = track.as_mut() {
            if rec.tracking_error.is_none() {
                match tr.observe(t, s) {
                    Ok(()) => xi = tr.positions().to_vec(),
                    Err(e) => rec.tracking_error = Some(e.to_string()),
                }
            }
        }
        let (distance, linf) = if xi.len() == peaks.len() && !xi.is_empty() {
            let placed: Vec<(f64, f64)> = peaks.iter().zip(&xi).map(|(p, x)| (p.0, *x)).collect();
            let d = s.h_distance_sq(&placed).sqrt();
            let l = if peaks.len() == 1 { s.linf_distance(peaks[0].0, xi[0]) } else { f64::NAN };
            (d, l)
        } else {
            (f64::NAN, f64::NAN)
        };
        let mut j = Vec::new();
        if let (Some(p), true) = (first_pos, xi.len() == peaks.len()) {
            let c1 = peaks[p].0;
            let x1 = *x1_initial.get_or_insert(xi[p]);
            if dg.monotonicity {
                let centers = weight_centers(x1, c1, config.profile.separation, t, &xi[p..]);
                j = j_values(s, k, dg.lambda, &centers);
                if rec.monotonicity.is_empty() {
                    rec.monotonicity = (1..=j.len()).map(|i| MonotonicitySeries::new(format!("J_{i}"))).collect();
                }
                for (series, v) in rec.monotonicity.iter_mut().zip(&j) {
                    series.push(t, *v);
                }
                em.push(t, energy_momentum_value(s, c1, centers[0]));
            }
            if dg.decay_window {
                let right = match s.period() {
                    Some(l) => 0.5 * l,
                    None => xi[p] + TAIL,
                };
                rec.decay.push(decay_window_report(s, t, xi[p], c1, rec.y0_l1, right));
            }
        }
        let x0 = hyp.as_ref().ok().copied().flatten();
        rec.rows.push(DiagnosticsRow::collect(t, s, xi, x0, j));
        rec.samples.push(Sample { t, distance, linf, max_abs_u: s.max_abs_u(), y_l1: s.y_l1(), hypothesis1: hyp });
        while let Some(&ts) = snaps.first() {
            if ts <= t + 1e-12 {
                rec.snapshots.push((t, sim.field(&grid)));
                snaps.remove(0);
            } else {
                break;
            }
        }
        if t >= config.time.t_final {
            break;
        }
    }
    if !em.values.is_empty() {
        rec.energy_momentum = Some(em);
    }
    rec.initial_distance = rec.samples.first().map_or(f64::NAN, |s| s.distance);
    rec.track = track;
    rec.checks = run_checks(config, &rec, &peaks);
    Ok(rec)
}

fn run_checks(config: &ScenarioConfig, rec: &RunRecord, peaks: &[(f64, f64)]) -> Vec<Check> {
    let mut out = Vec::new();
    let dg = &config.diagnostics;
    if let Some(b) = &rec.blowup {
        out.push(Check::at_most(format!("no_blowup: {b}"), 1.0, 0.0));
    }
    if config.scenario == Scenario::Shock {
        let k = config.profile.shock_k;
        let worst = rec
            .shock_amplitude
            .iter()
            .filter(|(t, _)| *t <= 2.0)
            .map(|(t, a)| (a * (t + k) - 1.0).abs())
            .fold(0.0, f64::max);
        out.push(Check::at_most("shock_amplitude_rel_error", worst, 0.05));
        return out;
    }
    if let (Some(a), Some(b)) = (rec.rows.first(), rec.rows.last()) {
        for (name, x0, x1) in [("M", a.M, b.M), ("E", a.E, b.E), ("F", a.F, b.F)] {
            let drift = (x1 - x0).abs() / x0.abs().max(1e-300);
            out.push(Check::at_most(format!("conservation_{name}"), drift, dg.conservation_tol));
        }
    }
    // A grid y is a near-delta at each crest whose Gibbs lobes carry a fixed
    // fraction of its mass; y-based checks then measure resolution, so they
    // are informational on the spectral backend.
    let y_check = |c: Check| match config.backend {
        Backend::Spectral => c.informational(),
        Backend::Particles => c,
    };
    let violations = rec.samples.iter().filter(|s| s.hypothesis1.is_err()).count();
    out.push(y_check(Check::at_most("hypothesis1_violations", violations as f64, 0.0)));
    let linf_ratio = rec.samples.iter().map(|s| s.max_abs_u).fold(0.0, f64::max) / (2.0 * (1.0 + 2f64.sqrt()) * rec.h0);
    out.push(Check::at_most("linf_apriori_ratio", linf_ratio, 1.01));
    let ymass_ratio = rec
        .samples
        .iter()
        .map(|s| {
            let growth = 3.0 * s.t * s.t * rec.u0_l2 + 2.0 * s.t * rec.u0_linf;
            s.y_l1 / (growth.exp() * rec.y0_l1)
        })
        .fold(0.0, f64::max);
    out.push(y_check(Check::at_most("ymass_apriori_ratio", ymass_ratio, 1.01)));
    if dg.track && !peaks.is_empty() {
        let tracked = rec.tracking_error.is_none();
        out.push(Check::at_least("tracking_ordered", tracked as u8 as f64, 1.0));
        if let Some(tr) = rec.track.as_ref().filter(|_| tracked) {
            let sigma = crate::diagnostics::speed_separation(&tr.velocities);
            for (i, (sp, c)) in tr.speeds(0.0).iter().zip(&tr.velocities).enumerate() {
                let err = sp.map_or(f64::INFINITY, |s| (s - c).abs());
                out.push(Check::at_most(format!("speed_band_{i}"), err, sigma / 8.0));
            }
            if peaks.len() > 1 {
                // skip the interaction transient, or the first half of short runs
                let t_from = 2f64.min(0.5 * config.time.t_final);
                for i in 0..peaks.len() - 1 {
                    let slope = tr.gap_slope(i, t_from).unwrap_or(f64::NAN);
                    let want = 0.9 * (peaks[i + 1].0 - peaks[i].0) / 2.0;
                    out.push(Check::at_least(format!("gap_slope_{i}"), slope, want));
                }
                let d_end = rec.samples.last().map_or(f64::NAN, |s| s.distance);
                let bound =
                    5.0 * rec.initial_distance + dg.train_distance_constant * config.profile.separation.powf(-0.125);
                out.push(Check::at_most("train_distance_terminal", d_end, bound));
            } else if !config.profile.perturbations.is_empty() {
                let d0 = rec.initial_distance;
                let worst = rec.samples.iter().map(|s| s.distance).fold(0.0, f64::max);
                out.push(Check::at_most("stability_envelope", worst, 20.0 * d0.sqrt()));
                let c = peaks[0].0;
                let fit = rec
                    .samples
                    .iter()
                    .filter(|s| s.distance > 1e-12)
                    .map(|s| s.linf / s.distance.powf(2.0 / 3.0))
                    .fold(0.0, f64::max);
                out.push(Check::at_most("linf_envelope_constant", fit, 8.0 * (2.0 + c).powi(2)));
                // u >= -4 α^{2/3} (2+c) with α taken as the measured distance
                let excess = rec
                    .rows
                    .iter()
                    .zip(&rec.samples)
                    .filter(|(_, s)| s.distance.is_finite())
                    .map(|(r, s)| -4.0 * s.distance.powf(2.0 / 3.0) * (2.0 + c) - r.minu)
                    .fold(f64::NEG_INFINITY, f64::max);
                out.push(Check::at_most("u_lower_bound_excess", excess, 0.0));
            }
        }
    }
    if dg.decay_window && !rec.decay.is_empty() {
        let floor = 0.0;
        let first = rec.decay[0];
        let last = rec.decay[rec.decay.len() - 1];
        let c = peaks.iter().find(|p| p.0 > 0.0).map_or(1.0, |p| p.0);
        let rate_bound = 2.0 * (-c * last.t / 16.0).exp() * first.mass + floor;
        out.push(y_check(Check::at_most("decay_window_terminal", last.mass, rate_bound)));
        let worst = rec.decay.iter().map(|r| r.mass - r.bound).fold(f64::NEG_INFINITY, f64::max);
        out.push(y_check(Check::at_most("decay_window_envelope_excess", worst, floor)));
    }
    out
}

fn summary_csv(config: &ScenarioConfig, rec: &RunRecord) -> String {
    let mut s = String::from("key,value\n");
    let _ = writeln!(s, "scenario,{}", serde_json::to_string(&config.scenario).unwrap_or_default().trim_matches('"'));
    let _ = writeln!(s, "backend,{}", serde_json::to_string(&config.backend).unwrap_or_default().trim_matches('"'));
    let _ = writeln!(s, "perturbation_scale,{}", rec.perturbation_scale);
    let _ = writeln!(s, "initial_distance,{}", rec.initial_distance);
    let _ = writeln!(s, "final_distance,{}", rec.samples.last().map_or(f64::NAN, |x| x.distance));
    for c in &rec.checks {
        let _ = writeln!(s, "{},{}", c.name, c.value);
        let _ = writeln!(s, "{}_pass,{}", c.name, c.pass);
    }
    let _ = writeln!(s, "rollup,{}", rec.rollup());
    s
}

/// Column layouts of the emitted tables, echoed in every manifest.
pub fn schemas() -> std::collections::BTreeMap<String, String> {
    [
        ("diagnostics.jsonl", "{t, M, E, F, Hnorm, maxu, minu, xi[], x0, ymass_pos, ymass_neg, J[]}"),
        ("series.csv", SERIES_HEADER),
        ("checks.csv", CHECKS_HEADER),
        ("summary.csv", "key,value"),
        ("track.csv", "t,xi_<index>..."),
        ("decay.csv", "t,window_left,mass,bound,u_minus_6v,u_minus_6v_bound"),
        ("monotonicity.csv", "t,J_1..J_n,E+gamma*M"),
        ("identities.csv", IdentityReport::CSV_HEADER),
        ("sweep.csv", "index,value,rollup,output_dir"),
        ("snapshots/*.bin", "length f64 LE, n u64 LE, n values f64 LE"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

fn series_csv(rec: &RunRecord) -> String {
    let mut s = format!("{SERIES_HEADER}\n");
    for (r, m) in rec.rows.iter().zip(&rec.samples) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t, r.M, r.E, r.F, r.Hnorm, r.maxu, r.minu, m.distance, m.linf, r.ymass_pos, r.ymass_neg
        );
    }
    s
}

fn track_csv(tr: &ModulationTrack) -> String {
    let mut s = String::from("t");
    for t in &tr.tracks {
        if let crate::solver::TrajectoryLabel::Modulation { index } = t.label {
            let _ = write!(s, ",xi_{index}");
        }
    }
    s.push('\n');
    for k in 0..tr.tracks[0].len() {
        let _ = write!(s, "{}", tr.tracks[0].times[k]);
        for t in &tr.tracks {
            let _ = write!(s, ",{}", t.positions[k]);
        }
        s.push('\n');
    }
    s
}

fn decay_csv(rows: &[DecayWindowReport]) -> String {
    let mut s = String::from("t,window_left,mass,bound,u_minus_6v,u_minus_6v_bound\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.t, r.window_left, r.mass, r.bound, r.u_minus_6v, r.u_minus_6v_bound);
    }
    s
}

fn monotonicity_csv(series: &[MonotonicitySeries], em: Option<&MonotonicitySeries>) -> String {
    let mut s = String::from("t");
    for m in series.iter().chain(em) {
        let _ = write!(s, ",{}", m.label);
    }
    s.push('\n');
    let Some(first) = series.first() else {
        return s;
    };
    for k in 0..first.times.len() {
        let _ = write!(s, "{}", first.times[k]);
        for m in series.iter().chain(em) {
            let _ = write!(s, ",{}", m.values[k]);
        }
        s.push('\n');
    }
    s
}

const SERIES_PLOT: &str = "set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 1200,800
set output 'series.png'
set multiplot layout 2,2
set xlabel 't'
plot 'series.csv' using 1:3 with lines, '' using 1:4 with lines
set logscale y
plot 'series.csv' using 1:8 with lines
unset logscale y
plot 'series.csv' using 1:6 with lines, '' using 1:7 with lines
plot 'series.csv' using 1:11 with lines
unset multiplot
";

const TRACK_PLOT: &str = "set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,600
set output 'track.png'
set xlabel 't'
stats 'track.csv' skip 1 nooutput
plot for [i=2:STATS_columns] 'track.csv' using 1:i with lines
";

const MONOTONICITY_PLOT: &str = "set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,600
set output 'monotonicity.png'
set xlabel 't'
stats 'monotonicity.csv' skip 1 nooutput
plot for [i=2:STATS_columns] 'monotonicity.csv' using 1:i with lines
";

const IDENTITIES_PLOT: &str = "set datafile separator ','
set terminal pngcairo size 900,600
set output 'identities.png'
set logscale y
set ylabel 'relative residual'
plot 'identities.csv' every ::1 using 0:5 with points title 'rel_residual'
";

fn write_record(config: &ScenarioConfig, rec: &RunRecord, art: &mut Artifacts) -> Result<()> {
    let mut jsonl = String::new();
    for r in &rec.rows {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    art.write_str("diagnostics.jsonl", &jsonl)?;
    art.write_str("series.csv", &series_csv(rec))?;
    art.write_str("series.gp", SERIES_PLOT)?;
    if let Some(tr) = rec.track.as_ref().filter(|t| !t.tracks.is_empty() && !t.tracks[0].is_empty()) {
        art.write_str("track.csv", &track_csv(tr))?;
        art.write_str("track.gp", TRACK_PLOT)?;
    }
    if !rec.decay.is_empty() {
        art.write_str("decay.csv", &decay_csv(&rec.decay))?;
    }
    if !rec.monotonicity.is_empty() {
        art.write_str("monotonicity.csv", &monotonicity_csv(&rec.monotonicity, rec.energy_momentum.as_ref()))?;
        art.write_str("monotonicity.gp", MONOTONICITY_PLOT)?;
    }
    for (t, f) in &rec.snapshots {
        art.write(&format!("snapshots/u_t{t:09.4}.bin"), &f.to_bytes())?;
    }
    art.write_str("checks.csv", &checks_csv(&rec.checks))?;
    let summary = serde_json::json!({
        "scenario": config.scenario,
        "backend": config.backend,
        "perturbation_scale": rec.perturbation_scale,
        "initial_distance": rec.initial_distance,
        "final_distance": rec.samples.last().map(|s| s.distance),
        "tracking_error": rec.tracking_error,
        "max_forward_increment": rec.monotonicity.iter().map(|m| m.max_forward_increment()).collect::<Vec<_>>(),
        "rollup": rec.rollup(),
    });
    art.write_str("summary.json", &serde_json::to_string_pretty(&summary)?)?;
    art.write_str("summary.csv", &summary_csv(config, rec))?;
    Ok(())
}

/// Outcome of the identity suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySuite {
    pub reports: Vec<IdentityReport>,
    /// Reports that count toward the rollup (cubic bounds only when their
    /// hypotheses hold).
    pub gated: Vec<bool>,
}

impl IdentitySuite {
    pub fn rollup(&self) -> bool {
        self.reports.iter().zip(&self.gated).all(|(r, g)| !g || r.pass)
    }
}

/// Resolvent identity on random band-limited fields, peakon values, and the
/// identity chain on random sign-structured perturbations of `φ_c`.
pub fn identity_suite(config: &ScenarioConfig) -> Result<IdentitySuite> {
    let id = &config.identities;
    let g = make_grid(config)?;
    let c = config.profile.c;
    let mut reports = Vec::new();
    let mut gated = Vec::new();
    let rg = Grid::new(g.length(), id.resolvent_n)?;
    for k in 0..id.resolvent_fields {
        // modes <= n/8 keep the products resolved
        let f = random_band_limited(rg, id.resolvent_n / 8, config.seed.wrapping_add(k as u64));
        let r = resolvent_identity_residual(&f);
        reports.push(IdentityReport::with_scale(&format!("resolvent[{k}]"), r, 0.0, f.max_abs(), 1e-12));
        gated.push(true);
    }
    // the finest mollification the grid resolves
    let finest = ((0.5 / g.spacing()).floor() as u32).max(1);
    let peak = profiles::mollified_peakon(c, 0.0, &g, finest)?;
    let t = conserved(&peak);
    reports.push(IdentityReport::equality("peakon_E", t.e, c * c / 3.0, 1e-3));
    reports.push(IdentityReport::equality("peakon_F", t.f, 2.0 * c.powi(3) / 3.0, 1e-3));
    gated.extend([true, true]);
    for k in 0..id.samples {
        let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let u = identities::random_near_peakon(&g, c, id.amplitude, seed, config.profile.mollification)?;
        let xi = identities::locate_xi(&u);
        let tag = |s: &str| format!("{s}[{k}]");
        let mut q = identities::quadratic_identity_at(&u, c, xi, id.quadratic_tol);
        q.name = tag("quadratic");
        let mut gg = identities::gg2_report(&u, xi, id.gg_tol);
        gg.name = tag("gg2");
        let mut hh = identities::hh2_report(&u, xi, id.gg_tol);
        hh.name = tag("hh2");
        let mut im = identities::improvement_report(&u, xi, c, id.improvement_tol);
        im.name = tag("improvement");
        reports.extend([q, gg, hh, im]);
        gated.extend([true; 4]);
        let (gamma, bounds) = identities::distance_bounds(&u, c, xi);
        for mut b in bounds {
            b.name = tag(&b.name);
            reports.push(b);
            gated.push(true);
        }
        let cb = identities::cubic_bound(&u, c, gamma * gamma, &CubicThresholds::default());
        let mut r = cb.report;
        r.name = tag("cubic_bound");
        reports.push(r);
        gated.push(cb.hypotheses_hold);
    }
    Ok(IdentitySuite { reports, gated })
}

fn sweep_child(config: &ScenarioConfig, sweep: &SweepConfig, value: f64, index: usize) -> ScenarioConfig {
    let mut child = config.clone();
    child.scenario = sweep.base;
    child.sweep = None;
    child.output_dir = config.output_dir.join(format!("run_{index:03}"));
    match sweep.parameter {
        SweepParameter::Separation => {
            child.profile.separation = value;
            child.profile.shifts.clear();
        }
        SweepParameter::Delta => child.profile.delta = Some(value),
        SweepParameter::Speed => child.profile.c = value,
        SweepParameter::Seed => child.seed = value as u64,
        SweepParameter::Amplitude => child.identities.amplitude = value,
    }
    child
}

/// Runs `config` with one worker; see [`run_with_jobs`].
pub fn run(config: &ScenarioConfig) -> Result<RunManifest> {
    run_with_jobs(config, 1)
}

/// Runs the scenario, writes its artifacts and `manifest.json`, and returns
/// the manifest. Sweeps fan their runs out over `jobs` threads.
pub fn run_with_jobs(config: &ScenarioConfig, jobs: usize) -> Result<RunManifest> {
    let problems = validate(config);
    if !problems.is_empty() {
        return Err(DpError::Config(problems.join("; ")));
    }
    let start = Instant::now();
    let mut art = Artifacts::new(&config.output_dir)?;
    let mut checks = Vec::new();
    let mut blowup = None;
    let mut children = Vec::new();
    match config.scenario {
        Scenario::Identities => {
            let suite = identity_suite(config)?;
            let mut csv = Vec::new();
            identities::write_csv(&suite.reports, &mut csv)?;
            art.write("identities.csv", &csv)?;
            art.write_str("identities.gp", IDENTITIES_PLOT)?;
            let failed = suite.reports.iter().zip(&suite.gated).filter(|(r, g)| **g && !r.pass).count();
            checks.push(Check::at_most("identity_failures", failed as f64, 0.0));
            art.write_str("checks.csv", &checks_csv(&checks))?;
        }
        Scenario::Sweep => {
            let sweep = config.sweep.as_ref().expect("validated");
            let todo: Vec<(usize, f64)> = sweep.values.iter().copied().enumerate().collect();
            let results: Mutex<Vec<Option<ChildSummary>>> = Mutex::new(vec![None; todo.len()]);
            let next = AtomicUsize::new(0);
            std::thread::scope(|scope| {
                for _ in 0..jobs.max(1).min(todo.len()) {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        let Some(&(index, value)) = todo.get(i) else {
                            break;
                        };
                        let child = sweep_child(config, sweep, value, index);
                        let summary = match run_with_jobs(&child, 1) {
                            Ok(m) => ChildSummary {
                                value,
                                output_dir: child.output_dir.clone(),
                                rollup: m.rollup,
                                error: None,
                            },
                            Err(e) => ChildSummary {
                                value,
                                output_dir: child.output_dir.clone(),
                                rollup: false,
                                error: Some(e.to_string()),
                            },
                        };
                        results.lock().expect("no worker panicked")[index] = Some(summary);
                    });
                }
            });
            children = results.into_inner().expect("no worker panicked").into_iter().flatten().collect();
            let mut csv = String::from("index,value,rollup,output_dir\n");
            for (i, ch) in children.iter().enumerate() {
                let _ = writeln!(csv, "{i},{},{},{}", ch.value, ch.rollup, ch.output_dir.display());
            }
            art.write_str("sweep.csv", &csv)?;
            let failed = children.iter().filter(|c| !c.rollup).count();
            checks.push(Check::at_most("failed_runs", failed as f64, 0.0));
        }
        _ => {
            let rec = simulate(config)?;
            write_record(config, &rec, &mut art)?;
            blowup = rec.blowup.clone();
            checks = rec.checks;
        }
    }
    let rollup = blowup.is_none() && checks.iter().all(Check::ok);
    let manifest = RunManifest {
        tool: "dp".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        schemas: schemas(),
        files: art.files,
        checks,
        blowup,
        children,
        rollup,
    };
    fs::write(config.output_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Perturbation presets used by the documentation and the acceptance suite.
pub fn bump(amplitude: f64, center: f64, width: f64) -> Perturbation {
    Perturbation { shape: PerturbationShape::Bump, amplitude, center, width }
}

pub fn left_negative(amplitude: f64, center: f64, width: f64) -> Perturbation {
    Perturbation { shape: PerturbationShape::LeftNegativeMomentum, amplitude, center, width }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scenario: Scenario) -> ScenarioConfig {
        ScenarioConfig {
            scenario,
            grid: GridConfig { length: 40.0, n: 1024 },
            time: TimeConfig { t_final: 1.0, out_every: 10, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn validation_names_problems() {
        assert!(validate(&ScenarioConfig::default()).is_empty());
        let mut c = ScenarioConfig::default();
        c.grid.n = 1000;
        assert!(validate(&c).iter().any(|p| p.contains("grid.n")));
        let mut c = ScenarioConfig::default();
        c.time.t_final = -1.0;
        assert!(validate(&c).iter().any(|p| p.contains("time.T")));
        let mut c = ScenarioConfig { scenario: Scenario::Train, ..Default::default() };
        c.profile.shifts = vec![-5.0, 5.0];
        assert!(validate(&c).iter().any(|p| p.contains("separation")));
        let mut c = ScenarioConfig::default();
        c.profile.perturbations = vec![left_negative(0.1, 2.0, 0.5)];
        assert!(validate(&c).iter().any(|p| p.contains("sign structure")));
        let c = ScenarioConfig { scenario: Scenario::Sweep, ..Default::default() };
        assert!(!validate(&c).is_empty());
    }

    #[test]
    fn config_json_defaults_and_round_trip() {
        let c = ScenarioConfig::from_json(r#"{"scenario": "shock", "time": {"T": 2.0}}"#).unwrap();
        assert_eq!(c.scenario, Scenario::Shock);
        assert_eq!(c.time.t_final, 2.0);
        assert_eq!(c.grid, GridConfig::default());
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), c);
        assert!(ScenarioConfig::from_json(r#"{"scenario": "nope"}"#).is_err());
    }

    #[test]
    fn delta_rescaling_hits_target() {
        let mut c = quick(Scenario::SinglePeakon);
        c.profile.perturbations = vec![bump(0.3, 4.0, 1.0)];
        c.profile.mollification = 8;
        c.profile.delta = Some(1e-3);
        let s = perturbation_scale(&c).unwrap();
        let peaks = c.peaks();
        let d = initial_observable(&c, &peaks, s).unwrap().h_distance_sq(&peaks).sqrt();
        assert!((d - 1e-3).abs() < 1e-12, "{d}");
        c.backend = Backend::Spectral;
        // mollification alone sits ~0.09 away at n = 8
        assert!(perturbation_scale(&c).is_err());
        c.profile.delta = Some(0.2);
        let s = perturbation_scale(&c).unwrap();
        let d = initial_observable(&c, &peaks, s).unwrap().h_distance_sq(&peaks).sqrt();
        assert!((d - 0.2).abs() < 1e-9, "{d}");
    }

    #[test]
    fn particle_peakon_run_passes() {
        let mut c = quick(Scenario::SinglePeakon);
        c.profile.perturbations = vec![bump(0.1, 4.0, 1.0)];
        let rec = simulate(&c).unwrap();
        assert!(rec.rollup(), "{:?}", rec.checks);
        assert_eq!(rec.samples.len(), 11);
        let xi = rec.rows.last().unwrap().xi[0];
        assert!((xi - 1.0).abs() < 0.05, "{xi}");
    }

    #[test]
    fn run_writes_manifest_and_is_deterministic() {
        let dir = std::env::temp_dir().join(format!("dplab-exp-{}", std::process::id()));
        let mut c = quick(Scenario::AntipeakonPeakon);
        c.time.t_final = 0.5;
        c.diagnostics.snapshot_times = vec![0.0, 0.5];
        c.output_dir = dir.join("a");
        let m1 = run(&c).unwrap();
        c.output_dir = dir.join("b");
        let m2 = run(&c).unwrap();
        assert!(m1.rollup, "{:?}", m1.checks);
        let h1: Vec<_> = m1.files.iter().map(|f| (&f.path, &f.sha256)).collect();
        let h2: Vec<_> = m2.files.iter().map(|f| (&f.path, &f.sha256)).collect();
        assert_eq!(h1, h2);
        assert!(m1.files.iter().any(|f| f.path.starts_with("snapshots/")));
        assert!(dir.join("a/manifest.json").exists());
        let _ = fs::remove_dir_all(&dir);
    }
}
