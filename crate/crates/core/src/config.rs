//! Run configuration: one JSON document describing plant, design, delays,
//! search, simulation and solver choices.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gains::{design_gains, GainSet};
use crate::lmi::search::{r_grid, Probe, SearchRegistry, DEFAULT_MAX_R, DEFAULT_MIN_N};
use crate::lmi::{CheckSettings, DelayBounds, FamilyParams, FamilyRegistry, DEFAULT_STRICTNESS, DEFAULT_VARIABLE_BOUND};
use crate::modal::{select_n0, InitialCondition, ModalModel, OutputWeightSpec};
use crate::sdp::{OracleRegistry, SolverSettings, DEFAULT_ORACLE};
use crate::sim::{ControllerRegistry, DelaySpec, ShapeRegistry, SimConfig, DEFAULT_HORIZON, DEFAULT_STEP, DEFAULT_TRUNCATION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub q: f64,
    pub weight: OutputWeightSpec,
    pub initial: InitialCondition,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self { q: 3.0, weight: OutputWeightSpec::Indicator { a: 0.3, b: 0.9 }, initial: InitialCondition::bump() }
    }
}

/// Gains pinned by the user or synthesised from the reduced LMIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainChoice {
    Pinned { k0: Vec<f64>, l0: Vec<f64> },
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Target decay rate `δ`.
    pub delta: f64,
    /// `δ₀` for the delayed families when no grid is given.
    pub delta0: f64,
    /// Candidate `δ₀` values, tried in order.
    pub delta0_grid: Vec<f64>,
    /// Overrides the automatic `N₀`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<usize>,
    pub gains: GainChoice,
}

/// `δ₀` candidates used when a config does not list its own.
pub const DEFAULT_DELTA0_GRID: [f64; 12] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0, 8.0];

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            delta: 0.0,
            delta0: 1.0,
            delta0_grid: DEFAULT_DELTA0_GRID.to_vec(),
            n0: None,
            gains: GainChoice::Pinned { k0: vec![-5.5], l0: vec![5.5] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// 1 to 4.
    pub theorem: u8,
    /// Observer dimension for single checks and simulations.
    pub n: usize,
    pub n_max: usize,
    pub r_grid: RGrid,
    pub min_n: String,
    pub max_r: String,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            theorem: 2,
            n: 30,
            n_max: 30,
            r_grid: RGrid { start: 0.01, stop: 0.6, step: 0.01 },
            min_n: DEFAULT_MIN_N.into(),
            max_r: DEFAULT_MAX_R.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Simulated mode count `M`.
    pub truncation: usize,
    pub step: f64,
    pub horizon: f64,
    pub controller: String,
    pub record_every: usize,
    /// Decay-fit window; defaults to the second half of the horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            truncation: DEFAULT_TRUNCATION,
            step: DEFAULT_STEP,
            horizon: DEFAULT_HORIZON,
            controller: "static".into(),
            record_every: 100,
            fit_window: None,
        }
    }
}

impl SimSection {
    pub fn window(&self) -> (f64, f64) {
        self.fit_window.unwrap_or((0.5 * self.horizon, self.horizon))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub oracle: String,
    /// Relative margin for strict inequalities.
    pub strictness: f64,
    /// Box bound on every decision variable.
    pub bound: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Seconds per SDP solve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            oracle: DEFAULT_ORACLE.into(),
            strictness: DEFAULT_STRICTNESS,
            bound: DEFAULT_VARIABLE_BOUND,
            max_iterations: s.max_iterations,
            tolerance: s.tolerance,
            time_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn check_settings(&self) -> CheckSettings {
        CheckSettings {
            oracle: self.oracle.clone(),
            bound: self.bound,
            solver: SolverSettings {
                max_iterations: self.max_iterations,
                tolerance: self.tolerance,
                optimize: false,
                time_limit: self.time_limit,
            },
        }
    }
}

fn default_delays() -> DelaySpec {
    DelaySpec::oscillating(0.14, 0.01, 0.01, 120.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default = "default_delays")]
    pub delays: DelaySpec,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plant: PlantConfig::default(),
            design: DesignConfig::default(),
            delays: default_delays(),
            search: SearchConfig::default(),
            sim: SimSection::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// Built-in configurations for the reference example.
pub const PRESETS: [(&str, &str); 5] = [
    ("example", include_str!("../presets/example.json")),
    ("delay-free", include_str!("../presets/delay_free.json")),
    ("sim-static", include_str!("../presets/sim_static.json")),
    ("sim-unstable", include_str!("../presets/sim_unstable.json")),
    ("sim-predictor", include_str!("../presets/sim_predictor.json")),
];

impl RunConfig {
    /// Parse JSON; errors carry the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Validation(format!("config field '{}': {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownStrategy { kind: "preset", name: name.to_string() })?;
        Self::from_json(text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !self.plant.q.is_finite() {
            return bad(format!("plant.q must be finite, got {}", self.plant.q));
        }
        self.plant.weight.validate()?;
        let d = &self.design;
        if !(d.delta >= 0.0 && d.delta.is_finite()) {
            return bad(format!("design.delta must be finite and nonnegative, got {}", d.delta));
        }
        if !(d.delta0 > 0.0 && d.delta0.is_finite()) || d.delta0_grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("design.delta0 and design.delta0_grid entries must be positive".into());
        }
        if let GainChoice::Pinned { k0, l0 } = &d.gains {
            let n0 = self.n0()?;
            if k0.len() != n0 + 1 || l0.len() != n0 + 1 {
                return bad(format!("pinned gains need {} entries each for N0={n0}", n0 + 1));
            }
            if k0.iter().chain(l0).any(|v| !v.is_finite()) {
                return bad("pinned gains must be finite".into());
            }
        }
        self.delays.validate()?;
        let s = &self.search;
        if !(1..=4).contains(&s.theorem) {
            return bad(format!("search.theorem must be 1..4, got {}", s.theorem));
        }
        let n0 = self.n0()?;
        if s.n <= n0 || s.n_max <= n0 {
            return bad(format!("search.n and search.n_max must exceed N0={n0}"));
        }
        r_grid(s.r_grid.start, s.r_grid.stop, s.r_grid.step)?;
        let reg = SearchRegistry::with_defaults();
        reg.min_n(&s.min_n)?;
        reg.max_r(&s.max_r)?;
        let sim = &self.sim;
        if sim.truncation < s.n {
            return bad(format!("sim.truncation {} below search.n {}", sim.truncation, s.n));
        }
        ControllerRegistry::with_defaults().get(&sim.controller)?;
        if let Some((a, b)) = sim.fit_window {
            if !(0.0 <= a && a < b) {
                return bad(format!("sim.fit_window ({a}, {b}) is empty"));
            }
        }
        let sv = &self.solver;
        if !(sv.strictness >= 0.0 && sv.strictness.is_finite()) {
            return bad(format!("solver.strictness must be nonnegative, got {}", sv.strictness));
        }
        if !(sv.bound > 0.0) || !(sv.tolerance > 0.0) || sv.max_iterations == 0 {
            return bad("solver.bound, solver.tolerance and solver.max_iterations must be positive".into());
        }
        if sv.time_limit.is_some_and(|t| !(t > 0.0)) {
            return bad("solver.time_limit must be positive".into());
        }
        OracleRegistry::with_defaults().get(&sv.oracle)?;
        Ok(())
    }

    /// `N₀` from `select_n0`, unless overridden.
    pub fn auto_n0(&self) -> Result<usize> {
        select_n0(self.plant.q, self.design.delta)
    }

    pub fn n0(&self) -> Result<usize> {
        match self.design.n0 {
            Some(n0) => Ok(n0),
            None => self.auto_n0(),
        }
    }

    /// Non-fatal inconsistencies.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let (Some(over), Ok(auto)) = (self.design.n0, self.auto_n0()) {
            if over != auto {
                out.push(format!("design.n0={over} differs from the automatic choice {auto}"));
            }
        }
        out
    }

    /// Model for the LMI side, wide enough for every `N` searched.
    pub fn lmi_model(&self) -> Result<ModalModel> {
        let m = self.search.n.max(self.search.n_max).max(self.n0()?) + 1;
        ModalModel::new(self.plant.q, &self.plant.weight, m)
    }

    pub fn sim_model(&self) -> Result<ModalModel> {
        ModalModel::new(self.plant.q, &self.plant.weight, self.sim.truncation)
    }

    pub fn gains(&self, model: &ModalModel, oracles: &OracleRegistry) -> Result<GainSet> {
        let n0 = self.n0()?;
        match &self.design.gains {
            GainChoice::Pinned { k0, l0 } => GainSet::pinned(model, n0, k0.clone(), l0.clone(), self.design.delta),
            GainChoice::Auto => design_gains(model, n0, self.design.delta, oracles.get(&self.solver.oracle)?.as_ref()),
        }
    }

    pub fn family_params(&self) -> FamilyParams {
        let d = &self.delays;
        let mut p = FamilyParams::delayed(
            self.design.delta,
            self.design.delta0,
            DelayBounds { r: d.r, theta_m: d.theta_m, tau_m: d.tau_max },
        );
        p.strictness = self.solver.strictness;
        p
    }

    /// Feasibility probe for the configured theorem (or `theorem` if given).
    pub fn probe(&self, theorem: Option<u8>, oracles: &OracleRegistry, families: &FamilyRegistry) -> Result<Probe> {
        let model = self.lmi_model()?;
        let gains = self.gains(&model, oracles)?;
        let th = theorem.unwrap_or(self.search.theorem);
        if !(1..=4).contains(&th) {
            return Err(Error::Validation(format!("theorem must be 1..4, got {th}")));
        }
        let family = families.get(&th.to_string())?;
        let mut params = self.family_params();
        if !family.is_delayed() {
            params = FamilyParams { strictness: params.strictness, ..FamilyParams::delay_free(self.design.delta) };
        } else {
            params.delays.validate()?;
        }
        Ok(Probe {
            family,
            model,
            gains,
            params,
            delta0_grid: self.design.delta0_grid.clone(),
            oracle: oracles.get(&self.solver.oracle)?,
            settings: self.solver.check_settings(),
        })
    }

    pub fn r_values(&self) -> Result<Vec<f64>> {
        let g = &self.search.r_grid;
        r_grid(g.start, g.stop, g.step)
    }

    pub fn sim_config(&self, oracles: &OracleRegistry) -> Result<SimConfig> {
        let model = self.sim_model()?;
        let gains = self.gains(&model, oracles)?;
        let cfg = SimConfig {
            initial: self.plant.initial.project(model.truncation),
            model,
            gains,
            n: self.search.n,
            delays: self.delays.clone(),
            controller: self.sim.controller.clone(),
            step: self.sim.step,
            horizon: self.sim.horizon,
            record_every: self.sim.record_every,
        };
        cfg.validate()?;
        cfg.delays.resolve(&ShapeRegistry::with_defaults())?;
        Ok(cfg)
    }
}

/// Shared handle on the default registries.
#[derive(Clone)]
pub struct Registries {
    pub oracles: Arc<OracleRegistry>,
    pub families: Arc<FamilyRegistry>,
    pub searches: Arc<SearchRegistry>,
}

impl Default for Registries {
    fn default() -> Self {
        Self {
            oracles: Arc::new(OracleRegistry::with_defaults()),
            families: Arc::new(FamilyRegistry::with_defaults()),
            searches: Arc::new(SearchRegistry::with_defaults()),
        }
    }
}
