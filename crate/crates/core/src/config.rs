//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "plant": { "preset": "oscillator", "dt": 0.05, "method": "euler" },
//!   "x0": [2.0, -1.0],
//!   "controller": { "mode": "irhc", "itec": true, "beta": 0.8, "C": 4.8, "N": 4, "max_steps": 400 },
//!   "input_set": { "kind": "unbounded" },
//!   "solver": { "feasibility_tol": 1e-6 },
//!   "certify": { "directions": 32, "radii": 3, "seed": 0 }
//! }
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::CertifyOptions;
use crate::baselines::{ProportionalItecRhc, StaticFeedback, TraditionalRhc};
use crate::controller::{ControllerState, IrhcController, ItecSpec, Mode, Policy, RunOptions};
use crate::error::{Error, Result};
use crate::plant::{DiscreteSystem, DiscretizerConfig, Method, Plant, ScalarLinear};
use crate::trajopt::{InputSet, Solver, SolverConfig};

fn default_dt() -> f64 {
    0.05
}

fn default_method() -> Method {
    Method::Euler
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Oscillator {
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default = "default_method")]
        method: Method,
    },
    ScalarLinear { a: f64, b: f64 },
}

impl PlantConfig {
    pub fn build(&self) -> Result<Plant> {
        match *self {
            PlantConfig::Oscillator { dt, method } => Plant::oscillator(DiscretizerConfig::new(dt, method)?),
            PlantConfig::ScalarLinear { a, b } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::config("scalar plant coefficients must be finite"));
                }
                Ok(Plant::ScalarLinear(ScalarLinear::new(a, b)))
            }
        }
    }

    /// Same plant with a different sampling period (oscillator only).
    pub fn with_dt(&self, dt: f64) -> Self {
        match *self {
            PlantConfig::Oscillator { method, .. } => PlantConfig::Oscillator { dt, method },
            ref other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Irhc,
    Rhc,
    Proportional,
    Feedback,
}

fn yes() -> bool {
    true
}

fn default_max_steps() -> usize {
    400
}

fn default_eps() -> f64 {
    1e-3
}

fn default_divergence() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControllerKind,
    /// IRHC only: `false` drops the energy windows and contracts at every push.
    #[serde(default = "yes")]
    pub itec: bool,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Energy budget per window. Omitted means unlimited.
    #[serde(rename = "C", default)]
    pub budget: Option<f64>,
    #[serde(rename = "N", default)]
    pub interval: Option<usize>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_eps")]
    pub convergence_eps: f64,
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
    /// RHC only; defaults to `2N`.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Feedback only; rows of `K` in `u = -K x`. Defaults to `[[0, 3]]`.
    #[serde(default)]
    pub gain: Option<Vec<Vec<f64>>>,
}

impl ControllerConfig {
    pub fn run_options(&self) -> Result<RunOptions> {
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        if !(self.convergence_eps >= 0.0) || !(self.divergence_factor > 0.0) {
            return Err(Error::config("convergence_eps must be >= 0 and divergence_factor > 0"));
        }
        Ok(RunOptions {
            max_steps: self.max_steps,
            convergence_eps: self.convergence_eps,
            divergence_factor: self.divergence_factor,
        })
    }

    pub fn interval(&self) -> Result<usize> {
        match self.interval {
            Some(n) if n >= 1 => Ok(n),
            _ => Err(Error::config("controller needs an interval length N >= 1")),
        }
    }

    pub fn beta(&self) -> Result<f64> {
        let beta = self.beta.ok_or_else(|| Error::config("controller needs beta"))?;
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::config(format!("beta must lie in [0, 1), got {beta}")));
        }
        Ok(beta)
    }

    pub fn itec_spec(&self) -> Result<ItecSpec> {
        ItecSpec::new(self.budget.unwrap_or(f64::INFINITY), self.interval()?)
    }

    pub fn build(&self, x0: &[f64], solver: Solver, input_set: InputSet) -> Result<Box<dyn Policy>> {
        self.run_options()?;
        Ok(match self.mode {
            ControllerKind::Irhc => {
                let mode = if self.itec { Mode::Itec } else { Mode::NonItec };
                let state = ControllerState::init(self.beta()?, self.itec_spec()?, x0, mode)?;
                Box::new(IrhcController::new(state, solver, input_set))
            }
            ControllerKind::Rhc => {
                let horizon = match self.horizon {
                    Some(h) => h,
                    None => 2 * self.interval()?,
                };
                Box::new(TraditionalRhc::new(horizon, solver, input_set)?)
            }
            ControllerKind::Proportional => {
                let budget = self
                    .budget
                    .ok_or_else(|| Error::config("proportional controller needs a budget C"))?;
                Box::new(ProportionalItecRhc::new(
                    ItecSpec::new(budget, self.interval()?)?,
                    solver,
                    input_set,
                ))
            }
            ControllerKind::Feedback => Box::new(match &self.gain {
                Some(g) => StaticFeedback::new(g.clone())?,
                None => StaticFeedback::oscillator(),
            }),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Explicit summands of the Gamma tail before the closed-form remainder.
    pub tail_terms: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { tail_terms: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub x0: Vec<f64>,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub input_set: InputSet,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub certify: CertifyOptions,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<Plant> {
        let plant = self.plant.build()?;
        Error::check_dim("x0", plant.state_dim(), self.x0.len())?;
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("x0 must be finite"));
        }
        self.input_set.validate(plant.input_dim())?;
        self.solver.validate()?;
        self.controller.run_options()?;
        Ok(plant)
    }

    /// Override every seed in the file.
    pub fn reseed(&mut self, seed: u64) {
        self.solver.seed = seed;
        self.certify.seed = seed;
    }
}

/// Which IRHC variant fills the IRHC rows of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table1Irhc {
    /// Contraction at every push, no energy windows.
    NonItec,
    /// The ITEC contraction schedule with an unlimited budget.
    ItecSchedule,
}

fn default_dts() -> Vec<f64> {
    vec![0.05, 0.025]
}

fn default_irhc_variant() -> Table1Irhc {
    Table1Irhc::ItecSchedule
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    pub plant: PlantConfig,
    pub x0: Vec<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_eps")]
    pub convergence_eps: f64,
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
    #[serde(default)]
    pub input_set: InputSet,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_irhc_variant")]
    pub irhc: Table1Irhc,
    /// Sampling periods for the sensitivity sweep; the step count scales to keep the horizon in time fixed.
    #[serde(default = "default_dts")]
    pub sensitivity_dts: Vec<f64>,
}

impl Table1Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let plant = self.plant.build()?;
        Error::check_dim("x0", plant.state_dim(), self.x0.len())?;
        self.input_set.validate(plant.input_dim())?;
        self.solver.validate()?;
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        for &dt in &self.sensitivity_dts {
            self.plant.with_dt(dt).build()?;
        }
        Ok(())
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ITEC: &str = r#"{
        "plant": { "preset": "oscillator" },
        "x0": [2.0, -1.0],
        "controller": { "mode": "irhc", "beta": 0.8, "C": 4.8, "N": 4 }
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(ITEC).unwrap();
        assert_eq!(
            cfg.plant,
            PlantConfig::Oscillator {
                dt: 0.05,
                method: Method::Euler
            }
        );
        assert!(cfg.controller.itec);
        assert_eq!(cfg.controller.max_steps, 400);
        assert_eq!(cfg.input_set, InputSet::Unbounded);
        assert_eq!(cfg.certify.directions, 32);
        cfg.validate().unwrap();
    }

    #[test]
    fn zero_steps_rejected() {
        let text = ITEC.replace("\"N\": 4", "\"N\": 4, \"max_steps\": 0");
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = ITEC.replace("\"N\": 4", "\"N\": 4, \"horizn\": 3");
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn wrong_state_dimension_rejected() {
        let text = ITEC.replace("[2.0, -1.0]", "[2.0]");
        let cfg: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn controller_requirements() {
        let mut cfg: ExperimentConfig = serde_json::from_str(ITEC).unwrap();
        cfg.controller.beta = Some(1.0);
        assert!(cfg.controller.build(&cfg.x0, Solver::default(), InputSet::Unbounded).is_err());
        cfg.controller.beta = None;
        assert!(cfg.controller.build(&cfg.x0, Solver::default(), InputSet::Unbounded).is_err());
        cfg.controller.mode = ControllerKind::Rhc;
        let p = cfg.controller.build(&cfg.x0, Solver::default(), InputSet::Unbounded).unwrap();
        assert_eq!(p.name(), "rhc");
        cfg.controller.mode = ControllerKind::Feedback;
        let p = cfg.controller.build(&cfg.x0, Solver::default(), InputSet::Unbounded).unwrap();
        assert_eq!(p.name(), "feedback");
    }

    #[test]
    fn scalar_preset() {
        let p: PlantConfig = serde_json::from_str(r#"{"preset": "scalar_linear", "a": 1.1, "b": 1.0}"#).unwrap();
        assert_eq!(p.build().unwrap().name(), "scalar_linear");
    }
}
