//! TOML experiment configuration.
//!
//! ```toml
//! carrier_hz = 28e9
//! tx_power_dbm = 20.0
//! noise_power_dbm = -111.0
//! training_slots = 32
//!
//! [scene]
//! ue_position = [0.0, 0.0, 0.0]
//! [scene.bs]
//! position = [1.0, 1.0, 3.0]
//! plane = "xy"
//! elements = [10, 10]
//! [[scene.ris]]
//! position = [0.5, 1.5, 2.9]
//! plane = "xz"
//! elements = [4, 4]
//!
//! [experiment]
//! sweep_variable = "tx_power_dbm"   # or T, N, M, ris_shift_m
//! values = [0, 10, 20]
//! trials = 100
//! seed = 1
//! estimator = "ls"                  # or "ml"
//! out = "results.csv"
//!
//! [solver]
//! mu_scale = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::anm::SolverOptions;
use crate::error::{Error, Result};
use crate::geometry::{ArrayPlane, Position3, RadioParams, UpaLayout};
use crate::sounding::{RisConfig, SceneConfig};

/// Default noise power: thermal noise over 1 MHz with a 3 dB noise figure.
pub const DEFAULT_NOISE_DBM: f64 = -111.0;

/// Watts from dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "tx_power_dbm")]
    TxPowerDbm,
    #[serde(rename = "T")]
    TrainingSlots,
    #[serde(rename = "N")]
    BsAntennas,
    #[serde(rename = "M")]
    RisCount,
    #[serde(rename = "ris_shift_m")]
    RisShift,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::TxPowerDbm => "tx_power_dbm",
            SweepVariable::TrainingSlots => "T",
            SweepVariable::BsAntennas => "N",
            SweepVariable::RisCount => "M",
            SweepVariable::RisShift => "ris_shift_m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Ls,
    Ml,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" => Ok(Estimator::Ls),
            "ml" => Ok(Estimator::Ml),
            other => Err(Error::Config(format!(
                "unknown estimator '{other}' (expected ls or ml)"
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    position: [f64; 3],
    plane: ArrayPlane,
    elements: [usize; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    ue_position: [f64; 3],
    bs: RawArray,
    ris: Vec<RawArray>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    sweep_variable: SweepVariable,
    values: Vec<f64>,
    #[serde(default = "one")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    estimator: Estimator,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    mu_scale: Option<f64>,
    max_iterations: Option<usize>,
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
    balance_warn_ratio: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    carrier_hz: f64,
    tx_power_dbm: f64,
    #[serde(default = "default_noise")]
    noise_power_dbm: f64,
    training_slots: usize,
    scene: RawScene,
    experiment: RawExperiment,
    #[serde(default)]
    solver: RawSolver,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_DBM
}

/// Validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Base scene; sweep values are applied on top of it.
    pub scene: SceneConfig<f64>,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub sweep_variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub solver: SolverOptions<f64>,
    /// Constant `c0` of the regularization weight.
    pub mu_scale: f64,
    /// Warn when the ZF combiner norms spread more than this.
    pub balance_warn_ratio: f64,
}

fn position(p: [f64; 3]) -> Position3<f64> {
    Position3::new(p[0], p[1], p[2])
}

fn layout(a: &RawArray, what: &str) -> Result<UpaLayout> {
    UpaLayout::new(a.plane, a.elements[0], a.elements[1]).map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Inner text of a configuration error, full display otherwise.
fn message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let radio = RadioParams::new(
            raw.carrier_hz,
            dbm_to_watts(raw.tx_power_dbm),
            dbm_to_watts(raw.noise_power_dbm),
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let ris = raw
            .scene
            .ris
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(RisConfig {
                    position: position(r.position),
                    layout: layout(r, &format!("RIS {i}"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = SceneConfig {
            bs_position: position(raw.scene.bs.position),
            bs_layout: layout(&raw.scene.bs, "BS")?,
            ris,
            ue_position: position(raw.scene.ue_position),
            radio,
            training_slots: raw.training_slots,
        };
        let defaults = SolverOptions::<f64>::default();
        let solver = SolverOptions {
            max_iterations: raw.solver.max_iterations.unwrap_or(defaults.max_iterations),
            abs_tol: raw.solver.abs_tol.unwrap_or(defaults.abs_tol),
            rel_tol: raw.solver.rel_tol.unwrap_or(defaults.rel_tol),
            ..defaults
        };
        let cfg = Self {
            scene,
            tx_power_dbm: raw.tx_power_dbm,
            noise_power_dbm: raw.noise_power_dbm,
            sweep_variable: raw.experiment.sweep_variable,
            values: raw.experiment.values,
            trials: raw.experiment.trials,
            seed: raw.experiment.seed,
            estimator: raw.experiment.estimator,
            out: raw.experiment.out,
            threads: raw.experiment.threads,
            solver,
            mu_scale: raw.solver.mu_scale.unwrap_or(1.0),
            balance_warn_ratio: raw.solver.balance_warn_ratio.unwrap_or(100.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Check the base scene and every swept variant.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if !(self.mu_scale >= 0.0) || !self.mu_scale.is_finite() {
            return Err(Error::Config("mu_scale must be finite and non-negative".into()));
        }
        if !(self.balance_warn_ratio >= 1.0) {
            return Err(Error::Config("balance_warn_ratio must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.solver.validate().map_err(|e| Error::Config(message(e)))?;
        if self.sweep_variable != SweepVariable::RisCount {
            self.scene.validate().map_err(|e| Error::Config(message(e)))?;
        }
        for &v in &self.values {
            self.scene_for(v)?
                .validate()
                .map_err(|e| Error::Config(format!("{} = {v}: {}", self.sweep_variable.name(), message(e))))?;
        }
        Ok(())
    }

    /// Base scene with one sweep value applied.
    pub fn scene_for(&self, value: f64) -> Result<SceneConfig<f64>> {
        let name = self.sweep_variable.name();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{name} must be a positive integer, got {v}")))
            }
        };
        let mut scene = self.scene.clone();
        match self.sweep_variable {
            SweepVariable::TxPowerDbm => {
                if !value.is_finite() {
                    return Err(Error::Config("power must be finite".into()));
                }
                scene.radio = scene.radio.with_tx_power(dbm_to_watts(value));
            }
            SweepVariable::TrainingSlots => scene.training_slots = as_count(value)?,
            SweepVariable::BsAntennas => {
                let n = as_count(value)?;
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(Error::Config(format!("N = {n} is not a perfect square")));
                }
                scene.bs_layout = UpaLayout::new(scene.bs_layout.plane, side, side)?;
            }
            SweepVariable::RisCount => {
                let m = as_count(value)?;
                if m > scene.ris.len() {
                    return Err(Error::Config(format!(
                        "M = {m} exceeds the {} RISs listed in the scene",
                        scene.ris.len()
                    )));
                }
                scene.ris.truncate(m);
            }
            SweepVariable::RisShift => {
                if !value.is_finite() {
                    return Err(Error::Config("RIS shift must be finite".into()));
                }
                scene = scene.with_ris_shift(value);
            }
        }
        Ok(scene)
    }
}
