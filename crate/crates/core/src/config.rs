//! Run configuration: per-scenario defaults, TOML overrides and validation.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackhole::{BhSettings, SearchRegion};
use crate::codesign::{EpochSettings, SimulationSettings};
use crate::cost::CostWeights;
use crate::encoding::EncodingMode;
use crate::integrate::Tolerances;
use crate::lyapunov::StabilitySpec;
use crate::plants::{ring_laplacian, MotorParams, MotorReferences};
use crate::quantum::QiteSettings;
use crate::scenario::{FirstOrderConsensus, InductionMotorDrive, Plant, Scenario, SecondOrderConsensus};
use crate::surrogate::DEFAULT_RIDGE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },
}

fn invalid<T>(key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Validation {
        key: key.to_string(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Consensus1,
    Consensus2,
    Motor,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Consensus1 => "consensus1",
            Self::Consensus2 => "consensus2",
            Self::Motor => "motor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "consensus1" => Some(Self::Consensus1),
            "consensus2" => Some(Self::Consensus2),
            "motor" => Some(Self::Motor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervals {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub mode: EncodingKind,
    /// Bits per parameter in fixed mode.
    pub bits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub factor: usize,
    pub minimum: usize,
    pub ridge: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DragConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorConfig {
    /// Plant magnetizing inductance as a fraction of the nominal value.
    pub plant_lm_scale: f64,
    pub nominal: MotorParams,
    pub references: MotorReferences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub redesign_interval: f64,
    pub t_final: f64,
    pub horizon: f64,
    pub n_grid: usize,
    pub log_grid_factor: usize,
    pub top_k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_threshold: Option<f64>,
    pub x0: Vec<f64>,
    pub baseline_design: Vec<f64>,
    pub intervals: Intervals,
    pub tolerances: ToleranceConfig,
    pub weights: CostWeights,
    pub black_hole: BhSettings,
    pub encoding: EncodingConfig,
    pub surrogate: SurrogateConfig,
    pub qite: QiteSettings,
    pub stability: StabilitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag: Option<DragConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motor: Option<MotorConfig>,
}

impl RunConfig {
    pub fn defaults(kind: ScenarioKind) -> Self {
        let consensus = |lower: Vec<f64>, upper: Vec<f64>| Self {
            scenario: kind,
            seed: 42,
            output_dir: None,
            redesign_interval: 0.25,
            t_final: 10.0,
            horizon: 0.25,
            n_grid: 150,
            log_grid_factor: 10,
            top_k: 32,
            stop_threshold: Some(1e-8),
            x0: vec![2.0, -2.5, 3.8, -3.2, 0.3],
            baseline_design: vec![2.0, 1.5, 5.0, 1.0, 1.0],
            intervals: Intervals { lower, upper },
            tolerances: ToleranceConfig {
                rtol: 1e-6,
                atol: 1e-8,
            },
            weights: CostWeights::consensus(),
            black_hole: BhSettings {
                population: 20,
                max_iters: 100,
                freeze_thresholds: vec![5.0; 5],
            },
            encoding: EncodingConfig {
                mode: EncodingKind::Adaptive,
                bits: 3,
            },
            surrogate: SurrogateConfig {
                factor: 4,
                minimum: 64,
                ridge: DEFAULT_RIDGE,
            },
            qite: QiteSettings::new(3.0, 60),
            stability: StabilitySpec::Asymptotic,
            drag: None,
            motor: None,
        };
        match kind {
            ScenarioKind::Consensus1 => consensus(vec![0.0; 5], vec![50.0, 2.0, 50.0, 25.0, 25.0]),
            ScenarioKind::Consensus2 => Self {
                redesign_interval: 0.5,
                t_final: 50.0,
                stop_threshold: Some(1e-4),
                x0: vec![5.0, -4.0, 3.0, -2.0, 1.0, 0.0, 1.5, -1.0, 0.5, -0.5],
                baseline_design: vec![5.0, 5.0, 1.0, 1.0, 1.0],
                drag: Some(DragConfig { a: 0.5, b: 0.05 }),
                ..consensus(vec![0.0; 5], vec![50.0, 50.0, 50.0, 40.0, 20.0])
            },
            ScenarioKind::Motor => Self {
                redesign_interval: 0.2,
                t_final: 2.2,
                horizon: 0.1,
                n_grid: 120,
                stop_threshold: None,
                x0: vec![0.0, 0.0, 0.9, 0.0, 0.0],
                baseline_design: vec![100.0, 100.0, 1.0, 1.0],
                intervals: Intervals {
                    lower: vec![-100.0, -100.0, 0.01, 0.01],
                    upper: vec![1000.0, 1000.0, 100.0, 100.0],
                },
                weights: CostWeights::motor(),
                black_hole: BhSettings {
                    population: 20,
                    max_iters: 100,
                    freeze_thresholds: vec![25.0; 4],
                },
                encoding: EncodingConfig {
                    mode: EncodingKind::Fixed,
                    bits: 3,
                },
                qite: QiteSettings::new(2.0, 60),
                motor: Some(MotorConfig {
                    plant_lm_scale: 0.5,
                    nominal: MotorParams::nominal(),
                    references: MotorReferences::default(),
                }),
                ..consensus(vec![], vec![])
            },
        }
    }

    pub fn encoding_mode(&self) -> EncodingMode {
        match self.encoding.mode {
            EncodingKind::Adaptive => EncodingMode::Adaptive,
            EncodingKind::Fixed => EncodingMode::Fixed(self.encoding.bits),
        }
    }

    fn plant(&self) -> Result<Arc<dyn Plant>, ConfigError> {
        Ok(match self.scenario {
            ScenarioKind::Consensus1 => {
                let graph = ring_laplacian(self.x0.len()).or_else(|e| invalid("x0", e.to_string()))?;
                Arc::new(FirstOrderConsensus { graph })
            }
            ScenarioKind::Consensus2 => {
                if self.x0.len() % 2 != 0 {
                    return invalid("x0", "second-order state stacks positions and velocities");
                }
                let graph =
                    ring_laplacian(self.x0.len() / 2).or_else(|e| invalid("x0", e.to_string()))?;
                let drag = self.drag.unwrap_or(DragConfig { a: 0.5, b: 0.05 });
                Arc::new(SecondOrderConsensus {
                    graph,
                    drag_a: drag.a,
                    drag_b: drag.b,
                })
            }
            ScenarioKind::Motor => {
                let Some(m) = &self.motor else {
                    return invalid("motor", "motor scenario needs a [motor] section");
                };
                let plant = m.nominal.with_lm_scale(m.plant_lm_scale);
                plant.validate().or_else(|e| invalid("motor.plant_lm_scale", e.to_string()))?;
                Arc::new(InductionMotorDrive::new(plant, m.nominal, m.references.clone()))
            }
        })
    }

    pub fn build_scenario(&self) -> Result<Scenario, ConfigError> {
        let region = SearchRegion::new(self.intervals.lower.clone(), self.intervals.upper.clone())
            .or_else(|e| invalid("intervals", e.to_string()))?;
        let mut sc = Scenario::new(self.plant()?, self.stability, region);
        sc.tolerances = Tolerances {
            rtol: self.tolerances.rtol,
            atol: self.tolerances.atol,
        };
        Ok(sc)
    }

    pub fn simulation_settings(&self) -> SimulationSettings {
        SimulationSettings {
            epoch: EpochSettings {
                horizon: self.horizon,
                n_grid: self.n_grid,
                weights: self.weights.clone(),
                bh: self.black_hole.clone(),
                encoding: self.encoding_mode(),
                training_factor: self.surrogate.factor,
                training_minimum: self.surrogate.minimum,
                ridge: self.surrogate.ridge,
                qite: self.qite,
                top_k: self.top_k,
            },
            x0: self.x0.clone(),
            redesign_interval: self.redesign_interval,
            t_final: self.t_final,
            stop_threshold: self.stop_threshold,
            seed: self.seed,
            log_grid_factor: self.log_grid_factor,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                invalid(key, format!("must be positive, got {v}"))
            }
        };
        positive("redesign_interval", self.redesign_interval)?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return invalid("t_final", "must be non-negative");
        }
        positive("horizon", self.horizon)?;
        if self.n_grid < 2 {
            return invalid("n_grid", "must be at least 2");
        }
        if self.log_grid_factor == 0 {
            return invalid("log_grid_factor", "must be at least 1");
        }
        if self.top_k == 0 {
            return invalid("top_k", "must be at least 1");
        }
        if let Some(s) = self.stop_threshold {
            positive("stop_threshold", s)?;
        }
        positive("tolerances.rtol", self.tolerances.rtol)?;
        positive("tolerances.atol", self.tolerances.atol)?;

        let plant = self.plant()?;
        let n_p = plant.parameter_names().len();
        if self.x0.len() != plant.state_dim() || self.x0.iter().any(|v| !v.is_finite()) {
            return invalid("x0", format!("expected {} finite entries", plant.state_dim()));
        }
        if self.intervals.lower.len() != n_p || self.intervals.upper.len() != n_p {
            return invalid("intervals", format!("expected {n_p} bounds per side"));
        }
        if let Err(e) = SearchRegion::new(self.intervals.lower.clone(), self.intervals.upper.clone()) {
            return invalid("intervals", e.to_string());
        }
        if self.baseline_design.len() != n_p {
            return invalid("baseline_design", format!("expected {n_p} entries"));
        }
        let n_err = match self.scenario {
            ScenarioKind::Motor => 3,
            _ => 1,
        };
        if self.weights.error.len() != n_err {
            return invalid("weights.error", format!("expected {n_err} entries"));
        }
        self.weights.validate().or_else(|m| invalid("weights", m))?;
        self.black_hole.validate(n_p).or_else(|m| invalid("black_hole", m))?;
        if self.encoding.mode == EncodingKind::Fixed && !(1..=8).contains(&self.encoding.bits) {
            return invalid("encoding.bits", "fixed encoding needs 1 to 8 bits");
        }
        if self.surrogate.factor == 0 {
            return invalid("surrogate.factor", "must be at least 1");
        }
        positive("surrogate.ridge", self.surrogate.ridge)?;
        self.qite.validate().or_else(|e| invalid("qite", e.to_string()))?;
        self.stability.validate().or_else(|m| invalid("stability", m))?;
        if let Some(d) = self.drag {
            if !(d.a >= 0.0 && d.b >= 0.0) {
                return invalid("drag", "coefficients must be non-negative");
            }
        }
        if let Some(m) = &self.motor {
            positive("motor.plant_lm_scale", m.plant_lm_scale)?;
            m.nominal.validate().or_else(|e| invalid("motor.nominal", e.to_string()))?;
            m.references.validate().or_else(|e| invalid("motor.references", e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Tables merged key by key; `stability` is a tagged union and is replaced whole.
fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if k != "stability" => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn serde_error(e: toml::de::Error) -> ConfigError {
    let msg = e.message().to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
        .unwrap_or("config")
        .to_string();
    ConfigError::Validation { key, message: msg }
}

/// Reads `text` over the defaults of its scenario; `scenario` overrides the
/// file's own `scenario` key.
pub fn parse_config_str(text: &str, scenario: Option<ScenarioKind>) -> Result<RunConfig, ConfigError> {
    let mut user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let kind = match scenario {
        Some(k) => k,
        None => match user.get("scenario") {
            Some(toml::Value::String(s)) => match ScenarioKind::parse(s) {
                Some(k) => k,
                None => return invalid("scenario", format!("unknown scenario {s:?}")),
            },
            Some(_) => return invalid("scenario", "must be a string"),
            None => return invalid("scenario", "no scenario given in file or on the command line"),
        },
    };
    user.insert("scenario".into(), toml::Value::String(kind.name().into()));
    let mut base = toml::Table::try_from(RunConfig::defaults(kind)).expect("defaults serialize");
    merge(&mut base, user);
    let cfg: RunConfig = toml::Value::Table(base).try_into().map_err(serde_error)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path, scenario: Option<ScenarioKind>) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, scenario)
}
