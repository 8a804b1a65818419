//! JSON configuration: one file with `scenarios`, `estimators`,
//! `selector_rules` and `experiment` sections. Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use automas_core::channel::{ScenarioConfig, ScenarioId};
use automas_core::estimators::{AlgorithmClass, IstaConfig};
use automas_core::orchestration::DEFAULT_VALIDATION_FRAMES;
use automas_core::selector::SelectorRules;
use automas_core::suite::SuiteConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown scenario preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// A preset named by variant (`"OpenArea"`) or label (`"2"`), or a full
/// scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioEntry {
    Preset(String),
    Full(Box<ScenarioConfig>),
}

pub fn resolve_preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    ScenarioId::PRESETS
        .into_iter()
        .find(|id| id.label() == name || id.name().eq_ignore_ascii_case(name))
        .and_then(ScenarioConfig::preset)
        .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
}

impl ScenarioEntry {
    pub fn resolve(&self) -> Result<ScenarioConfig, ConfigError> {
        let sc = match self {
            ScenarioEntry::Preset(name) => resolve_preset(name)?,
            ScenarioEntry::Full(sc) => (**sc).clone(),
        };
        sc.validate()
            .map_err(|e| ConfigError::Invalid(format!("scenario {}: {e}", sc.scenario_id.label())))?;
        Ok(sc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorsSection {
    pub ista: IstaConfig,
    pub dictionary_oversampling: usize,
    pub linear_ridge: f64,
    pub oracle_covariance_samples: usize,
    /// Preset whose ground-truth budget trains the learned filter shared by
    /// every scenario. `null` trains per scenario on its own samples.
    pub checkpoint_scenario: Option<String>,
}

impl Default for EstimatorsSection {
    fn default() -> Self {
        let s = SuiteConfig::default();
        Self {
            ista: s.ista,
            dictionary_oversampling: s.dictionary_oversampling,
            linear_ridge: s.linear_ridge,
            oracle_covariance_samples: s.oracle_covariance_samples,
            checkpoint_scenario: Some(ScenarioId::IndoorOffice.name().to_string()),
        }
    }
}

impl EstimatorsSection {
    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            ista: self.ista,
            dictionary_oversampling: self.dictionary_oversampling,
            linear_ridge: self.linear_ridge,
            oracle_covariance_samples: self.oracle_covariance_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: usize,
    pub time_slots: usize,
    pub master_seed: u64,
    /// Fixed baselines, run on every slot.
    pub algorithms: Vec<AlgorithmClass>,
    pub run_automas: bool,
    pub output_dir: PathBuf,
    pub validation_frames: usize,
    /// Overrides the per-scenario `max(-5, -SNR + 5)` dB threshold.
    pub threshold_db: Option<f64>,
    /// Record estimator wall time. Off by default so outputs are a pure
    /// function of the config and seed.
    pub measure_time: bool,
    /// Worker threads for trials.
    pub parallel: usize,
    pub write_trace: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: 200,
            time_slots: 50,
            master_seed: 2025,
            algorithms: AlgorithmClass::ALL.to_vec(),
            run_automas: true,
            output_dir: PathBuf::from("results"),
            validation_frames: DEFAULT_VALIDATION_FRAMES,
            threshold_db: None,
            measure_time: false,
            parallel: 1,
            write_trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub scenarios: Vec<ScenarioEntry>,
    pub estimators: EstimatorsSection,
    pub selector_rules: SelectorRules,
    pub experiment: ExperimentSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            scenarios: ScenarioId::PRESETS
                .iter()
                .map(|id| ScenarioEntry::Preset(id.name().to_string()))
                .collect(),
            estimators: EstimatorsSection::default(),
            selector_rules: SelectorRules::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.experiment;
        if e.trials == 0 || e.time_slots == 0 {
            return Err(ConfigError::Invalid("trials and time_slots must be >= 1".into()));
        }
        if e.run_automas && e.validation_frames == 0 {
            return Err(ConfigError::Invalid("validation_frames must be >= 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(ConfigError::Invalid("no scenarios".into()));
        }
        self.selector_rules
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.estimators
            .ista
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for s in &self.scenarios {
            s.resolve()?;
        }
        if let Some(name) = &self.estimators.checkpoint_scenario {
            resolve_preset(name)?;
        }
        Ok(())
    }

    pub fn resolved_scenarios(&self) -> Result<Vec<ScenarioConfig>, ConfigError> {
        self.scenarios.iter().map(ScenarioEntry::resolve).collect()
    }
}
