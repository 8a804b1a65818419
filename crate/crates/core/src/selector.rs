//! Rule-based algorithm selection.
//!
//! [`extract_features`] reduces an initial observation to [`EnvFeatures`];
//! [`select_algorithm`] walks an ordered rule table and returns the first
//! matching class that is not excluded. The default table is
//!
//! 1. `samples >= 10000` -> data-driven linear
//! 2. `samples >= 500` or covariance available -> LMMSE
//! 3. sparse hint (open area or carrier >= 28 GHz) -> ISTA
//! 4. always -> LS
//!
//! When every matching rule's class is excluded, the remaining classes are
//! tried in the canonical order LS, ISTA, LMMSE, linear.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{
    payload, Action, ComputeBudget, Decision, EngineError, MemoryStore, Observation, ReasoningEngine,
    TaskSpec,
};
use crate::estimators::AlgorithmClass;

pub const SELECTOR_ROLE: &str = "algorithm_selector";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnrRegime {
    High,
    Mid,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvFeatures {
    pub sparse_hint: bool,
    pub snr_regime: SnrRegime,
    pub samples_available: usize,
    pub covariance_available: bool,
    /// Carried for future rules; no default rule reads it.
    pub compute_budget: ComputeBudget,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectorError {
    #[error("observation lacks environment or resource information")]
    IncompleteObservation,
    #[error("every algorithm class is excluded")]
    NoCandidate,
    #[error("invalid rule table: {0}")]
    InvalidRules(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Always,
    MinSamples(usize),
    CovarianceAvailable,
    SparseHint,
    SnrRegime(SnrRegime),
    AnyOf(Vec<Condition>),
    AllOf(Vec<Condition>),
}

impl Condition {
    pub fn holds(&self, f: &EnvFeatures) -> bool {
        match self {
            Condition::Always => true,
            Condition::MinSamples(n) => f.samples_available >= *n,
            Condition::CovarianceAvailable => f.covariance_available,
            Condition::SparseHint => f.sparse_hint,
            Condition::SnrRegime(r) => f.snr_regime == *r,
            Condition::AnyOf(cs) => cs.iter().any(|c| c.holds(f)),
            Condition::AllOf(cs) => cs.iter().all(|c| c.holds(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub algorithm: AlgorithmClass,
    pub when: Condition,
}

/// Feature thresholds plus the ordered rule list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorRules {
    pub sparse_min_carrier_ghz: f64,
    pub high_snr_db: f64,
    pub low_snr_db: f64,
    pub rules: Vec<Rule>,
}

impl Default for SelectorRules {
    fn default() -> Self {
        Self {
            sparse_min_carrier_ghz: 28.0,
            high_snr_db: 15.0,
            low_snr_db: 5.0,
            rules: vec![
                Rule {
                    algorithm: AlgorithmClass::DataDrivenLinear,
                    when: Condition::MinSamples(10_000),
                },
                Rule {
                    algorithm: AlgorithmClass::StatisticsDrivenLMMSE,
                    when: Condition::AnyOf(vec![Condition::MinSamples(500), Condition::CovarianceAvailable]),
                },
                Rule {
                    algorithm: AlgorithmClass::FeatureDrivenISTA,
                    when: Condition::SparseHint,
                },
                Rule {
                    algorithm: AlgorithmClass::NoPriorLS,
                    when: Condition::Always,
                },
            ],
        }
    }
}

impl SelectorRules {
    /// The default table with an extra rule tried first.
    pub fn with_leading_rule(mut self, rule: Rule) -> Self {
        self.rules.insert(0, rule);
        self
    }

    pub fn validate(&self) -> Result<(), SelectorError> {
        if !(self.low_snr_db <= self.high_snr_db) {
            return Err(SelectorError::InvalidRules(
                "low_snr_db must not exceed high_snr_db".into(),
            ));
        }
        if !self.sparse_min_carrier_ghz.is_finite() {
            return Err(SelectorError::InvalidRules(
                "sparse_min_carrier_ghz must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn snr_regime(&self, snr_db: f64) -> SnrRegime {
        if snr_db >= self.high_snr_db {
            SnrRegime::High
        } else if snr_db >= self.low_snr_db {
            SnrRegime::Mid
        } else {
            SnrRegime::Low
        }
    }
}

/// Features under the default thresholds.
pub fn extract_features(o: &Observation) -> Result<EnvFeatures, SelectorError> {
    extract_features_with(o, &SelectorRules::default())
}

pub fn extract_features_with(o: &Observation, rules: &SelectorRules) -> Result<EnvFeatures, SelectorError> {
    let (env, res) = match (&o.environment, &o.resources) {
        (Some(e), Some(r)) => (e, r),
        _ => return Err(SelectorError::IncompleteObservation),
    };
    Ok(EnvFeatures {
        sparse_hint: env.open_area || env.carrier_ghz >= rules.sparse_min_carrier_ghz,
        snr_regime: rules.snr_regime(env.snr_db),
        samples_available: res.samples_available,
        covariance_available: res.covariance_available,
        compute_budget: res.compute_budget,
    })
}

/// Which rule produced a selection; `None` means the canonical fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub algorithm: AlgorithmClass,
    pub rule_index: Option<usize>,
}

pub fn select_with_rule(
    f: &EnvFeatures,
    excluded: &BTreeSet<AlgorithmClass>,
    rules: &SelectorRules,
) -> Result<Selection, SelectorError> {
    for (i, rule) in rules.rules.iter().enumerate() {
        if !excluded.contains(&rule.algorithm) && rule.when.holds(f) {
            return Ok(Selection {
                algorithm: rule.algorithm,
                rule_index: Some(i),
            });
        }
    }
    AlgorithmClass::ALL
        .into_iter()
        .find(|c| !excluded.contains(c))
        .map(|algorithm| Selection {
            algorithm,
            rule_index: None,
        })
        .ok_or(SelectorError::NoCandidate)
}

pub fn select_algorithm(
    f: &EnvFeatures,
    excluded: &BTreeSet<AlgorithmClass>,
    rules: &SelectorRules,
) -> Result<AlgorithmClass, SelectorError> {
    select_with_rule(f, excluded, rules).map(|s| s.algorithm)
}

/// Classes rejected so far: anything listed under `"excluded"` in the
/// initial observation plus the `"rejected_algorithm"` of every delivered
/// diagnostic report.
pub fn excluded_from_memory(memory: &MemoryStore) -> BTreeSet<AlgorithmClass> {
    let mut out = BTreeSet::new();
    if let Some(Value::Array(list)) = memory.initial().and_then(|o| o.payload.get("excluded")) {
        out.extend(
            list.iter()
                .filter_map(Value::as_str)
                .filter_map(AlgorithmClass::parse),
        );
    }
    for msg in memory.received() {
        if let Some(c) = msg
            .payload
            .get("rejected_algorithm")
            .and_then(Value::as_str)
            .and_then(AlgorithmClass::parse)
        {
            out.insert(c);
        }
    }
    out
}

fn describe(f: &EnvFeatures) -> String {
    alloc::format!(
        "sparse multipath expected: {}; SNR regime {:?}; {} ground-truth samples; covariance {}",
        if f.sparse_hint { "yes" } else { "no" },
        f.snr_regime,
        f.samples_available,
        if f.covariance_available {
            "available"
        } else {
            "unavailable"
        },
    )
}

/// Deterministic selector: thinks once about the current features and
/// exclusions, sends the choice to `notify` (when set), then finishes with
/// `{"algorithm": <class name>}`.
#[derive(Debug, Clone)]
pub struct SelectorEngine {
    pub rules: SelectorRules,
    /// Role that receives the selection as a message.
    pub notify: Option<String>,
}

impl SelectorEngine {
    pub fn new(rules: SelectorRules) -> Self {
        Self { rules, notify: None }
    }

    pub fn notifying(mut self, role: impl Into<String>) -> Self {
        self.notify = Some(role.into());
        self
    }

    fn choose(&self, memory: &MemoryStore) -> Result<(Selection, EnvFeatures), EngineError> {
        let o0 = memory
            .initial()
            .ok_or_else(|| EngineError("selector memory has no initial observation".into()))?;
        let f = extract_features_with(o0, &self.rules).map_err(|e| EngineError(e.to_string()))?;
        let excluded = excluded_from_memory(memory);
        let sel = select_with_rule(&f, &excluded, &self.rules).map_err(|e| EngineError(e.to_string()))?;
        Ok((sel, f))
    }
}

impl ReasoningEngine for SelectorEngine {
    fn decide(
        &mut self,
        _task: &TaskSpec,
        memory: &MemoryStore,
        _observation: &Observation,
    ) -> Result<Decision, EngineError> {
        let (sel, f) = self.choose(memory)?;
        // only the actions taken since the latest delivered message count
        let since = memory.received().last().map(|m| m.step).unwrap_or(0);
        let recent: Vec<&Action> = memory
            .history()
            .iter()
            .filter(|(_, o)| o.step > since)
            .map(|(a, _)| a)
            .collect();
        let thought = recent.iter().any(|a| matches!(a, Action::Think { .. }));
        let sent = recent.iter().any(|a| matches!(a, Action::SendMessage { .. }));
        let result = payload([("algorithm", Value::from(sel.algorithm.name()))]);
        let action = if !thought {
            let rule = match sel.rule_index {
                Some(i) => alloc::format!("rule {}", i + 1),
                None => "the fallback order".to_string(),
            };
            let excluded = excluded_from_memory(memory);
            let mut rationale = alloc::format!("{}. ", describe(&f));
            if !excluded.is_empty() {
                let names: Vec<&str> = excluded.iter().map(|c| c.name()).collect();
                rationale.push_str(&alloc::format!("Excluding {}. ", names.join(", ")));
            }
            rationale.push_str(&alloc::format!("Selecting {} by {rule}.", sel.algorithm.name()));
            Action::Think { rationale }
        } else if let (Some(to), false) = (&self.notify, sent) {
            Action::SendMessage {
                to_role: to.clone(),
                body: result,
            }
        } else {
            Action::Finish { result }
        };
        Ok(action.into())
    }
}
