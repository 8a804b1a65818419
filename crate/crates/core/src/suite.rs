//! Per-scenario estimator resources: the angular dictionary, the LMMSE
//! covariance and the learned linear filter, prepared once and shared by the
//! fixed baselines and the code agent's tools.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    sample_covariance, sample_dataset, true_covariance, ChannelError, ChannelRealization, PilotFrame,
    ScenarioConfig,
};
use crate::estimators::{
    apply_linear, build_angular_dictionary, fit_linear_estimator, ista_estimate, lmmse_estimate, ls_estimate,
    AlgorithmClass, AngularDictionary, Estimate, EstimatorError, IstaConfig, LinearEstimator, LmmseFilter,
};
use crate::linalg::CMatrix;
use crate::rng::{domain, SeedSplitter};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub ista: IstaConfig,
    /// Angular grid points per array element along each axis.
    pub dictionary_oversampling: usize,
    pub linear_ridge: f64,
    /// Draws behind the covariance handed to scenarios that advertise
    /// `covariance_available` without any samples.
    pub oracle_covariance_samples: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            ista: IstaConfig::default(),
            dictionary_oversampling: 2,
            linear_ridge: 1e-4,
            oracle_covariance_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SuiteError {
    #[error("{} needs resources this scenario lacks", .0.name())]
    ResourceUnavailable(AlgorithmClass),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

impl SuiteError {
    /// Short reason string used in result files.
    pub fn reason(&self) -> &'static str {
        match self {
            SuiteError::ResourceUnavailable(_) => "resource-unavailable",
            SuiteError::Estimator(_) => "estimator-error",
            SuiteError::Channel(_) => "channel-error",
        }
    }
}

/// Where the LMMSE covariance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    /// Sample covariance of the scenario's ground-truth budget.
    Samples(usize),
    /// High-sample covariance standing in for a known statistic.
    Oracle(usize),
    /// Supplied by the caller.
    Injected,
}

#[derive(Debug, Clone)]
pub struct EstimatorSuite {
    pub dictionary: AngularDictionary,
    pub ista: IstaConfig,
    covariance: Option<(CMatrix, CovarianceSource, LmmseFilter)>,
    linear: Option<(LinearEstimator, String)>,
}

impl EstimatorSuite {
    /// Builds the suite for `scenario`, reading at most
    /// `scenario.samples_available` ground-truth samples. A `checkpoint`
    /// replaces the scenario's own learned filter.
    pub fn prepare(
        scenario: &ScenarioConfig,
        config: &SuiteConfig,
        seeds: &SeedSplitter,
        checkpoint: Option<(LinearEstimator, String)>,
    ) -> Result<Self, SuiteError> {
        scenario.validate()?;
        let over = config.dictionary_oversampling.max(1);
        let dictionary = build_angular_dictionary(
            &scenario.array,
            over * scenario.array.cols,
            over * scenario.array.rows,
        )?;
        let mut suite = Self {
            dictionary,
            ista: config.ista,
            covariance: None,
            linear: None,
        };
        let n = scenario.samples_available;
        let dataset = if n > 0 {
            Some(sample_dataset(
                scenario,
                n,
                true,
                &mut seeds.stream(domain::DATASET, 0),
            )?)
        } else {
            None
        };
        if let Some(data) = &dataset {
            let channels: alloc::vec::Vec<ChannelRealization> =
                data.iter().map(|(_, ch)| ch.clone()).collect();
            let r = sample_covariance(&channels).expect("dataset is nonempty");
            suite.set_covariance(r, CovarianceSource::Samples(n), scenario.noise_var())?;
        } else if scenario.covariance_available {
            let m = config.oracle_covariance_samples.max(1);
            let r = true_covariance(scenario, m, &mut seeds.stream(domain::COVARIANCE, 0))?;
            suite.set_covariance(r, CovarianceSource::Oracle(m), scenario.noise_var())?;
        }
        suite.linear = match (checkpoint, &dataset) {
            (Some(cp), _) => Some(cp),
            (None, Some(data)) => Some((
                fit_linear_estimator(data, config.linear_ridge)?,
                String::from(scenario.scenario_id.label()),
            )),
            (None, None) => None,
        };
        Ok(suite)
    }

    /// Replaces the LMMSE covariance, e.g. with an oracle for tests.
    pub fn inject_covariance(&mut self, r_h: CMatrix, noise_var: f64) -> Result<(), SuiteError> {
        self.set_covariance(r_h, CovarianceSource::Injected, noise_var)
    }

    fn set_covariance(
        &mut self,
        r_h: CMatrix,
        source: CovarianceSource,
        noise_var: f64,
    ) -> Result<(), SuiteError> {
        let filter = LmmseFilter::prepare(&r_h, C64::new(1.0, 0.0), noise_var)?;
        self.covariance = Some((r_h, source, filter));
        Ok(())
    }

    pub fn covariance(&self) -> Option<(&CMatrix, CovarianceSource)> {
        self.covariance.as_ref().map(|(r, s, _)| (r, *s))
    }

    /// The learned filter and the label of the scenario it was trained on.
    pub fn linear(&self) -> Option<(&LinearEstimator, &str)> {
        self.linear.as_ref().map(|(l, s)| (l, s.as_str()))
    }

    pub fn is_available(&self, class: AlgorithmClass) -> bool {
        match class {
            AlgorithmClass::NoPriorLS | AlgorithmClass::FeatureDrivenISTA => true,
            AlgorithmClass::StatisticsDrivenLMMSE => self.covariance.is_some(),
            AlgorithmClass::DataDrivenLinear => self.linear.is_some(),
        }
    }

    pub fn estimate(&self, class: AlgorithmClass, frame: &PilotFrame) -> Result<Estimate, SuiteError> {
        let est = match class {
            AlgorithmClass::NoPriorLS => ls_estimate(frame)?,
            AlgorithmClass::FeatureDrivenISTA => ista_estimate(frame, &self.dictionary, &self.ista)?,
            AlgorithmClass::StatisticsDrivenLMMSE => {
                let (r, _, filter) = self
                    .covariance
                    .as_ref()
                    .ok_or(SuiteError::ResourceUnavailable(class))?;
                if frame.noise_var == filter.noise_var()
                    && frame.s.len() == 1
                    && frame.s[0] == C64::new(1.0, 0.0)
                {
                    filter.apply(frame)?
                } else {
                    lmmse_estimate(frame, r)?
                }
            }
            AlgorithmClass::DataDrivenLinear => {
                let (l, _) = self
                    .linear
                    .as_ref()
                    .ok_or(SuiteError::ResourceUnavailable(class))?;
                apply_linear(l, frame)?
            }
        };
        Ok(est)
    }
}
