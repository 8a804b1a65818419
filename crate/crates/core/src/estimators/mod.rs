//! Channel estimators for the four algorithm classes and the NMSE metric.
//!
//! | class | estimator | needs |
//! |---|---|---|
//! | no prior | least squares | nothing |
//! | feature driven | ISTA over an angular dictionary | sparsity |
//! | statistics driven | LMMSE | channel covariance |
//! | data driven | learned linear (empirical Wiener) filter | ground-truth samples |

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::PilotFrame;
use crate::linalg::{CMatrix, LinalgError};
use crate::math;
use crate::C64;

mod dictionary;
mod ista;
mod linear;

pub use dictionary::{build_angular_dictionary, AngularDictionary};
pub use ista::{ista_estimate, ista_solve, soft_threshold, IstaConfig, IstaSolution};
pub use linear::{
    apply_linear, fit_linear_estimator, lmmse_estimate, train_residual_net, LinearEstimator, LmmseFilter,
    ResidualNetConfig,
};

/// NMSE values are clipped to this magnitude, in dB.
pub const NMSE_CLIP_DB: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("degenerate pilot: |s| = 0")]
    DegeneratePilot,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical divergence at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("numerical failure: {0}")]
    Numerical(LinalgError),
    #[error("rank-deficient training covariance; use a positive ridge")]
    RankDeficient,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("NMSE undefined for an all-zero reference channel")]
    UndefinedMetric,
    #[error("unsupported feature: {0}")]
    Unsupported(&'static str),
}

impl From<LinalgError> for EstimatorError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::DimensionMismatch { expected, got } => {
                EstimatorError::Dimension(alloc::format!("expected {expected}, got {got}"))
            }
            other => EstimatorError::Numerical(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmClass {
    NoPriorLS,
    FeatureDrivenISTA,
    StatisticsDrivenLMMSE,
    DataDrivenLinear,
}

impl AlgorithmClass {
    pub const ALL: [AlgorithmClass; 4] = [
        AlgorithmClass::NoPriorLS,
        AlgorithmClass::FeatureDrivenISTA,
        AlgorithmClass::StatisticsDrivenLMMSE,
        AlgorithmClass::DataDrivenLinear,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmClass::NoPriorLS => "NoPriorLS",
            AlgorithmClass::FeatureDrivenISTA => "FeatureDrivenISTA",
            AlgorithmClass::StatisticsDrivenLMMSE => "StatisticsDrivenLMMSE",
            AlgorithmClass::DataDrivenLinear => "DataDrivenLinear",
        }
    }

    /// Short estimator name (`LS`, `ISTA`, `LMMSE`, `Linear`).
    pub fn short_name(&self) -> &'static str {
        match self {
            AlgorithmClass::NoPriorLS => "LS",
            AlgorithmClass::FeatureDrivenISTA => "ISTA",
            AlgorithmClass::StatisticsDrivenLMMSE => "LMMSE",
            AlgorithmClass::DataDrivenLinear => "Linear",
        }
    }

    /// Accepts the variant name or the short name, case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s) || c.short_name().eq_ignore_ascii_case(s))
    }

    /// Name of the toolbox tool that runs this estimator.
    pub fn tool_name(&self) -> &'static str {
        match self {
            AlgorithmClass::NoPriorLS => "ls_estimate",
            AlgorithmClass::FeatureDrivenISTA => "ista_estimate",
            AlgorithmClass::StatisticsDrivenLMMSE => "lmmse_estimate",
            AlgorithmClass::DataDrivenLinear => "linear_estimate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// `N_r x N_t`.
    pub h_hat: CMatrix,
    pub algorithm: AlgorithmClass,
    pub iterations_used: usize,
    pub wall_time_s: f64,
}

impl Estimate {
    pub(crate) fn new(h_hat: CMatrix, algorithm: AlgorithmClass, iterations_used: usize) -> Self {
        Self {
            h_hat,
            algorithm,
            iterations_used,
            wall_time_s: 0.0,
        }
    }
}

pub(crate) fn check_finite(h: &CMatrix) -> Result<(), EstimatorError> {
    if h.is_finite() {
        Ok(())
    } else {
        Err(EstimatorError::Numerical(LinalgError::NotPositiveDefinite {
            pivot: 0,
            value: f64::NAN,
        }))
    }
}

/// `h_hat = y conj(s) / |s|^2`; with the unit pilot this is `y` itself.
pub fn ls_estimate(frame: &PilotFrame) -> Result<Estimate, EstimatorError> {
    if frame.s.len() != 1 {
        return Err(EstimatorError::Dimension(alloc::format!(
            "least squares expects a scalar pilot, got length {}",
            frame.s.len()
        )));
    }
    let s = frame.s[0];
    let power = math::abs_sq(s);
    if power == 0.0 {
        return Err(EstimatorError::DegeneratePilot);
    }
    let scale = s.conj() / power;
    let h: alloc::vec::Vec<C64> = frame.y.iter().map(|y| y * scale).collect();
    Ok(Estimate::new(CMatrix::column(&h), AlgorithmClass::NoPriorLS, 0))
}

/// `10 log10(||h_hat - h_true||^2 / ||h_true||^2)`, clipped to +-300 dB.
pub fn nmse(h_hat: &CMatrix, h_true: &CMatrix) -> Result<f64, EstimatorError> {
    if h_hat.shape() != h_true.shape() {
        return Err(EstimatorError::Dimension(alloc::format!(
            "estimate is {:?}, truth is {:?}",
            h_hat.shape(),
            h_true.shape()
        )));
    }
    let signal = h_true.frobenius_sq();
    if signal == 0.0 {
        return Err(EstimatorError::UndefinedMetric);
    }
    let error: f64 = h_hat
        .as_slice()
        .iter()
        .zip(h_true.as_slice())
        .map(|(a, b)| math::abs_sq(a - b))
        .sum();
    if error.is_nan() {
        return Ok(NMSE_CLIP_DB);
    }
    let db = if error == 0.0 {
        -NMSE_CLIP_DB
    } else {
        10.0 * math::log10(error / signal)
    };
    Ok(db.clamp(-NMSE_CLIP_DB, NMSE_CLIP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn frame(y: Vec<C64>, s: C64) -> PilotFrame {
        PilotFrame {
            y,
            s: vec![s],
            noise_var: 0.1,
            slot_index: 0,
            rrh_index: 0,
        }
    }

    fn h() -> CMatrix {
        CMatrix::column(&[C64::new(1.0, -0.5), C64::new(0.3, 0.2), C64::new(-0.7, 0.0)])
    }

    #[test]
    fn ls_with_unit_pilot_is_identity() {
        let truth = h();
        let est = ls_estimate(&frame(truth.as_slice().to_vec(), C64::new(1.0, 0.0))).unwrap();
        assert_eq!(est.h_hat, truth);
        assert_eq!(nmse(&est.h_hat, &truth).unwrap(), -300.0);
    }

    #[test]
    fn ls_divides_out_scaled_pilot() {
        let truth = h();
        let noise = [C64::new(0.1, 0.0), C64::new(0.0, -0.2), C64::new(0.05, 0.05)];
        let y: Vec<C64> = truth
            .as_slice()
            .iter()
            .zip(&noise)
            .map(|(h, n)| h * 2.0 + n)
            .collect();
        let est = ls_estimate(&frame(y, C64::new(2.0, 0.0))).unwrap();
        for ((e, t), n) in est.h_hat.as_slice().iter().zip(truth.as_slice()).zip(&noise) {
            assert!(math::abs(e - (t + n / 2.0)) < 1e-15);
        }
    }

    #[test]
    fn ls_rejects_zero_pilot() {
        assert_eq!(
            ls_estimate(&frame(vec![C64::new(1.0, 0.0)], C64::new(0.0, 0.0))).unwrap_err(),
            EstimatorError::DegeneratePilot
        );
    }

    #[test]
    fn nmse_reference_values() {
        let truth = h();
        let zero = CMatrix::zeros(3, 1);
        assert!(nmse(&zero, &truth).unwrap().abs() < 1e-12);
        let double = truth.scale(C64::new(2.0, 0.0));
        assert!(nmse(&double, &truth).unwrap().abs() < 1e-12);
        assert_eq!(nmse(&truth, &zero).unwrap_err(), EstimatorError::UndefinedMetric);
    }

    #[test]
    fn nmse_matches_closed_form_for_offsets() {
        let truth = h();
        let e = CMatrix::column(&[C64::new(0.01, 0.0), C64::new(0.0, 0.02), C64::new(-0.03, 0.01)]);
        let expected = 10.0 * math::log10(e.frobenius_sq() / truth.frobenius_sq());
        let got = nmse(&truth.add(&e).unwrap(), &truth).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for c in AlgorithmClass::ALL {
            assert_eq!(AlgorithmClass::parse(c.name()), Some(c));
            assert_eq!(AlgorithmClass::parse(c.short_name()), Some(c));
        }
        assert_eq!(AlgorithmClass::parse("resnet"), None);
    }
}
