use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, PilotFrame};
use crate::linalg::{CMatrix, Cholesky};
use crate::math;
use crate::C64;

use super::{check_finite, AlgorithmClass, Estimate, EstimatorError};

/// Pivots below this fraction of the mean diagonal count as singular.
const RELATIVE_PIVOT_FLOOR: f64 = 1e-13;

fn scalar_pilot(frame: &PilotFrame) -> Result<C64, EstimatorError> {
    if frame.s.len() != 1 {
        return Err(EstimatorError::Dimension(alloc::format!(
            "expected a scalar pilot, got length {}",
            frame.s.len()
        )));
    }
    if math::abs_sq(frame.s[0]) == 0.0 {
        return Err(EstimatorError::DegeneratePilot);
    }
    Ok(frame.s[0])
}

fn check_covariance(r_h: &CMatrix) -> Result<(), EstimatorError> {
    if r_h.rows() != r_h.cols() {
        return Err(EstimatorError::Dimension(alloc::format!(
            "covariance is {}x{}",
            r_h.rows(),
            r_h.cols()
        )));
    }
    if !r_h.is_finite() {
        return Err(EstimatorError::Config("covariance has non-finite entries".into()));
    }
    let scale = r_h.trace().re.abs().max(1e-300) / r_h.rows().max(1) as f64;
    if r_h.hermitian_defect() > 1e-8 * scale {
        return Err(EstimatorError::Config("covariance is not Hermitian".into()));
    }
    Ok(())
}

/// LMMSE filter `W = R (R |s|^2 + sigma^2 I)^-1 conj(s)` prepared once for a
/// fixed covariance, pilot and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseFilter {
    w: CMatrix,
    pilot: C64,
    noise_var: f64,
}

impl LmmseFilter {
    pub fn prepare(r_h: &CMatrix, pilot: C64, noise_var: f64) -> Result<Self, EstimatorError> {
        check_covariance(r_h)?;
        if !(noise_var >= 0.0) {
            return Err(EstimatorError::Config("noise variance must be >= 0".into()));
        }
        let power = math::abs_sq(pilot);
        if power == 0.0 {
            return Err(EstimatorError::DegeneratePilot);
        }
        let mut m = r_h.scale(C64::new(power, 0.0));
        m.add_to_diagonal(noise_var);
        let chol = Cholesky::factor(&m)?;
        // M and R are Hermitian, so R M^-1 = (M^-1 R)^H
        let w = chol.solve_matrix(r_h)?.adjoint().scale(pilot.conj());
        check_finite(&w)?;
        Ok(Self { w, pilot, noise_var })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.w
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Frames must carry the pilot and noise level the filter was prepared
    /// for.
    pub fn apply(&self, frame: &PilotFrame) -> Result<Estimate, EstimatorError> {
        let s = scalar_pilot(frame)?;
        if s != self.pilot || frame.noise_var != self.noise_var {
            return Err(EstimatorError::Config(
                "frame pilot or noise level differs from the prepared filter".into(),
            ));
        }
        let h = self.w.matvec(&frame.y)?;
        Ok(Estimate::new(
            CMatrix::column(&h),
            AlgorithmClass::StatisticsDrivenLMMSE,
            0,
        ))
    }
}

/// `h_hat = R (R |s|^2 + sigma^2 I)^-1 conj(s) y`, solved by Cholesky.
pub fn lmmse_estimate(frame: &PilotFrame, r_h: &CMatrix) -> Result<Estimate, EstimatorError> {
    check_covariance(r_h)?;
    let s = scalar_pilot(frame)?;
    if r_h.rows() != frame.y.len() {
        return Err(EstimatorError::Dimension(alloc::format!(
            "covariance is {0}x{0}, observation has {1} entries",
            r_h.rows(),
            frame.y.len()
        )));
    }
    let mut m = r_h.scale(C64::new(math::abs_sq(s), 0.0));
    m.add_to_diagonal(frame.noise_var);
    let rhs: Vec<C64> = frame.y.iter().map(|y| y * s.conj()).collect();
    let z = Cholesky::factor(&m)?.solve_vec(&rhs)?;
    let h_hat = CMatrix::column(&r_h.matvec(&z)?);
    check_finite(&h_hat)?;
    Ok(Estimate::new(h_hat, AlgorithmClass::StatisticsDrivenLMMSE, 0))
}

/// Empirical Wiener filter learned from (observation, channel) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimator {
    /// `N_r x N_r`.
    pub w: CMatrix,
    pub training_size: usize,
    pub ridge: f64,
}

/// `W = R_hy (R_yy + ridge I)^-1` with sample moments over `dataset`.
pub fn fit_linear_estimator(
    dataset: &[(PilotFrame, ChannelRealization)],
    ridge: f64,
) -> Result<LinearEstimator, EstimatorError> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(EstimatorError::Config("ridge must be >= 0".into()));
    }
    let (first, _) = dataset.first().ok_or(EstimatorError::EmptyDataset)?;
    let n = first.y.len();
    let mut r_yy = CMatrix::zeros(n, n);
    // accumulated as R_yh = R_hy^H so the solve below needs no transpose
    let mut r_yh = CMatrix::zeros(n, n);
    let weight = 1.0 / dataset.len() as f64;
    for (frame, ch) in dataset {
        let h = ch.vector();
        if frame.y.len() != n || h.len() != n {
            return Err(EstimatorError::Dimension(alloc::format!(
                "training pair has {} observations and {} channel entries, expected {n}",
                frame.y.len(),
                h.len()
            )));
        }
        r_yy.add_outer(&frame.y, &frame.y, weight);
        r_yh.add_outer(&frame.y, h, weight);
    }
    r_yy.add_to_diagonal(ridge);
    let chol = Cholesky::factor(&r_yy).map_err(|_| EstimatorError::RankDeficient)?;
    let floor = RELATIVE_PIVOT_FLOOR * r_yy.trace().re / n as f64;
    if (0..n).any(|i| math::abs_sq(chol.lower()[(i, i)]) < floor) {
        return Err(EstimatorError::RankDeficient);
    }
    let w = chol.solve_matrix(&r_yh)?.adjoint();
    if !w.is_finite() {
        return Err(EstimatorError::RankDeficient);
    }
    Ok(LinearEstimator {
        w,
        training_size: dataset.len(),
        ridge,
    })
}

/// `h_hat = W y`.
pub fn apply_linear(est: &LinearEstimator, frame: &PilotFrame) -> Result<Estimate, EstimatorError> {
    if est.w.cols() != frame.y.len() {
        return Err(EstimatorError::Dimension(alloc::format!(
            "filter takes {} inputs, observation has {}",
            est.w.cols(),
            frame.y.len()
        )));
    }
    let h_hat = CMatrix::column(&est.w.matvec(&frame.y)?);
    check_finite(&h_hat)?;
    Ok(Estimate::new(h_hat, AlgorithmClass::DataDrivenLinear, 0))
}

/// Hyper-parameters of the residual-network estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualNetConfig {
    pub residual_blocks: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ResidualNetConfig {
    fn default() -> Self {
        Self {
            residual_blocks: 3,
            learning_rate: 1e-3,
            epochs: 150,
            batch_size: 64,
        }
    }
}

/// The residual network is not part of this build; the learned linear
/// filter covers the data-driven class.
pub fn train_residual_net(
    dataset: &[(PilotFrame, ChannelRealization)],
    _config: &ResidualNetConfig,
) -> Result<LinearEstimator, EstimatorError> {
    if dataset.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    Err(EstimatorError::Unsupported("residual network estimator"))
}
