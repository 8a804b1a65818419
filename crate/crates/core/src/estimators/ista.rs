use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::PilotFrame;
use crate::linalg::{self, CMatrix};
use crate::math;
use crate::C64;

use super::{check_finite, AlgorithmClass, AngularDictionary, Estimate, EstimatorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IstaConfig {
    /// Multiplies the universal threshold `sigma sqrt(2 ln D)`.
    pub lambda_scale: f64,
    pub max_iter: usize,
    /// Relative step-size tolerance.
    pub tol: f64,
    /// Keep the per-iteration objective in [`IstaSolution::objective`].
    pub record_objective: bool,
}

impl Default for IstaConfig {
    fn default() -> Self {
        Self {
            lambda_scale: 1.0,
            max_iter: 500,
            tol: 1e-5,
            record_objective: false,
        }
    }
}

impl IstaConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.lambda_scale >= 0.0) || !self.lambda_scale.is_finite() {
            return Err(EstimatorError::Config("lambda_scale must be >= 0".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(EstimatorError::Config("tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstaSolution {
    /// Sparse coefficients over the dictionary atoms.
    pub x: Vec<C64>,
    /// `A x`.
    pub h: Vec<C64>,
    pub iterations: usize,
    /// `0.5 ||y - A x_k||^2 + lambda ||x_k||_1` for `k = 0..iterations`,
    /// when requested.
    pub objective: Vec<f64>,
}

/// `v max(0, 1 - tau / |v|)`.
pub fn soft_threshold(v: C64, tau: f64) -> C64 {
    let mag_sq = math::abs_sq(v);
    if mag_sq <= tau * tau {
        C64::new(0.0, 0.0)
    } else {
        v * (1.0 - tau / math::sqrt(mag_sq))
    }
}

fn l1(x: &[C64]) -> f64 {
    x.iter().map(|z| math::sqrt(math::abs_sq(*z))).sum()
}

/// Proximal gradient for `min_x 0.5 ||y - A x||^2 + lambda ||x||_1` with
/// step `1 / L` from `x = 0`.
pub fn ista_solve(
    y: &[C64],
    dict: &AngularDictionary,
    lambda: f64,
    max_iter: usize,
    tol: f64,
    record_objective: bool,
) -> Result<IstaSolution, EstimatorError> {
    if y.len() != dict.num_elements() {
        return Err(EstimatorError::Dimension(alloc::format!(
            "observation has {} entries, dictionary has {} rows",
            y.len(),
            dict.num_elements()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(EstimatorError::Config("lambda must be >= 0".into()));
    }
    let step = 1.0 / dict.lipschitz();
    let tau = lambda * step;
    let mut x = vec![C64::new(0.0, 0.0); dict.num_atoms()];
    let mut ax = vec![C64::new(0.0, 0.0); dict.num_elements()];
    let mut objective = Vec::new();
    let mut previous = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iter {
        let residual: Vec<C64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
        let value = 0.5 * linalg::norm_sq(&residual) + lambda * l1(&x);
        debug_assert!(
            value <= previous + 1e-10 * previous.abs().max(1.0),
            "objective rose from {previous} to {value} at iteration {iterations}"
        );
        if record_objective {
            objective.push(value);
        }
        previous = value;

        let grad = dict.adjoint_apply(&residual);
        let mut delta_sq = 0.0;
        let mut x_sq = 0.0;
        for (xi, gi) in x.iter_mut().zip(&grad) {
            let next = soft_threshold(*xi + gi * step, tau);
            delta_sq += math::abs_sq(next - *xi);
            x_sq += math::abs_sq(*xi);
            *xi = next;
        }
        iterations += 1;
        if !delta_sq.is_finite() {
            return Err(EstimatorError::Divergence {
                iteration: iterations,
            });
        }
        ax = dict.apply(&x);
        if math::sqrt(delta_sq) <= tol * math::sqrt(x_sq) {
            break;
        }
    }
    if record_objective {
        let residual: Vec<C64> = y.iter().zip(&ax).map(|(a, b)| a - b).collect();
        objective.push(0.5 * linalg::norm_sq(&residual) + lambda * l1(&x));
    }
    Ok(IstaSolution {
        x,
        h: ax,
        iterations,
        objective,
    })
}

/// Sparse recovery in the angular domain. The pilot is divided out first, so
/// any nonzero scalar pilot is accepted; the threshold is
/// `lambda_scale * sigma * sqrt(2 ln D)` with `sigma` the post-division noise
/// standard deviation.
pub fn ista_estimate(
    frame: &PilotFrame,
    dict: &AngularDictionary,
    config: &IstaConfig,
) -> Result<Estimate, EstimatorError> {
    Ok(ista_estimate_with_solution(frame, dict, config)?.0)
}

pub(crate) fn ista_estimate_with_solution(
    frame: &PilotFrame,
    dict: &AngularDictionary,
    config: &IstaConfig,
) -> Result<(Estimate, IstaSolution), EstimatorError> {
    config.validate()?;
    if frame.s.len() != 1 {
        return Err(EstimatorError::Dimension(alloc::format!(
            "ISTA expects a scalar pilot, got length {}",
            frame.s.len()
        )));
    }
    let s = frame.s[0];
    let power = math::abs_sq(s);
    if power == 0.0 {
        return Err(EstimatorError::DegeneratePilot);
    }
    let y: Vec<C64> = frame.y.iter().map(|v| v * s.conj() / power).collect();
    let sigma = math::sqrt(frame.noise_var.max(0.0) / power);
    let lambda = config.lambda_scale * sigma * math::sqrt(2.0 * math::ln(dict.num_atoms() as f64));
    let sol = ista_solve(
        &y,
        dict,
        lambda,
        config.max_iter,
        config.tol,
        config.record_objective,
    )?;
    let h_hat = CMatrix::column(&sol.h);
    check_finite(&h_hat)?;
    Ok((
        Estimate::new(h_hat, AlgorithmClass::FeatureDrivenISTA, sol.iterations),
        sol,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;
    use crate::estimators::{build_angular_dictionary, nmse};

    #[test]
    fn soft_threshold_reference_values() {
        assert_eq!(soft_threshold(C64::new(3.0, 0.0), 1.0), C64::new(2.0, 0.0));
        assert_eq!(soft_threshold(C64::new(0.0, 0.5), 1.0), C64::new(0.0, 0.0));
        let v = C64::new(3.0, 4.0);
        let out = soft_threshold(v, 5.0 * (1.0 - 0.8));
        assert!((math::abs(out) - 4.0).abs() < 1e-12);
        assert!((out.arg() - v.arg()).abs() < 1e-12);
    }

    fn noiseless_frame(h: &[C64]) -> PilotFrame {
        PilotFrame {
            y: h.to_vec(),
            s: crate::channel::unit_pilot(),
            noise_var: 0.0,
            slot_index: 0,
            rrh_index: 0,
        }
    }

    #[test]
    fn recovers_three_sparse_on_grid_signal() {
        let dict = build_angular_dictionary(&ArrayGeometry::upa_8x8(30.0), 8, 8).unwrap();
        let mut x = vec![C64::new(0.0, 0.0); 64];
        x[3] = C64::new(1.0, 0.5);
        x[27] = C64::new(-0.4, 0.2);
        x[50] = C64::new(0.0, -0.7);
        let h = dict.apply(&x);
        let cfg = IstaConfig {
            tol: 0.0,
            ..IstaConfig::default()
        };
        let (est, sol) = ista_estimate_with_solution(&noiseless_frame(&h), &dict, &cfg).unwrap();
        assert!(est.iterations_used <= 500);
        assert!(nmse(&est.h_hat, &CMatrix::column(&h)).unwrap() < -60.0);
        for (a, b) in sol.x.iter().zip(&x) {
            assert!(math::abs(a - b) < 1e-6);
        }
    }

    #[test]
    fn objective_is_non_increasing() {
        let dict = build_angular_dictionary(&ArrayGeometry::upa_8x8(30.0), 16, 16).unwrap();
        let y: Vec<C64> = (0..64)
            .map(|i| C64::new(math::sin(0.7 * i as f64), math::cos(1.3 * i as f64)))
            .collect();
        let sol = ista_solve(&y, &dict, 0.3, 200, 0.0, true).unwrap();
        assert_eq!(sol.objective.len(), sol.iterations + 1);
        for w in sol.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0]);
        }
    }

    #[test]
    fn huge_lambda_returns_zero_after_one_step() {
        let dict = build_angular_dictionary(&ArrayGeometry::upa_8x8(30.0), 8, 8).unwrap();
        let y = vec![C64::new(1.0, 0.0); 64];
        let sol = ista_solve(&y, &dict, 1e6, 500, 1e-5, false).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.h.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn rejects_mismatched_observation() {
        let dict = build_angular_dictionary(&ArrayGeometry::upa_8x8(30.0), 8, 8).unwrap();
        assert!(matches!(
            ista_solve(&[C64::new(1.0, 0.0)], &dict, 0.1, 10, 1e-5, false),
            Err(EstimatorError::Dimension(_))
        ));
    }
}
