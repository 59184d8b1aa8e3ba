//! Recursive parameter filters for online inverse optimal control.
//!
//! The unknown θ is a random walk `θ_t = θ_{t-1} + w_t`, `w_t ~ N(0, Q_t)`,
//! observed through `y_t = F g_t(θ) + v_t`, where `g_t(θ) = [x_t; u_t]` of
//! the optimal trajectory at θ.

mod ekf;
mod ukf;

pub use ekf::{ekf_step, ExtendedKalmanFilter};
pub use ukf::{ukf_step, unscented_update, UkfParams, UnscentedKalmanFilter, UnscentedUpdate};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, IocError, Result};
use crate::linalg::{asymmetry, cholesky, min_eigenvalue, symmetrize};
use crate::measurement::MeasurementRecord;
use crate::solver::SolverOptions;

/// Default constant process noise level `q̲` in `Q_t = q̲ I`.
pub const DEFAULT_PROCESS_NOISE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub time: usize,
}

/// Belief at time 0. `P_0` must be symmetric positive definite.
pub fn prior(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<FilterBelief> {
    check_dim("prior covariance rows", mean.len(), covariance.nrows())?;
    check_dim("prior covariance columns", mean.len(), covariance.ncols())?;
    if asymmetry(&covariance) > 1e-10 {
        return Err(IocError::Contract("prior covariance is not symmetric".into()));
    }
    if !(min_eigenvalue(&covariance) > 0.0) {
        return Err(IocError::Contract("prior covariance is not positive definite".into()));
    }
    Ok(FilterBelief {
        mean,
        covariance: symmetrize(&covariance),
        time: 0,
    })
}

/// `Q_t` for each step.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessNoise {
    Constant(DMatrix<f64>),
    /// Entry `t - 1` is used at step `t`.
    Schedule(Vec<DMatrix<f64>>),
}

impl ProcessNoise {
    pub fn isotropic(n: usize, level: f64) -> Self {
        ProcessNoise::Constant(DMatrix::identity(n, n) * level)
    }

    pub fn at(&self, t: usize) -> Result<&DMatrix<f64>> {
        match self {
            ProcessNoise::Constant(q) => Ok(q),
            ProcessNoise::Schedule(qs) => t
                .checked_sub(1)
                .and_then(|i| qs.get(i))
                .ok_or_else(|| IocError::Contract(format!("no process noise scheduled for step {t}"))),
        }
    }

    fn matrices(&self) -> Box<dyn Iterator<Item = &DMatrix<f64>> + '_> {
        match self {
            ProcessNoise::Constant(q) => Box::new(std::iter::once(q)),
            ProcessNoise::Schedule(qs) => Box::new(qs.iter()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfOptions {
    pub process_noise: ProcessNoise,
    pub prior_mean: DVector<f64>,
    pub prior_covariance: DMatrix<f64>,
    pub solver: SolverOptions,
}

impl EkfOptions {
    /// `θ̂_0 = 1`, `P_0 = I`, `Q_t = 1e-8 I`.
    pub fn defaults(param_dim: usize) -> Self {
        Self {
            process_noise: ProcessNoise::isotropic(param_dim, DEFAULT_PROCESS_NOISE),
            prior_mean: DVector::from_element(param_dim, 1.0),
            prior_covariance: DMatrix::identity(param_dim, param_dim),
            solver: SolverOptions::default(),
        }
    }

    pub fn with_process_noise(mut self, level: f64) -> Self {
        self.process_noise = ProcessNoise::isotropic(self.prior_mean.len(), level);
        self
    }

    pub fn prior(&self) -> Result<FilterBelief> {
        prior(self.prior_mean.clone(), self.prior_covariance.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let n = self.prior_mean.len();
        for q in self.process_noise.matrices() {
            check_dim("process noise", n, q.nrows())?;
            check_dim("process noise", n, q.ncols())?;
            if asymmetry(q) > 1e-10 || min_eigenvalue(q) < -1e-12 {
                return Err(IocError::Contract("process noise must be symmetric PSD".into()));
            }
        }
        self.prior().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: usize,
    /// `y_t - F g_t(θ̂_{t-1})`.
    pub innovation: DVector<f64>,
    pub gain: DMatrix<f64>,
    /// `G_t`; only the EKF forms it.
    pub jacobian: Option<DMatrix<f64>>,
    pub jacobian_norm: Option<f64>,
    /// `P_{t|t-1}`.
    pub predicted_covariance: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub wall_time: f64,
    pub ocp_solve_count: usize,
}

/// Result of one linear Kalman measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanUpdate {
    pub gain: DMatrix<f64>,
    pub correction: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// `K = P Gᵀ (G P Gᵀ + R)⁻¹`, correction `K ν`, and `P - K G P` symmetrized.
pub fn kalman_update(
    predicted: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    innovation: &DVector<f64>,
) -> Result<KalmanUpdate> {
    check_dim("jacobian rows", innovation.len(), jacobian.nrows())?;
    check_dim("jacobian columns", predicted.nrows(), jacobian.ncols())?;
    check_dim("measurement noise", innovation.len(), noise.nrows())?;
    let gp = jacobian * predicted;
    let s = symmetrize(&(&gp * jacobian.transpose() + noise));
    let chol = cholesky(&s).ok_or(IocError::Factorization("innovation covariance"))?;
    let gain = chol.solve(&gp).transpose();
    let correction = &gain * innovation;
    let covariance = symmetrize(&(predicted - &gain * gp));
    Ok(KalmanUpdate {
        gain,
        correction,
        covariance,
    })
}

/// `(I - K G) P (I - K G)ᵀ + K R Kᵀ`.
pub fn joseph_covariance(
    predicted: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    noise: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = predicted.nrows();
    let a = DMatrix::identity(n, n) - gain * jacobian;
    &a * predicted * a.transpose() + gain * noise * gain.transpose()
}

/// Common interface of the two filters.
pub trait ParameterFilter {
    fn name(&self) -> &'static str;
    fn belief(&self) -> &FilterBelief;
    /// Consume `y_t` with `t = belief.time + 1`.
    fn step(&mut self, record: &MeasurementRecord) -> Result<StepReport>;
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prior: FilterBelief,
    pub history: Vec<(FilterBelief, StepReport)>,
    /// Set when a step failed; `history` holds the steps completed before it.
    pub error: Option<IocError>,
}

impl RunOutcome {
    pub fn final_belief(&self) -> &FilterBelief {
        self.history.last().map(|(b, _)| b).unwrap_or(&self.prior)
    }

    pub fn into_result(self) -> Result<Self> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Fold the filter over the records in order. `y_0` is skipped.
pub fn run_filter<'a, F, I>(filter: &mut F, records: I) -> RunOutcome
where
    F: ParameterFilter + ?Sized,
    I: IntoIterator<Item = &'a MeasurementRecord>,
{
    let prior = filter.belief().clone();
    let mut history = Vec::new();
    for record in records {
        if record.t == 0 {
            continue;
        }
        match filter.step(record) {
            Ok(report) => history.push((filter.belief().clone(), report)),
            Err(e) => {
                return RunOutcome {
                    prior,
                    history,
                    error: Some(e),
                }
            }
        }
    }
    RunOutcome {
        prior,
        history,
        error: None,
    }
}

pub(crate) fn check_step_index(belief: &FilterBelief, record: &MeasurementRecord, horizon: usize) -> Result<()> {
    if record.t != belief.time + 1 {
        return Err(IocError::Contract(format!(
            "expected measurement at t = {}, got t = {}",
            belief.time + 1,
            record.t
        )));
    }
    if record.t >= horizon {
        return Err(IocError::Contract(format!("measurement index {} outside 1..{horizon}", record.t)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_eigenvalue;

    fn m(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }

    #[test]
    fn scalar_gain_is_half() {
        let nu = 0.8;
        let up = kalman_update(&m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &DVector::from_element(1, nu)).unwrap();
        assert!((up.gain[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((up.correction[0] - nu / 2.0).abs() < 1e-15);
        assert!((up.covariance[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_jacobian_leaves_belief() {
        let p = m(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let up = kalman_update(&p, &DMatrix::zeros(3, 2), &(DMatrix::identity(3, 3) * 1e-3), &DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(up.gain, DMatrix::zeros(2, 3));
        assert_eq!(up.correction, DVector::zeros(2));
        assert_eq!(up.covariance, p);
    }

    #[test]
    fn gain_scales_with_large_noise() {
        let p = m(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let g = m(3, 2, &[1.0, 0.0, 0.5, 2.0, -1.0, 0.3]);
        let r = DMatrix::identity(3, 3) * 1e-2;
        let nu = DVector::from_element(3, 0.1);
        let k1 = kalman_update(&p, &g, &r, &nu).unwrap().gain.norm();
        let k2 = kalman_update(&p, &g, &(&r * 1e6), &nu).unwrap().gain.norm();
        // For R ≫ G P Gᵀ the gain is ≈ P Gᵀ R⁻¹.
        let approx = (&p * g.transpose() * (&r * 1e6).try_inverse().unwrap()).norm();
        assert!((k2 / approx - 1.0).abs() < 1e-3);
        assert!(k2 / k1 < 1e-3);
    }

    #[test]
    fn joseph_form_and_contraction() {
        let p = m(2, 2, &[1.5, -0.4, -0.4, 0.8]);
        let g = m(3, 2, &[0.3, 1.0, -2.0, 0.5, 0.7, 0.7]);
        let r = m(3, 3, &[0.1, 0.01, 0.0, 0.01, 0.2, 0.0, 0.0, 0.0, 0.05]);
        let up = kalman_update(&p, &g, &r, &DVector::zeros(3)).unwrap();
        let joseph = joseph_covariance(&p, &up.gain, &g, &r);
        assert!((&joseph - &up.covariance).amax() < 1e-12);
        assert!(max_eigenvalue(&(&up.covariance - &p)) <= 1e-10);
    }

    #[test]
    fn prior_validation() {
        assert!(prior(DVector::zeros(2), DMatrix::identity(2, 2)).is_ok());
        assert!(prior(DVector::zeros(2), m(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(prior(DVector::zeros(2), m(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        assert!(prior(DVector::zeros(3), DMatrix::identity(2, 2)).is_err());
        let b = EkfOptions::defaults(4).prior().unwrap();
        assert_eq!(b.mean, DVector::from_element(4, 1.0));
        assert_eq!(b.covariance, DMatrix::identity(4, 4));
        assert_eq!(b.time, 0);
    }

    #[test]
    fn process_noise_lookup() {
        let c = ProcessNoise::isotropic(2, 1e-8);
        assert_eq!(c.at(17).unwrap(), &(DMatrix::identity(2, 2) * 1e-8));
        let s = ProcessNoise::Schedule(vec![DMatrix::identity(1, 1), DMatrix::zeros(1, 1)]);
        assert_eq!(s.at(2).unwrap(), &DMatrix::zeros(1, 1));
        assert!(s.at(0).is_err());
        assert!(s.at(3).is_err());
        let mut o = EkfOptions::defaults(2);
        o.process_noise = ProcessNoise::Constant(m(2, 2, &[-1.0, 0.0, 0.0, 1.0]));
        assert!(o.validate().is_err());
        assert!(EkfOptions::defaults(2).with_process_noise(0.0).validate().is_ok());
    }
}
