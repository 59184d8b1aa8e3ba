use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_step_index, EkfOptions, FilterBelief, ParameterFilter, StepReport};
use crate::error::{check_dim, IocError, Result};
use crate::linalg::{cholesky, symmetrize};
use crate::measurement::{MeasurementRecord, SelectionMatrix};
use crate::solver::{solve, SolverOptions, Trajectory};
use crate::system::SystemModel;

/// Scaled sigma-point spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

impl UkfParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > 0.0) || !(dim as f64 + self.kappa > 0.0) || !self.beta.is_finite() {
            return Err(IocError::Contract("sigma-point spread must be positive".into()));
        }
        Ok(())
    }

    fn lambda(&self, dim: usize) -> f64 {
        let n = dim as f64;
        self.alpha * self.alpha * (n + self.kappa) - n
    }

    /// Mean and covariance weights for `2N + 1` points.
    pub fn weights(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let n = dim as f64;
        let lambda = self.lambda(dim);
        let w0 = lambda / (n + lambda);
        let wi = 0.5 / (n + lambda);
        let mut wm = vec![wi; 2 * dim + 1];
        let mut wc = wm.clone();
        wm[0] = w0;
        wc[0] = w0 + 1.0 - self.alpha * self.alpha + self.beta;
        (wm, wc)
    }

    /// `θ̂`, then `θ̂ ± column_i(√((N + λ) P))`.
    pub fn sigma_points(&self, mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
        let dim = mean.len();
        self.validate(dim)?;
        let scaled = covariance * (dim as f64 + self.lambda(dim));
        let root = cholesky(&scaled)
            .or_else(|| cholesky(&(&scaled + DMatrix::identity(dim, dim) * 1e-12)))
            .ok_or(IocError::Factorization("sigma-point covariance square root"))?
            .l();
        let mut points = Vec::with_capacity(2 * dim + 1);
        points.push(mean.clone());
        for i in 0..dim {
            points.push(mean + root.column(i));
        }
        for i in 0..dim {
            points.push(mean - root.column(i));
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnscentedUpdate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub predicted_measurement: DVector<f64>,
    /// Measurement map at the centre point, `h(θ̂)`.
    pub central_measurement: DVector<f64>,
}

/// Unscented measurement update of `(mean, predicted)` through `map`.
pub fn unscented_update<M>(
    mean: &DVector<f64>,
    predicted: &DMatrix<f64>,
    y: &DVector<f64>,
    noise: &DMatrix<f64>,
    params: &UkfParams,
    mut map: M,
) -> Result<UnscentedUpdate>
where
    M: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let dim = mean.len();
    let points = params.sigma_points(mean, predicted)?;
    let (wm, wc) = params.weights(dim);
    let images = points.iter().map(&mut map).collect::<Result<Vec<_>>>()?;
    let q = y.len();
    for img in &images {
        check_dim("sigma-point measurement", q, img.len())?;
    }
    check_dim("measurement noise", q, noise.nrows())?;

    let y_hat = images.iter().zip(&wm).fold(DVector::zeros(q), |acc, (img, w)| acc + img * *w);
    let mut s = noise.clone();
    let mut cross = DMatrix::zeros(dim, q);
    for ((pt, img), w) in points.iter().zip(&images).zip(&wc) {
        let dy = img - &y_hat;
        let dx = pt - mean;
        s += &dy * dy.transpose() * *w;
        cross += &dx * dy.transpose() * *w;
    }
    let s = symmetrize(&s);
    let chol = cholesky(&s).ok_or(IocError::Factorization("innovation covariance"))?;
    let gain = chol.solve(&cross.transpose()).transpose();
    let new_mean = mean + &gain * (y - &y_hat);
    let covariance = symmetrize(&(predicted - &gain * &s * gain.transpose()));
    Ok(UnscentedUpdate {
        mean: new_mean,
        covariance,
        gain,
        predicted_measurement: y_hat,
        central_measurement: images[0].clone(),
    })
}

/// One UKF step; each sigma point costs one forward solve.
#[allow(clippy::too_many_arguments)]
pub fn ukf_step(
    belief: &FilterBelief,
    record: &MeasurementRecord,
    model: &SystemModel,
    selection: &SelectionMatrix,
    noise: &DMatrix<f64>,
    process_noise: &DMatrix<f64>,
    solver: &SolverOptions,
    params: &UkfParams,
    warm_start: Option<&Trajectory>,
) -> Result<(FilterBelief, StepReport, Trajectory)> {
    check_step_index(belief, record, model.horizon())?;
    check_dim("measurement", selection.output_dim(), record.y.len())?;
    let started = Instant::now();
    let t = record.t;

    let predicted = symmetrize(&(&belief.covariance + process_noise));
    let mut solves = 0usize;
    let mut central: Option<Trajectory> = None;
    let update = unscented_update(&belief.mean, &predicted, &record.y, noise, params, |theta| {
        let traj = solve(model, theta, solver, central.as_ref().or(warm_start))?;
        solves += 1;
        let g = selection.apply(traj.state(t), traj.control(t))?;
        if central.is_none() {
            central = Some(traj);
        }
        Ok(g)
    })?;
    let trajectory = central.expect("centre sigma point solved");

    let posterior = FilterBelief {
        mean: update.mean,
        covariance: update.covariance,
        time: t,
    };
    let report = StepReport {
        t,
        innovation: &record.y - &update.central_measurement,
        gain: update.gain,
        jacobian: None,
        jacobian_norm: None,
        predicted_covariance: predicted,
        process_noise: process_noise.clone(),
        wall_time: started.elapsed().as_secs_f64(),
        ocp_solve_count: solves,
    };
    Ok((posterior, report, trajectory))
}

#[derive(Debug, Clone)]
pub struct UnscentedKalmanFilter {
    model: SystemModel,
    selection: SelectionMatrix,
    noise: DMatrix<f64>,
    options: EkfOptions,
    params: UkfParams,
    belief: FilterBelief,
    warm: Option<Trajectory>,
}

impl UnscentedKalmanFilter {
    pub fn new(
        model: SystemModel,
        selection: SelectionMatrix,
        noise: DMatrix<f64>,
        options: EkfOptions,
        params: UkfParams,
    ) -> Result<Self> {
        options.validate()?;
        params.validate(model.param_dim())?;
        check_dim("prior mean", model.param_dim(), options.prior_mean.len())?;
        check_dim("selection matrix columns", model.state_dim() + model.control_dim(), selection.matrix().ncols())?;
        check_dim("measurement noise rows", selection.output_dim(), noise.nrows())?;
        check_dim("measurement noise columns", selection.output_dim(), noise.ncols())?;
        let belief = options.prior()?;
        Ok(Self {
            model,
            selection,
            noise,
            options,
            params,
            belief,
            warm: None,
        })
    }
}

impl ParameterFilter for UnscentedKalmanFilter {
    fn name(&self) -> &'static str {
        "ukf"
    }

    fn belief(&self) -> &FilterBelief {
        &self.belief
    }

    fn step(&mut self, record: &MeasurementRecord) -> Result<StepReport> {
        let q = self.options.process_noise.at(record.t)?;
        let warm = if self.options.solver.warm_start { self.warm.as_ref() } else { None };
        let (belief, report, trajectory) = ukf_step(
            &self.belief,
            record,
            &self.model,
            &self.selection,
            &self.noise,
            q,
            &self.options.solver,
            &self.params,
            warm,
        )?;
        self.belief = belief;
        self.warm = Some(trajectory);
        Ok(report)
    }
}
