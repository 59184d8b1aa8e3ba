use std::time::Instant;

use nalgebra::DMatrix;

use super::{check_step_index, kalman_update, EkfOptions, FilterBelief, ParameterFilter, StepReport};
use crate::error::{check_dim, Result};
use crate::linalg::{spectral_norm, symmetrize};
use crate::measurement::{MeasurementRecord, SelectionMatrix};
use crate::pdp;
use crate::solver::{solve, SolverOptions, Trajectory};
use crate::system::SystemModel;

/// One EKF step. Returns the posterior, the report, and the trajectory at
/// `θ̂_{t-1}` for warm-starting the next step.
#[allow(clippy::too_many_arguments)]
pub fn ekf_step(
    belief: &FilterBelief,
    record: &MeasurementRecord,
    model: &SystemModel,
    selection: &SelectionMatrix,
    noise: &DMatrix<f64>,
    process_noise: &DMatrix<f64>,
    solver: &SolverOptions,
    warm_start: Option<&Trajectory>,
) -> Result<(FilterBelief, StepReport, Trajectory)> {
    check_step_index(belief, record, model.horizon())?;
    check_dim("measurement", selection.output_dim(), record.y.len())?;
    let started = Instant::now();
    let t = record.t;

    let predicted = symmetrize(&(&belief.covariance + process_noise));
    let trajectory = solve(model, &belief.mean, solver, warm_start)?;
    let mut solves = 1;
    // The auxiliary LQ problem is the second.
    let sens = pdp::jacobian(t, &belief.mean, &trajectory, selection.matrix(), model)?;
    solves += 1;
    let predicted_y = selection.apply(trajectory.state(t), trajectory.control(t))?;
    let innovation = &record.y - predicted_y;
    let update = kalman_update(&predicted, &sens.jacobian, noise, &innovation)?;

    let posterior = FilterBelief {
        mean: &belief.mean + &update.correction,
        covariance: update.covariance,
        time: t,
    };
    let report = StepReport {
        t,
        innovation,
        gain: update.gain,
        jacobian_norm: Some(spectral_norm(&sens.jacobian)),
        jacobian: Some(sens.jacobian),
        predicted_covariance: predicted,
        process_noise: process_noise.clone(),
        wall_time: started.elapsed().as_secs_f64(),
        ocp_solve_count: solves,
    };
    Ok((posterior, report, trajectory))
}

#[derive(Debug, Clone)]
pub struct ExtendedKalmanFilter {
    model: SystemModel,
    selection: SelectionMatrix,
    noise: DMatrix<f64>,
    options: EkfOptions,
    belief: FilterBelief,
    warm: Option<Trajectory>,
}

impl ExtendedKalmanFilter {
    pub fn new(model: SystemModel, selection: SelectionMatrix, noise: DMatrix<f64>, options: EkfOptions) -> Result<Self> {
        options.validate()?;
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
            belief,
            warm: None,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }
}

impl ParameterFilter for ExtendedKalmanFilter {
    fn name(&self) -> &'static str {
        "ekf"
    }

    fn belief(&self) -> &FilterBelief {
        &self.belief
    }

    fn step(&mut self, record: &MeasurementRecord) -> Result<StepReport> {
        let q = self.options.process_noise.at(record.t)?;
        let warm = if self.options.solver.warm_start { self.warm.as_ref() } else { None };
        let (belief, report, trajectory) = ekf_step(
            &self.belief,
            record,
            &self.model,
            &self.selection,
            &self.noise,
            q,
            &self.options.solver,
            warm,
        )?;
        self.belief = belief;
        self.warm = Some(trajectory);
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::run_filter;
    use crate::measurement::{selection_matrix, simulate_measurements, MeasurementMode, NoiseModel};
    use crate::system::{FnObjective, LinearDynamics};
    use nalgebra::DVector;

    /// x_{t+1} = x_t + u_t, c_t = θ (x - 1)^2 + u^2, c_T = θ (x - 1)^2.
    fn scalar_model(horizon: usize) -> SystemModel {
        let dynamics = LinearDynamics::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let objective = FnObjective::new(
            1,
            |_, x, u, th| th[0] * (x[0] - 1.0).powi(2) + u[0] * u[0],
            |x, th| th[0] * (x[0] - 1.0).powi(2),
        );
        SystemModel::new(dynamics, objective, DVector::from_element(1, 0.0), horizon).unwrap()
    }

    fn records_at(model: &SystemModel, theta: &DVector<f64>, mode: MeasurementMode) -> (SelectionMatrix, Vec<MeasurementRecord>) {
        let traj = solve(model, theta, &SolverOptions::default(), None).unwrap();
        let f = selection_matrix(mode, model.state_dim(), model.control_dim()).unwrap();
        let q = f.output_dim();
        let records = simulate_measurements(&traj, &f, &NoiseModel::noiseless(q, 0)).unwrap();
        (f, records)
    }

    #[test]
    fn empty_sequence_returns_prior() {
        let spec = crate::benchmarks::pendulum();
        let f = selection_matrix(MeasurementMode::Full, 2, 1).unwrap();
        let mut ekf = ExtendedKalmanFilter::new(spec.model.clone(), f, spec.noise_covariance(3), EkfOptions::defaults(2)).unwrap();
        let out = run_filter(&mut ekf, &[]);
        assert!(out.history.is_empty());
        assert_eq!(out.final_belief(), &EkfOptions::defaults(2).prior().unwrap());
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let spec = crate::benchmarks::pendulum();
        let (f, records) = records_at(&spec.model, &spec.ground_truth, MeasurementMode::Full);
        let mut options = EkfOptions::defaults(2);
        options.prior_mean = spec.ground_truth.clone();
        let mut ekf = ExtendedKalmanFilter::new(spec.model.clone(), f, spec.noise_covariance(3), options).unwrap();
        let out = run_filter(&mut ekf, &records).into_result().unwrap();
        assert_eq!(out.history.len(), spec.horizon() - 1);
        for (belief, report) in &out.history {
            assert!(report.innovation.amax() < 1e-7, "t={} {}", report.t, report.innovation.amax());
            assert!((&belief.mean - &spec.ground_truth).amax() < 1e-5);
            assert_eq!(report.ocp_solve_count, 2);
        }
    }

    #[test]
    fn scalar_error_non_increasing_without_noise() {
        let model = scalar_model(10);
        let truth = DVector::from_element(1, 3.0);
        let (f, records) = records_at(&model, &truth, MeasurementMode::Full);
        let noise = DMatrix::identity(2, 2) * 1e-6;
        let mut ekf = ExtendedKalmanFilter::new(model, f, noise, EkfOptions::defaults(1)).unwrap();
        let out = run_filter(&mut ekf, &records).into_result().unwrap();
        let errs: Vec<f64> = out.history.iter().map(|(b, _)| (b.mean[0] - 3.0).abs()).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{errs:?}");
        }
        assert!(errs.last().unwrap() < &errs[0], "{errs:?}");
    }

    #[test]
    fn rejects_out_of_order_measurements() {
        let model = scalar_model(5);
        let (f, records) = records_at(&model, &DVector::from_element(1, 2.0), MeasurementMode::Full);
        let mut ekf = ExtendedKalmanFilter::new(model, f, DMatrix::identity(2, 2), EkfOptions::defaults(1)).unwrap();
        assert!(ekf.step(&records[2]).is_err());
        ekf.step(&records[1]).unwrap();
        assert!(ekf.step(&records[1]).is_err());
    }

    #[test]
    fn construction_checks_dimensions() {
        let model = scalar_model(5);
        let f = selection_matrix(MeasurementMode::Full, 1, 1).unwrap();
        assert!(ExtendedKalmanFilter::new(model.clone(), f.clone(), DMatrix::identity(3, 3), EkfOptions::defaults(1)).is_err());
        assert!(ExtendedKalmanFilter::new(model, f, DMatrix::identity(2, 2), EkfOptions::defaults(2)).is_err());
    }
}
