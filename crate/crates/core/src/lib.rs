//! Online inverse optimal control.
//!
//! Estimates the cost weights θ of a discrete-time optimal control problem
//! from a stream of noisy state/control measurements. The main estimator is an
//! extended Kalman filter over θ whose measurement Jacobian is obtained by
//! differentiating through the optimal trajectory with Pontryagin's
//! conditions ([`pdp`]). An unscented filter is provided as a baseline.
//!
//! ```
//! use ioc_core::{benchmarks, filters, measurement, solver};
//!
//! let spec = benchmarks::pendulum();
//! let truth = solver::solve(&spec.model, &spec.ground_truth, &Default::default(), None).unwrap();
//! let f = measurement::selection_matrix(measurement::MeasurementMode::Full, 2, 1).unwrap();
//! let noise = measurement::NoiseModel::new(spec.noise_covariance(3), 7).unwrap();
//! let ys = measurement::simulate_measurements(&truth, &f, &noise).unwrap();
//!
//! let mut ekf = filters::ExtendedKalmanFilter::new(
//!     spec.model.clone(),
//!     f,
//!     spec.noise_covariance(3),
//!     filters::EkfOptions::defaults(2),
//! )
//! .unwrap();
//! let run = filters::run_filter(&mut ekf, &ys);
//! let est = &run.final_belief().mean;
//! assert!((est - &spec.ground_truth).norm() / spec.ground_truth.norm() < 0.05);
//! ```

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod cost;
pub mod diagnostics;
mod error;
pub mod filters;
pub mod finite_diff;
pub mod linalg;
pub mod measurement;
pub mod pdp;
pub mod solver;
pub mod system;

pub use error::{IocError, Result};

pub use benchmarks::{BenchmarkConfig, BenchmarkSpec};
pub use diagnostics::{check_bounds, error_trace, BoundThresholds, BoundednessReport, ErrorTrace};
pub use filters::{
    prior, run_filter, EkfOptions, ExtendedKalmanFilter, FilterBelief, ParameterFilter, ProcessNoise, RunOutcome,
    StepReport, UkfParams, UnscentedKalmanFilter,
};
pub use measurement::{MeasurementMode, MeasurementRecord, NoiseModel, SelectionMatrix};
pub use pdp::{AuxiliaryRecursionState, CostateSequence, SensitivityPair};
pub use solver::{SolverOptions, Trajectory};
pub use system::{Dynamics, HamiltonianBlocks, Objective, ParamVector, SystemModel, TerminalBlocks};

pub use nalgebra::{DMatrix, DVector};
