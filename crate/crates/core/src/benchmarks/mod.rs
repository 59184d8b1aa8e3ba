//! Benchmark problems with ground-truth parameters and measurement noise levels.
//!
//! Each benchmark is described by a serializable [`BenchmarkConfig`]; the
//! dynamics constants, horizons, goals and the control weight are fixed
//! project choices and live in the config so runs are reproducible.

mod cartpole;
mod pendulum;
mod robot_arm;
#[cfg(feature = "extended-benchmarks")]
mod rigid_body;

pub use cartpole::CartPole;
pub use pendulum::Pendulum;
pub use robot_arm::RobotArm;
#[cfg(feature = "extended-benchmarks")]
pub use rigid_body::{Quadrotor, RocketLanding};

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::{DeviationFeature, FeatureCost};
use crate::error::{check_dim, IocError, Result};
use crate::measurement::MeasurementMode;
use crate::system::{Dynamics, SystemModel};

/// Control penalty `r` in `c_t = Σ θ_i φ_i(x) + r‖u‖²` for every benchmark.
pub const CONTROL_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    Pendulum(Pendulum),
    CartPole(CartPole),
    RobotArm(RobotArm),
    #[cfg(feature = "extended-benchmarks")]
    Quadrotor(Quadrotor),
    #[cfg(feature = "extended-benchmarks")]
    RocketLanding(RocketLanding),
}

impl SystemKind {
    fn dynamics(&self) -> Arc<dyn Dynamics> {
        match *self {
            SystemKind::Pendulum(p) => Arc::new(p),
            SystemKind::CartPole(c) => Arc::new(c),
            SystemKind::RobotArm(r) => Arc::new(r),
            #[cfg(feature = "extended-benchmarks")]
            SystemKind::Quadrotor(q) => Arc::new(q),
            #[cfg(feature = "extended-benchmarks")]
            SystemKind::RocketLanding(r) => Arc::new(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub name: String,
    pub system: SystemKind,
    pub horizon: usize,
    pub initial_state: Vec<f64>,
    pub features: Vec<DeviationFeature>,
    pub control_weight: f64,
    pub ground_truth: Vec<f64>,
    /// Diagonal entry of `R = σ² I_q`.
    pub noise_variance: f64,
    pub measurement_mode: MeasurementMode,
}

impl BenchmarkConfig {
    pub fn build(&self) -> Result<BenchmarkSpec> {
        let dynamics = self.system.dynamics();
        let n = dynamics.state_dim();
        let m = dynamics.control_dim();
        let cost = FeatureCost::new(n, m, self.features.clone(), self.control_weight)?;
        check_dim("ground truth", self.features.len(), self.ground_truth.len())?;
        if !(self.noise_variance > 0.0) {
            return Err(IocError::Contract("noise variance must be positive".into()));
        }
        let model = SystemModel::from_parts(
            dynamics,
            Arc::new(cost),
            DVector::from_column_slice(&self.initial_state),
            self.horizon,
        )?;
        Ok(BenchmarkSpec {
            name: self.name.clone(),
            model,
            ground_truth: DVector::from_column_slice(&self.ground_truth),
            noise_variance: self.noise_variance,
            default_mode: self.measurement_mode,
            config: self.clone(),
        })
    }
}

/// A ready-to-use benchmark: model, θ*, and noise level.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub name: String,
    pub model: SystemModel,
    pub ground_truth: DVector<f64>,
    pub noise_variance: f64,
    pub default_mode: MeasurementMode,
    pub config: BenchmarkConfig,
}

impl BenchmarkSpec {
    /// `R = σ² I_q`.
    pub fn noise_covariance(&self, q: usize) -> DMatrix<f64> {
        DMatrix::identity(q, q) * self.noise_variance
    }

    /// `q` under full measurement (`n + m`).
    pub fn full_measurement_dim(&self) -> usize {
        self.model.state_dim() + self.model.control_dim()
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon()
    }
}

fn per_state_features(goal: &[f64]) -> Vec<DeviationFeature> {
    goal.iter()
        .enumerate()
        .map(|(i, &g)| DeviationFeature::single(i, g))
        .collect()
}

pub fn pendulum_config() -> BenchmarkConfig {
    BenchmarkConfig {
        name: "pendulum".into(),
        system: SystemKind::Pendulum(Pendulum::default()),
        horizon: 50,
        initial_state: vec![0.0, 0.0],
        features: per_state_features(&[PI, 0.0]),
        control_weight: CONTROL_WEIGHT,
        ground_truth: vec![1.0, 10.0],
        noise_variance: 1e-7,
        measurement_mode: MeasurementMode::Full,
    }
}

pub fn cartpole_config() -> BenchmarkConfig {
    BenchmarkConfig {
        name: "cartpole".into(),
        system: SystemKind::CartPole(CartPole::default()),
        horizon: 60,
        // Tilted 0.5 rad off upright, cart 1 m from the goal.
        initial_state: vec![-1.0, PI - 0.5, 0.0, 0.0],
        features: per_state_features(&[0.0, PI, 0.0, 0.0]),
        control_weight: CONTROL_WEIGHT,
        ground_truth: vec![2.0, 4.0, 1.5, 1.0],
        noise_variance: 1e-6,
        measurement_mode: MeasurementMode::Full,
    }
}

pub fn robot_arm_config() -> BenchmarkConfig {
    BenchmarkConfig {
        name: "robot_arm".into(),
        system: SystemKind::RobotArm(RobotArm::default()),
        horizon: 50,
        initial_state: vec![0.0; 4],
        features: per_state_features(&[PI / 2.0, PI / 2.0, 0.0, 0.0]),
        control_weight: CONTROL_WEIGHT,
        ground_truth: vec![1.0, 1.5, 2.0, 0.5],
        noise_variance: 1e-5,
        measurement_mode: MeasurementMode::Full,
    }
}

fn build_builtin(config: BenchmarkConfig) -> BenchmarkSpec {
    config.build().expect("built-in benchmark config is valid")
}

pub fn pendulum() -> BenchmarkSpec {
    build_builtin(pendulum_config())
}

pub fn cartpole() -> BenchmarkSpec {
    build_builtin(cartpole_config())
}

pub fn robot_arm() -> BenchmarkSpec {
    build_builtin(robot_arm_config())
}

#[cfg(feature = "extended-benchmarks")]
pub use rigid_body::{quadrotor, quadrotor_config, rocket_landing, rocket_landing_config};

/// Benchmarks required for acceptance.
pub const REQUIRED: [&str; 3] = ["pendulum", "cartpole", "robot_arm"];

pub fn names() -> Vec<&'static str> {
    #[allow(unused_mut)]
    let mut names = REQUIRED.to_vec();
    #[cfg(feature = "extended-benchmarks")]
    names.extend(["quadrotor", "rocket_landing"]);
    names
}

pub fn config_by_name(name: &str) -> Option<BenchmarkConfig> {
    match name {
        "pendulum" => Some(pendulum_config()),
        "cartpole" | "cart_pole" => Some(cartpole_config()),
        "robot_arm" | "robotarm" => Some(robot_arm_config()),
        #[cfg(feature = "extended-benchmarks")]
        "quadrotor" => Some(quadrotor_config()),
        #[cfg(feature = "extended-benchmarks")]
        "rocket_landing" | "rocket" => Some(rocket_landing_config()),
        _ => None,
    }
}

pub fn by_name(name: &str) -> Option<BenchmarkSpec> {
    config_by_name(name).map(build_builtin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::solver::{solve, SolverOptions};
    use crate::system::derivative_check;

    #[test]
    fn dimensions_match_table() {
        let table = [("pendulum", 3, 2, 1e-7), ("cartpole", 5, 4, 1e-6), ("robot_arm", 6, 4, 1e-5)];
        for (name, q, big_n, noise) in table {
            let spec = by_name(name).unwrap();
            assert_eq!(spec.full_measurement_dim(), q, "{name}");
            assert_eq!(spec.model.param_dim(), big_n, "{name}");
            assert_eq!(spec.noise_variance, noise, "{name}");
            assert_eq!(spec.noise_covariance(q), DMatrix::identity(q, q) * noise);
        }
    }

    #[test]
    fn ground_truth_parameters() {
        assert_eq!(pendulum().ground_truth.as_slice(), &[1.0, 10.0]);
        assert_eq!(cartpole().ground_truth.as_slice(), &[2.0, 4.0, 1.5, 1.0]);
        assert_eq!(robot_arm().ground_truth.as_slice(), &[1.0, 1.5, 2.0, 0.5]);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let points: [(&str, Vec<f64>, Vec<f64>); 3] = [
            ("pendulum", vec![0.3, -0.2], vec![0.5]),
            ("cartpole", vec![0.2, 1.1, -0.4, 0.9], vec![1.5]),
            ("robot_arm", vec![0.3, 1.2, -0.5, 0.8], vec![0.7, -1.3]),
        ];
        for (name, x, u) in points {
            let spec = by_name(name).unwrap();
            let n = x.len();
            let p = DVector::from_fn(n, |i, _| 0.5 - 0.3 * i as f64);
            let check = derivative_check(
                &spec.model,
                1,
                &DVector::from_vec(x),
                &DVector::from_vec(u),
                &p,
                &spec.ground_truth,
            )
            .unwrap();
            assert!(check.dynamics_jacobian < 1e-6, "{name}: {check:?}");
            assert!(check.hamiltonian_blocks < 1e-5, "{name}: {check:?}");
        }
    }

    #[test]
    fn ground_truth_solves_converge_with_positive_huu() {
        for name in REQUIRED {
            let spec = by_name(name).unwrap();
            let traj = solve(&spec.model, &spec.ground_truth, &SolverOptions::default(), None)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            let costates = crate::pdp::costates(&spec.model, &traj, &spec.ground_truth).unwrap();
            for k in 0..spec.horizon() {
                let blocks = spec
                    .model
                    .hamiltonian_blocks(k, traj.state(k), traj.control(k), costates.next(k), &spec.ground_truth)
                    .unwrap();
                assert!(min_eigenvalue(&blocks.huu) >= 2.0 * CONTROL_WEIGHT - 1e-8, "{name} k={k}");
            }
        }
    }

    #[test]
    fn unknown_name() {
        assert!(by_name("unicycle").is_none());
        assert_eq!(names()[..3], REQUIRED);
    }

    #[test]
    fn rejects_mismatched_ground_truth() {
        let mut c = pendulum_config();
        c.ground_truth.push(1.0);
        assert!(c.build().is_err());
    }
}
