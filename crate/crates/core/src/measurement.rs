//! Measurement model `y_t = F g_t(θ) + v_t` with `v_t ~ N(0, R)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, IocError, Result};
use crate::linalg::{asymmetry, cholesky, concat, min_eigenvalue};
use crate::solver::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    #[default]
    Full,
    States,
    Controls,
    Custom,
}

impl MeasurementMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementMode::Full => "full",
            MeasurementMode::States => "states",
            MeasurementMode::Controls => "controls",
            MeasurementMode::Custom => "custom",
        }
    }
}

impl std::str::FromStr for MeasurementMode {
    type Err = IocError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MeasurementMode::Full),
            "states" | "states_only" => Ok(MeasurementMode::States),
            "controls" | "controls_only" => Ok(MeasurementMode::Controls),
            "custom" => Ok(MeasurementMode::Custom),
            other => Err(IocError::Contract(format!("unknown measurement mode `{other}`"))),
        }
    }
}

/// `F ∈ R^{q×(n+m)}` with the pattern it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    matrix: DMatrix<f64>,
    mode: MeasurementMode,
    state_dim: usize,
    control_dim: usize,
}

impl SelectionMatrix {
    pub fn custom(matrix: DMatrix<f64>, state_dim: usize, control_dim: usize) -> Result<Self> {
        check_dim("selection matrix columns", state_dim + control_dim, matrix.ncols())?;
        if matrix.nrows() == 0 {
            return Err(IocError::Contract("selection matrix needs at least one row".into()));
        }
        Ok(Self {
            matrix,
            mode: MeasurementMode::Custom,
            state_dim,
            control_dim,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mode(&self) -> MeasurementMode {
        self.mode
    }

    /// Measurement dimension `q`.
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn apply(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("state", self.state_dim, x.len())?;
        check_dim("control", self.control_dim, u.len())?;
        Ok(&self.matrix * concat(x, u))
    }
}

/// `I_{n+m}`, `[I_n 0]` or `[0 I_m]`. `Custom` needs an explicit matrix.
pub fn selection_matrix(mode: MeasurementMode, n: usize, m: usize) -> Result<SelectionMatrix> {
    if n == 0 || m == 0 {
        return Err(IocError::Contract("state and control dimensions must be positive".into()));
    }
    let matrix = match mode {
        MeasurementMode::Full => DMatrix::identity(n + m, n + m),
        MeasurementMode::States => DMatrix::from_fn(n, n + m, |i, j| if i == j { 1.0 } else { 0.0 }),
        MeasurementMode::Controls => DMatrix::from_fn(m, n + m, |i, j| if j == n + i { 1.0 } else { 0.0 }),
        MeasurementMode::Custom => {
            return Err(IocError::Contract("custom mode requires an explicit matrix".into()));
        }
    };
    Ok(SelectionMatrix {
        matrix,
        mode,
        state_dim: n,
        control_dim: m,
    })
}

/// Gaussian measurement noise with covariance `R = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
    seed: u64,
}

impl NoiseModel {
    pub fn new(covariance: DMatrix<f64>, seed: u64) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(IocError::Contract("noise covariance must be square and non-empty".into()));
        }
        if asymmetry(&covariance) > 1e-12 {
            return Err(IocError::Contract("noise covariance is not symmetric".into()));
        }
        if !(min_eigenvalue(&covariance) > 0.0) {
            return Err(IocError::Contract("noise covariance is not positive definite".into()));
        }
        let factor = cholesky(&covariance)
            .ok_or(IocError::Factorization("noise covariance"))?
            .l();
        Ok(Self {
            covariance,
            factor,
            seed,
        })
    }

    /// Zero noise of dimension `q`. Not a valid filter covariance; for tests and oracles.
    pub fn noiseless(q: usize, seed: u64) -> Self {
        Self {
            covariance: DMatrix::zeros(q, q),
            factor: DMatrix::zeros(q, q),
            seed,
        }
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    /// `v_t = L z_t`, with `z_t` drawn from a stream keyed only by `(seed, t)`.
    pub fn sample(&self, t: usize) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t as u64);
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(&mut rng));
        &self.factor * z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub t: usize,
    pub y: DVector<f64>,
}

/// Noiseless `F [x_t; u_t]`.
pub fn observe(selection: &SelectionMatrix, trajectory: &Trajectory, t: usize) -> Result<DVector<f64>> {
    if t >= trajectory.horizon() {
        return Err(IocError::Contract(format!(
            "measurement index {t} outside 0..{}",
            trajectory.horizon()
        )));
    }
    selection.apply(trajectory.state(t), trajectory.control(t))
}

/// Records for `t = 0 .. T-1`.
pub fn simulate_measurements(
    trajectory: &Trajectory,
    selection: &SelectionMatrix,
    noise: &NoiseModel,
) -> Result<Vec<MeasurementRecord>> {
    check_dim("noise covariance", selection.output_dim(), noise.dim())?;
    (0..trajectory.horizon())
        .map(|t| {
            let y = observe(selection, trajectory, t)? + noise.sample(t);
            Ok(MeasurementRecord { t, y })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, SolverOptions};

    fn pendulum_trajectory() -> Trajectory {
        let spec = crate::benchmarks::pendulum();
        solve(&spec.model, &spec.ground_truth, &SolverOptions::default(), None).unwrap()
    }

    #[test]
    fn named_patterns() {
        assert_eq!(selection_matrix(MeasurementMode::Full, 2, 1).unwrap().matrix(), &DMatrix::identity(3, 3));
        assert_eq!(
            selection_matrix(MeasurementMode::States, 2, 1).unwrap().matrix(),
            &DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        assert_eq!(
            selection_matrix(MeasurementMode::Controls, 2, 1).unwrap().matrix(),
            &DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0])
        );
        assert!(selection_matrix(MeasurementMode::Custom, 2, 1).is_err());
        assert!(selection_matrix(MeasurementMode::Full, 0, 1).is_err());
        assert!(SelectionMatrix::custom(DMatrix::zeros(1, 2), 2, 1).is_err());
    }

    #[test]
    fn observe_modes() {
        let traj = pendulum_trajectory();
        let t = 7;
        let full = observe(&selection_matrix(MeasurementMode::Full, 2, 1).unwrap(), &traj, t).unwrap();
        assert_eq!(full, concat(traj.state(t), traj.control(t)));
        let states = observe(&selection_matrix(MeasurementMode::States, 2, 1).unwrap(), &traj, t).unwrap();
        assert_eq!(&states, traj.state(t));
        let ones = SelectionMatrix::custom(DMatrix::from_element(1, 3, 1.0), 2, 1).unwrap();
        let s = observe(&ones, &traj, t).unwrap();
        let expected = traj.state(t)[0] + traj.state(t)[1] + traj.control(t)[0];
        assert!((s[0] - expected).abs() < 1e-12);
        assert!(observe(&ones, &traj, traj.horizon()).is_err());
    }

    #[test]
    fn zero_noise_equals_observe() {
        let traj = pendulum_trajectory();
        let f = selection_matrix(MeasurementMode::Full, 2, 1).unwrap();
        let records = simulate_measurements(&traj, &f, &NoiseModel::noiseless(3, 1)).unwrap();
        assert_eq!(records.len(), traj.horizon());
        for r in &records {
            assert_eq!(r.y, observe(&f, &traj, r.t).unwrap());
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let traj = pendulum_trajectory();
        let f = selection_matrix(MeasurementMode::Full, 2, 1).unwrap();
        let noise = NoiseModel::new(DMatrix::identity(3, 3) * 1e-7, 42).unwrap();
        let a = simulate_measurements(&traj, &f, &noise).unwrap();
        let b = simulate_measurements(&traj, &f, &noise).unwrap();
        assert_eq!(a, b);
        let other = NoiseModel::new(DMatrix::identity(3, 3) * 1e-7, 43).unwrap();
        assert_ne!(a, simulate_measurements(&traj, &f, &other).unwrap());
    }

    #[test]
    fn rejects_bad_covariance() {
        assert!(NoiseModel::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]), 0).is_err());
        assert!(NoiseModel::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 0).is_err());
        assert!(NoiseModel::new(DMatrix::zeros(2, 2), 0).is_err());
        let f = selection_matrix(MeasurementMode::Full, 2, 1).unwrap();
        let noise = NoiseModel::new(DMatrix::identity(2, 2), 0).unwrap();
        assert!(simulate_measurements(&pendulum_trajectory(), &f, &noise).is_err());
    }

    #[test]
    fn empirical_covariance_matches() {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.3, 0.1, -0.3, 0.7]);
        let samples = 100_000;
        let mut acc = DMatrix::<f64>::zeros(3, 3);
        for seed in 0..samples {
            let v = NoiseModel::new(r.clone(), seed).unwrap().sample(4);
            acc += &v * v.transpose();
        }
        acc /= samples as f64;
        let rel = (&acc - &r).norm() / r.norm();
        assert!(rel < 0.05, "{rel}");
    }

    #[test]
    fn noise_is_white_across_time() {
        let noise = NoiseModel::new(DMatrix::identity(1, 1), 9).unwrap();
        let n = 20_000;
        let v: Vec<f64> = (0..n).map(|t| noise.sample(t)[0]).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let bound = 3.0 / (n as f64).sqrt();
        for lag in 1..=5 {
            let c = (0..n - lag).map(|t| (v[t] - mean) * (v[t + lag] - mean)).sum::<f64>() / (n as f64 * var);
            assert!(c.abs() < bound, "lag {lag}: {c}");
        }
    }

    #[test]
    fn mode_strings() {
        for mode in [MeasurementMode::Full, MeasurementMode::States, MeasurementMode::Controls, MeasurementMode::Custom] {
            assert_eq!(mode.as_str().parse::<MeasurementMode>().unwrap(), mode);
        }
        assert!("partial".parse::<MeasurementMode>().is_err());
    }
}
