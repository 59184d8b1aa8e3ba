//! 13-state rigid bodies: position, velocity, unit quaternion (w, x, y, z),
//! body angular rate. Euler-discretized; Jacobians come from finite differences.

use nalgebra::{DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{BenchmarkConfig, BenchmarkSpec, SystemKind, CONTROL_WEIGHT};
use crate::cost::DeviationFeature;
use crate::measurement::MeasurementMode;
use crate::system::Dynamics;

const GRAVITY: f64 = 9.81;

struct BodyState {
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: Quaternion<f64>,
    w: Vector3<f64>,
}

fn unpack(x: &DVector<f64>) -> BodyState {
    BodyState {
        p: Vector3::new(x[0], x[1], x[2]),
        v: Vector3::new(x[3], x[4], x[5]),
        q: Quaternion::new(x[6], x[7], x[8], x[9]),
        w: Vector3::new(x[10], x[11], x[12]),
    }
}

/// Euler step given body-frame force and torque.
fn integrate(s: &BodyState, force_body: Vector3<f64>, torque: Vector3<f64>, mass: f64, inertia: &Matrix3<f64>, dt: f64) -> DVector<f64> {
    // Rotation from the (not renormalized) quaternion; Euler drift in its norm is O(dt²).
    let rot = UnitQuaternion::from_quaternion(s.q);
    let accel = rot * force_body / mass - Vector3::new(0.0, 0.0, GRAVITY);
    let omega = Quaternion::new(0.0, s.w.x, s.w.y, s.w.z);
    let q_dot = s.q * omega * 0.5;
    let inv = inertia.try_inverse().expect("diagonal inertia");
    let w_dot = inv * (torque - s.w.cross(&(inertia * s.w)));
    let p = s.p + s.v * dt;
    let v = s.v + accel * dt;
    let q = s.q + q_dot * dt;
    let w = s.w + w_dot * dt;
    DVector::from_column_slice(&[p.x, p.y, p.z, v.x, v.y, v.z, q.w, q.i, q.j, q.k, w.x, w.y, w.z])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Quadrotor {
    pub mass: f64,
    pub inertia: [f64; 3],
    pub arm_length: f64,
    pub torque_coefficient: f64,
    pub dt: f64,
}

impl Default for Quadrotor {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: [1.0, 1.0, 1.0],
            arm_length: 0.4,
            torque_coefficient: 0.01,
            dt: 0.05,
        }
    }
}

impl Dynamics for Quadrotor {
    fn state_dim(&self) -> usize {
        13
    }

    fn control_dim(&self) -> usize {
        4
    }

    /// Four rotor thrusts in a plus layout.
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let s = unpack(x);
        let l = self.arm_length;
        let c = self.torque_coefficient;
        let thrust = u.sum();
        let torque = Vector3::new(l * (u[1] - u[3]), l * (u[2] - u[0]), c * (u[0] - u[1] + u[2] - u[3]));
        let j = Matrix3::from_diagonal(&Vector3::from(self.inertia));
        integrate(&s, Vector3::new(0.0, 0.0, thrust), torque, self.mass, &j, self.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RocketLanding {
    pub mass: f64,
    pub inertia: [f64; 3],
    /// Distance from the centre of mass to the gimbal, along body -z.
    pub gimbal_offset: f64,
    pub dt: f64,
}

impl Default for RocketLanding {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: [0.5, 0.5, 0.1],
            gimbal_offset: 0.5,
            dt: 0.05,
        }
    }
}

impl Dynamics for RocketLanding {
    fn state_dim(&self) -> usize {
        13
    }

    fn control_dim(&self) -> usize {
        3
    }

    /// Body-frame thrust vector applied at the gimbal.
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let s = unpack(x);
        let force = Vector3::new(u[0], u[1], u[2]);
        let arm = Vector3::new(0.0, 0.0, -self.gimbal_offset);
        let j = Matrix3::from_diagonal(&Vector3::from(self.inertia));
        integrate(&s, force, arm.cross(&force), self.mass, &j, self.dt)
    }
}

fn group(indices: &[usize], goal: &[f64]) -> DeviationFeature {
    DeviationFeature {
        indices: indices.to_vec(),
        goal: goal.to_vec(),
    }
}

const IDENTITY_ATTITUDE: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

pub fn quadrotor_config() -> BenchmarkConfig {
    let mut x0 = vec![0.0; 13];
    x0[..3].copy_from_slice(&[-2.0, -1.0, 1.0]);
    x0[6] = 1.0;
    BenchmarkConfig {
        name: "quadrotor".into(),
        system: SystemKind::Quadrotor(Quadrotor::default()),
        horizon: 50,
        initial_state: x0,
        features: vec![
            group(&[0, 1, 2], &[0.0, 0.0, 2.0]),
            group(&[3, 4, 5], &[0.0; 3]),
            group(&[6, 7, 8, 9], &IDENTITY_ATTITUDE),
            group(&[10, 11, 12], &[0.0; 3]),
        ],
        control_weight: CONTROL_WEIGHT,
        ground_truth: vec![1.0, 1.5, 2.0, 0.5],
        noise_variance: 1e-7,
        measurement_mode: MeasurementMode::Full,
    }
}

pub fn rocket_landing_config() -> BenchmarkConfig {
    let mut x0 = vec![0.0; 13];
    x0[..3].copy_from_slice(&[2.0, -1.0, 8.0]);
    x0[5] = -1.0;
    x0[6] = 1.0;
    BenchmarkConfig {
        name: "rocket_landing".into(),
        system: SystemKind::RocketLanding(RocketLanding::default()),
        horizon: 50,
        initial_state: x0,
        features: vec![
            group(&[0, 1], &[0.0, 0.0]),
            group(&[2], &[0.0]),
            group(&[3, 4, 5], &[0.0; 3]),
            group(&[6, 7, 8, 9], &IDENTITY_ATTITUDE),
            group(&[10, 11, 12], &[0.0; 3]),
        ],
        control_weight: CONTROL_WEIGHT,
        ground_truth: vec![1.0, 1.5, 2.0, 2.5, 5.0],
        noise_variance: 1e-6,
        measurement_mode: MeasurementMode::Full,
    }
}

pub fn quadrotor() -> BenchmarkSpec {
    super::build_builtin(quadrotor_config())
}

pub fn rocket_landing() -> BenchmarkSpec {
    super::build_builtin(rocket_landing_config())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_match_table() {
        let quad = quadrotor();
        assert_eq!((quad.full_measurement_dim(), quad.model.param_dim(), quad.noise_variance), (17, 4, 1e-7));
        let rocket = rocket_landing();
        assert_eq!((rocket.full_measurement_dim(), rocket.model.param_dim(), rocket.noise_variance), (16, 5, 1e-6));
        assert_eq!(rocket.ground_truth.as_slice(), &[1.0, 1.5, 2.0, 2.5, 5.0]);
    }

    #[test]
    fn hover_thrust_balances_gravity() {
        let quad = Quadrotor::default();
        let mut x = DVector::zeros(13);
        x[6] = 1.0;
        let u = DVector::from_element(4, GRAVITY / 4.0);
        let next = quad.step(&x, &u);
        assert!((next - x).amax() < 1e-12);
    }
}
