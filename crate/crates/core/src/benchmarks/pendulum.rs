use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::system::{Curvature, Dynamics};

/// Damped single pendulum, Euler-discretized. State `(q, dq)`, control torque.
/// `q = 0` hangs down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub damping: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            damping: 0.1,
            gravity: 9.81,
            dt: 0.05,
        }
    }
}

impl Pendulum {
    fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (q, dq) = (x[0], x[1]);
        let ddq = (u[0] - self.damping * dq - self.mass * self.gravity * self.length * q.sin()) / self.inertia();
        DVector::from_vec(vec![q + self.dt * dq, dq + self.dt * ddq])
    }

    fn jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let i = self.inertia();
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0,
                self.dt,
                -self.dt * self.mass * self.gravity * self.length * x[0].cos() / i,
                1.0 - self.dt * self.damping / i,
            ],
        );
        let b = DMatrix::from_row_slice(2, 1, &[0.0, self.dt / i]);
        Some((a, b))
    }

    fn costate_curvature(&self, x: &DVector<f64>, _u: &DVector<f64>, p: &DVector<f64>) -> Option<Curvature> {
        let mut xx = DMatrix::zeros(2, 2);
        xx[(0, 0)] = p[1] * self.dt * self.mass * self.gravity * self.length * x[0].sin() / self.inertia();
        Some(Curvature {
            xx,
            xu: DMatrix::zeros(2, 1),
            uu: DMatrix::zeros(1, 1),
        })
    }
}
