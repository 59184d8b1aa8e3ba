use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::system::Dynamics;

/// Planar two-link arm with point masses at the link tips, moving in a
/// horizontal plane. State `(q1, q2, dq1, dq2)`, controls are joint torques.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotArm {
    pub mass1: f64,
    pub mass2: f64,
    pub length1: f64,
    pub length2: f64,
    pub dt: f64,
}

impl Default for RobotArm {
    fn default() -> Self {
        Self {
            mass1: 1.0,
            mass2: 1.0,
            length1: 1.0,
            length2: 1.0,
            dt: 0.05,
        }
    }
}

impl RobotArm {
    fn mass_matrix(&self, q2: f64) -> Matrix2<f64> {
        let (m1, m2, l1, l2) = (self.mass1, self.mass2, self.length1, self.length2);
        let c2 = q2.cos();
        let m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
        Matrix2::new(
            (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2,
            m12,
            m12,
            m2 * l2 * l2,
        )
    }

    fn coriolis(&self, q2: f64, dq1: f64, dq2: f64) -> Vector2<f64> {
        let h = self.mass2 * self.length1 * self.length2 * q2.sin();
        Vector2::new(-h * (2.0 * dq1 * dq2 + dq2 * dq2), h * dq1 * dq1)
    }

    fn accelerations(&self, x: &DVector<f64>, u: &DVector<f64>) -> (Matrix2<f64>, Vector2<f64>) {
        let minv = self.mass_matrix(x[1]).try_inverse().expect("mass matrix is positive definite");
        let rhs = Vector2::new(u[0], u[1]) - self.coriolis(x[1], x[2], x[3]);
        (minv, minv * rhs)
    }
}

impl Dynamics for RobotArm {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (_, ddq) = self.accelerations(x, u);
        let dt = self.dt;
        DVector::from_vec(vec![
            x[0] + dt * x[2],
            x[1] + dt * x[3],
            x[2] + dt * ddq[0],
            x[3] + dt * ddq[1],
        ])
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let (minv, ddq) = self.accelerations(x, u);
        let (q2, dq1, dq2) = (x[1], x[2], x[3]);
        let k = self.mass2 * self.length1 * self.length2;
        let (s2, c2) = q2.sin_cos();
        let h = k * s2;
        let dh = k * c2;

        // ∂ddq/∂q2 = M⁻¹ (-∂C/∂q2 - ∂M/∂q2 ddq)
        let dm = Matrix2::new(-2.0 * k * s2, -k * s2, -k * s2, 0.0);
        let dc_q2 = Vector2::new(-dh * (2.0 * dq1 * dq2 + dq2 * dq2), dh * dq1 * dq1);
        let d_q2 = minv * (-dc_q2 - dm * ddq);
        let dc_dq1 = Vector2::new(-2.0 * h * dq2, 2.0 * h * dq1);
        let dc_dq2 = Vector2::new(-2.0 * h * (dq1 + dq2), 0.0);
        let d_dq1 = minv * -dc_dq1;
        let d_dq2 = minv * -dc_dq2;

        let dt = self.dt;
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = dt;
        a[(1, 3)] = dt;
        for r in 0..2 {
            a[(2 + r, 1)] = dt * d_q2[r];
            a[(2 + r, 2)] += dt * d_dq1[r];
            a[(2 + r, 3)] += dt * d_dq2[r];
        }
        let mut b = DMatrix::zeros(4, 2);
        for r in 0..2 {
            for c in 0..2 {
                b[(2 + r, c)] = dt * minv[(r, c)];
            }
        }
        Some((a, b))
    }
}
