use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::system::Dynamics;

/// Cart pole with a point-mass pole, Euler-discretized.
/// State `(x, φ, dx, dφ)` with `φ = 0` hanging down; control is the cart force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.81,
            dt: 0.05,
        }
    }
}

impl CartPole {
    fn accelerations(&self, phi: f64, w: f64, u: f64) -> (f64, f64) {
        let (mc, mp, l, g) = (self.cart_mass, self.pole_mass, self.pole_length, self.gravity);
        let (s, c) = phi.sin_cos();
        let d = mc + mp * s * s;
        let ddx = (u + mp * s * (l * w * w + g * c)) / d;
        let ddphi = (-u * c - mp * l * w * w * c * s - (mc + mp) * g * s) / (l * d);
        (ddx, ddphi)
    }
}

impl Dynamics for CartPole {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (ddx, ddphi) = self.accelerations(x[1], x[3], u[0]);
        let dt = self.dt;
        DVector::from_vec(vec![x[0] + dt * x[2], x[1] + dt * x[3], x[2] + dt * ddx, x[3] + dt * ddphi])
    }

    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let (mc, mp, l, g, dt) = (self.cart_mass, self.pole_mass, self.pole_length, self.gravity, self.dt);
        let (phi, w, u) = (x[1], x[3], u[0]);
        let (s, c) = phi.sin_cos();
        let d = mc + mp * s * s;
        let dd_phi = 2.0 * mp * s * c;

        let n1 = u + mp * s * (l * w * w + g * c);
        let n1_phi = mp * (c * l * w * w + g * (c * c - s * s));
        let n1_w = 2.0 * mp * s * l * w;
        let ddx_phi = (n1_phi * d - n1 * dd_phi) / (d * d);
        let ddx_w = n1_w / d;
        let ddx_u = 1.0 / d;

        let n2 = -u * c - mp * l * w * w * c * s - (mc + mp) * g * s;
        let n2_phi = u * s - mp * l * w * w * (c * c - s * s) - (mc + mp) * g * c;
        let n2_w = -2.0 * mp * l * w * c * s;
        let ddphi_phi = (n2_phi * d - n2 * dd_phi) / (l * d * d);
        let ddphi_w = n2_w / (l * d);
        let ddphi_u = -c / (l * d);

        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0,             dt,  0.0,
            0.0, 1.0,             0.0, dt,
            0.0, dt * ddx_phi,    1.0, dt * ddx_w,
            0.0, dt * ddphi_phi,  0.0, 1.0 + dt * ddphi_w,
        ]);
        let b = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, dt * ddx_u, dt * ddphi_u]);
        Some((a, b))
    }
}
