//! Central finite differences.
//!
//! Used as the derivative fallback for models that do not supply analytic
//! derivatives, and by tests as an independent oracle.

use nalgebra::{DMatrix, DVector};

/// Per-coordinate step `max(base, base * |z_i|)`.
pub fn scaled_step(base: f64, z: f64) -> f64 {
    base.max(base * z.abs())
}

/// Step used for dynamics Jacobians when no analytic form is given.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Step for second differences of scalar functions (no analytic gradient available).
pub const HESSIAN_STEP: f64 = 1e-4;

/// Central-difference Jacobian of a vector function.
pub fn jacobian<F>(f: F, z: &DVector<f64>, base_step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut cols = Vec::with_capacity(z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        let h = scaled_step(base_step, z[i]);
        zp[i] = z[i] + h;
        let plus = f(&zp);
        zp[i] = z[i] - h;
        let minus = f(&zp);
        zp[i] = z[i];
        cols.push((plus - minus) / (2.0 * h));
    }
    if cols.is_empty() {
        return DMatrix::zeros(f(z).len(), 0);
    }
    DMatrix::from_columns(&cols)
}

/// Central-difference gradient of a scalar function.
pub fn gradient<F>(f: F, z: &DVector<f64>, base_step: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(z.len());
    let mut zp = z.clone();
    for i in 0..z.len() {
        let h = scaled_step(base_step, z[i]);
        zp[i] = z[i] + h;
        let plus = f(&zp);
        zp[i] = z[i] - h;
        let minus = f(&zp);
        zp[i] = z[i];
        g[i] = (plus - minus) / (2.0 * h);
    }
    g
}

/// Second-difference Hessian of a scalar function (symmetric by construction).
pub fn hessian<F>(f: F, z: &DVector<f64>, base_step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = z.len();
    let mut h = DMatrix::zeros(n, n);
    let f0 = f(z);
    let steps: Vec<f64> = z.iter().map(|&zi| scaled_step(base_step, zi)).collect();
    let mut zp = z.clone();
    for i in 0..n {
        let hi = steps[i];
        zp[i] = z[i] + hi;
        let fp = f(&zp);
        zp[i] = z[i] - hi;
        let fm = f(&zp);
        zp[i] = z[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: f64, sj: f64| {
                zp[i] = z[i] + si * hi;
                zp[j] = z[j] + sj * hj;
                let v = f(&zp);
                zp[i] = z[i];
                zp[j] = z[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_linear_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let z = DVector::from_vec(vec![0.3, -2.0, 7.0]);
        let j = jacobian(|v| &a * v, &z, JACOBIAN_STEP);
        assert!((j - &a).amax() < 1e-8);
    }

    #[test]
    fn gradient_and_hessian_of_quadratic() {
        // f = x0^2 + 3 x0 x1 - x1^2
        let f = |v: &DVector<f64>| v[0] * v[0] + 3.0 * v[0] * v[1] - v[1] * v[1];
        let z = DVector::from_vec(vec![1.5, -0.5]);
        let g = gradient(f, &z, 1e-6);
        assert!((g[0] - (2.0 * 1.5 + 3.0 * -0.5)).abs() < 1e-8);
        assert!((g[1] - (3.0 * 1.5 + 1.0)).abs() < 1e-8);
        let h = hessian(f, &z, HESSIAN_STEP);
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 3.0, -2.0]);
        assert!((h - expected).amax() < 1e-6);
    }

    #[test]
    fn step_scales_with_magnitude() {
        assert_eq!(scaled_step(1e-6, 0.0), 1e-6);
        assert!((scaled_step(1e-6, -100.0) - 1e-4).abs() < 1e-18);
    }
}
