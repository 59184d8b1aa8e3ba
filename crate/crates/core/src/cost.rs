//! Objectives that are linear in θ over squared-deviation features plus a
//! fixed control penalty: `c_t = Σ_i θ_i φ_i(x) + r‖u‖²`, `c_T = Σ_i θ_i φ_i(x)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IocError, Result};
use crate::system::{Objective, StageDerivatives, TerminalDerivatives};

/// `φ(x) = Σ_j (x[indices_j] - goal_j)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationFeature {
    pub indices: Vec<usize>,
    pub goal: Vec<f64>,
}

impl DeviationFeature {
    pub fn single(index: usize, goal: f64) -> Self {
        Self {
            indices: vec![index],
            goal: vec![goal],
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.indices
            .iter()
            .zip(&self.goal)
            .map(|(&j, &g)| (x[j] - g).powi(2))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCost {
    state_dim: usize,
    control_dim: usize,
    features: Vec<DeviationFeature>,
    control_weight: f64,
}

impl FeatureCost {
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        features: Vec<DeviationFeature>,
        control_weight: f64,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(IocError::Contract("at least one feature required".into()));
        }
        if !(control_weight > 0.0) {
            return Err(IocError::Contract(format!(
                "control weight must be positive, got {control_weight}"
            )));
        }
        for f in &features {
            if f.indices.len() != f.goal.len() || f.indices.iter().any(|&j| j >= state_dim) {
                return Err(IocError::Contract("feature indices out of range".into()));
            }
        }
        Ok(Self {
            state_dim,
            control_dim,
            features,
            control_weight,
        })
    }

    pub fn features(&self) -> &[DeviationFeature] {
        &self.features
    }

    pub fn control_weight(&self) -> f64 {
        self.control_weight
    }

    fn weighted(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.features
            .iter()
            .zip(theta.iter())
            .map(|(f, &w)| w * f.value(x))
            .sum()
    }

    /// `(∂c/∂x, ∂²c/∂x², ∂²c/∂x∂θ)` of the feature part.
    fn state_terms(&self, x: &DVector<f64>, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let n = self.state_dim;
        let mut cx = DVector::zeros(n);
        let mut cxx = DMatrix::zeros(n, n);
        let mut cxe = DMatrix::zeros(n, self.features.len());
        for (i, f) in self.features.iter().enumerate() {
            for (&j, &g) in f.indices.iter().zip(&f.goal) {
                let d = 2.0 * (x[j] - g);
                cx[j] += theta[i] * d;
                cxx[(j, j)] += 2.0 * theta[i];
                cxe[(j, i)] += d;
            }
        }
        (cx, cxx, cxe)
    }
}

impl Objective for FeatureCost {
    fn param_dim(&self) -> usize {
        self.features.len()
    }

    fn stage_cost(&self, _t: usize, x: &DVector<f64>, u: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.weighted(x, theta) + self.control_weight * u.norm_squared()
    }

    fn terminal_cost(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.weighted(x, theta)
    }

    fn stage_derivatives(
        &self,
        _t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Option<StageDerivatives> {
        let (cx, cxx, cxe) = self.state_terms(x, theta);
        let m = self.control_dim;
        Some(StageDerivatives {
            cx,
            cu: u * (2.0 * self.control_weight),
            cxx,
            cxu: DMatrix::zeros(self.state_dim, m),
            cuu: DMatrix::identity(m, m) * (2.0 * self.control_weight),
            cxe,
            cue: DMatrix::zeros(m, self.features.len()),
        })
    }

    fn terminal_derivatives(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Option<TerminalDerivatives> {
        let (cx, cxx, cxe) = self.state_terms(x, theta);
        Some(TerminalDerivatives { cx, cxx, cxe })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_diff;
    use crate::linalg::concat;

    fn cost() -> FeatureCost {
        FeatureCost::new(
            3,
            2,
            vec![
                DeviationFeature::single(0, 1.0),
                DeviationFeature {
                    indices: vec![1, 2],
                    goal: vec![-0.5, 0.0],
                },
            ],
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let c = cost();
        let x = DVector::from_vec(vec![0.3, 0.2, -1.0]);
        let u = DVector::from_vec(vec![0.5, -0.7]);
        let th = DVector::from_vec(vec![2.0, 3.0]);
        let d = c.stage_derivatives(0, &x, &u, &th).unwrap();
        let z = concat(&concat(&x, &u), &th);
        let f = |z: &DVector<f64>| {
            c.stage_cost(
                0,
                &z.rows(0, 3).into_owned(),
                &z.rows(3, 2).into_owned(),
                &z.rows(5, 2).into_owned(),
            )
        };
        let g = finite_diff::gradient(f, &z, 1e-6);
        let h = finite_diff::hessian(f, &z, 1e-4);
        assert!((g.rows(0, 3) - &d.cx).amax() < 1e-7);
        assert!((g.rows(3, 2) - &d.cu).amax() < 1e-7);
        assert!((h.view((0, 0), (3, 3)) - &d.cxx).amax() < 1e-5);
        assert!((h.view((3, 3), (2, 2)) - &d.cuu).amax() < 1e-5);
        assert!((h.view((0, 5), (3, 2)) - &d.cxe).amax() < 1e-5);
    }

    #[test]
    fn rejects_nonpositive_control_weight() {
        assert!(FeatureCost::new(1, 1, vec![DeviationFeature::single(0, 0.0)], 0.0).is_err());
        assert!(FeatureCost::new(1, 1, vec![DeviationFeature::single(3, 0.0)], 1.0).is_err());
    }

    #[test]
    fn terminal_has_no_control_term() {
        let c = cost();
        let x = DVector::from_vec(vec![1.0, -0.5, 0.0]);
        assert_eq!(c.terminal_cost(&x, &DVector::from_vec(vec![5.0, 5.0])), 0.0);
    }
}
