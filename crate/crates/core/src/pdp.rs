//! Pontryagin differentiable programming.
//!
//! Given a stationary trajectory at θ, the derivatives `X_k = ∂x_k/∂θ` and
//! `U_k = ∂u_k/∂θ` solve an auxiliary linear-quadratic problem whose blocks are
//! the Hamiltonian second derivatives along the trajectory. One Riccati-like
//! backward pass produces `(P_k, W_k)`; one forward pass from `X_0 = 0`
//! produces the sensitivities.
//!
//! The recursion used here, with `Λ_k = (I + P_{k+1} R̃_k)⁻¹`:
//!
//! ```text
//! P_k = Q̃_k + Ã_kᵀ Λ_k P_{k+1} Ã_k
//! W_k = Ñ_k + Ã_kᵀ Λ_k (W_{k+1} + P_{k+1} M̃_k)
//! U_k = -Huu⁻¹ [Hux X_k + Hue + B_kᵀ Λ_k (P_{k+1} Ã_k X_k + P_{k+1} M̃_k + W_{k+1})]
//! X_{k+1} = A_k X_k + B_k U_k
//! ```
//!
//! where `Ã = A - B Huu⁻¹ Hux`, `R̃ = B Huu⁻¹ Bᵀ`, `M̃ = -B Huu⁻¹ Hue`,
//! `Q̃ = Hxx - Hxu Huu⁻¹ Hux` and `Ñ = Hxe - Hxu Huu⁻¹ Hue`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, IocError, Result};
use crate::linalg::{cholesky, min_eigenvalue, symmetrize, vstack};
use crate::solver::{adjoint, linearize, Trajectory};
use crate::system::{HamiltonianBlocks, SystemModel, TerminalBlocks};

/// Minimum eigenvalue of `Huu` below which it is treated as singular.
pub const HUU_EIGENVALUE_FLOOR: f64 = 1e-10;

/// Costates `p_1 .. p_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateSequence {
    costates: Vec<DVector<f64>>,
}

impl CostateSequence {
    /// `p_t` for `1 <= t <= T`.
    pub fn at(&self, t: usize) -> &DVector<f64> {
        assert!(t >= 1 && t <= self.costates.len(), "costate index {t} outside 1..={}", self.costates.len());
        &self.costates[t - 1]
    }

    /// `p_{k+1}`, the costate paired with stage `k`.
    pub fn next(&self, k: usize) -> &DVector<f64> {
        &self.costates[k]
    }

    pub fn len(&self) -> usize {
        self.costates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.costates.iter()
    }
}

/// `X_0 .. X_T` (n×N) and `U_0 .. U_{T-1}` (m×N).
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPair {
    pub x: Vec<DMatrix<f64>>,
    pub u: Vec<DMatrix<f64>>,
}

impl SensitivityPair {
    /// `[X_t; U_t]`, the Jacobian of `g_t` for `t < T`.
    pub fn stacked(&self, t: usize) -> DMatrix<f64> {
        vstack(&self.x[t], &self.u[t])
    }
}

/// Per-stage matrices of the auxiliary recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryRecursionState {
    pub p: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub a_tilde: DMatrix<f64>,
    pub r_tilde: DMatrix<f64>,
    pub m_tilde: DMatrix<f64>,
    pub q_tilde: DMatrix<f64>,
    pub n_tilde: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliarySolution {
    pub sensitivities: SensitivityPair,
    /// Stages `0 .. T-1`.
    pub stages: Vec<AuxiliaryRecursionState>,
    /// `P_T = HTxx`.
    pub terminal_p: DMatrix<f64>,
    /// `W_T = HTxe`.
    pub terminal_w: DMatrix<f64>,
    pub stats: PassStats,
}

/// Stage visits of the backward and forward passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PassStats {
    pub backward_steps: usize,
    pub forward_steps: usize,
}

/// Costates from the adjoint recursion, `p_T = ∂c_T/∂x` and
/// `p_t = ∂c_t/∂x + A_tᵀ p_{t+1}` for `t = T-1 .. 1`.
///
/// The trajectory is expected to be stationary at `theta`; this is not checked.
pub fn costates(model: &SystemModel, trajectory: &Trajectory, theta: &DVector<f64>) -> Result<CostateSequence> {
    trajectory.check_against(model)?;
    model.check_params(theta)?;
    let lin = linearize(model, &trajectory.states, &trajectory.controls, theta);
    Ok(CostateSequence {
        costates: adjoint(&lin),
    })
}

/// Hamiltonian blocks at every stage plus the terminal blocks.
pub fn trajectory_blocks(
    model: &SystemModel,
    trajectory: &Trajectory,
    costates: &CostateSequence,
    theta: &DVector<f64>,
) -> Result<(Vec<HamiltonianBlocks>, TerminalBlocks)> {
    trajectory.check_against(model)?;
    check_dim("costate sequence", model.horizon(), costates.len())?;
    let horizon = model.horizon();
    let blocks = (0..horizon)
        .map(|k| model.hamiltonian_blocks(k, trajectory.state(k), trajectory.control(k), costates.next(k), theta))
        .collect::<Result<Vec<_>>>()?;
    let terminal = model.terminal_blocks(trajectory.state(horizon), theta)?;
    Ok((blocks, terminal))
}

/// Solve the auxiliary recursions for the full horizon.
pub fn solve_auxiliary(blocks: &[HamiltonianBlocks], terminal: &TerminalBlocks) -> Result<AuxiliarySolution> {
    let horizon = blocks.len();
    let n = terminal.hxx.nrows();
    let np = terminal.hxe.ncols();
    let eye = DMatrix::<f64>::identity(n, n);

    struct Reduced {
        huu_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        lambda: DMatrix<f64>,
    }

    let mut stages: Vec<Option<AuxiliaryRecursionState>> = vec![None; horizon];
    let mut reduced: Vec<Option<Reduced>> = (0..horizon).map(|_| None).collect();
    let mut p_next = symmetrize(&terminal.hxx);
    let mut w_next = terminal.hxe.clone();
    let mut stats = PassStats::default();

    for k in (0..horizon).rev() {
        let blk = &blocks[k];
        let min_eig = min_eigenvalue(&blk.huu);
        let chol = if min_eig >= HUU_EIGENVALUE_FLOOR { cholesky(&blk.huu) } else { None };
        let Some(chol) = chol else {
            return Err(IocError::SingularHuu {
                step: k,
                min_eigenvalue: min_eig,
            });
        };
        let inv_hux = chol.solve(&blk.hux);
        let inv_hue = chol.solve(&blk.hue);
        let inv_bt = chol.solve(&blk.b.transpose());
        let a_tilde = &blk.a - &blk.b * &inv_hux;
        let r_tilde = &blk.b * inv_bt;
        let m_tilde = -(&blk.b * &inv_hue);
        let q_tilde = &blk.hxx - &blk.hxu * &inv_hux;
        let n_tilde = &blk.hxe - &blk.hxu * &inv_hue;

        let lambda = (&eye + &p_next * &r_tilde)
            .lu()
            .try_inverse()
            .ok_or(IocError::Factorization("I + P R"))?;
        let at_lambda = a_tilde.transpose() * &lambda;
        let p = symmetrize(&(&q_tilde + &at_lambda * &p_next * &a_tilde));
        let w = &n_tilde + &at_lambda * (&w_next + &p_next * &m_tilde);

        reduced[k] = Some(Reduced { huu_chol: chol, lambda });
        stages[k] = Some(AuxiliaryRecursionState {
            p: p.clone(),
            w: w.clone(),
            a_tilde,
            r_tilde,
            m_tilde,
            q_tilde,
            n_tilde,
        });
        p_next = p;
        w_next = w;
        stats.backward_steps += 1;
    }
    let stages: Vec<AuxiliaryRecursionState> = stages.into_iter().map(|s| s.expect("filled")).collect();
    let reduced: Vec<Reduced> = reduced.into_iter().map(|r| r.expect("filled")).collect();

    let mut xs = Vec::with_capacity(horizon + 1);
    let mut us = Vec::with_capacity(horizon);
    xs.push(DMatrix::zeros(n, np));
    for k in 0..horizon {
        let blk = &blocks[k];
        let st = &stages[k];
        let (p1, w1) = if k + 1 < horizon {
            (&stages[k + 1].p, &stages[k + 1].w)
        } else {
            (&terminal.hxx, &terminal.hxe)
        };
        let x = &xs[k];
        let costate = &reduced[k].lambda * (p1 * &st.a_tilde * x + p1 * &st.m_tilde + w1);
        let rhs = &blk.hux * x + &blk.hue + blk.b.transpose() * costate;
        let u = -reduced[k].huu_chol.solve(&rhs);
        let x_next = &blk.a * x + &blk.b * &u;
        us.push(u);
        xs.push(x_next);
        stats.forward_steps += 1;
    }

    Ok(AuxiliarySolution {
        sensitivities: SensitivityPair { x: xs, u: us },
        stages,
        terminal_p: symmetrize(&terminal.hxx),
        terminal_w: terminal.hxe.clone(),
        stats,
    })
}

/// `X_{0:T}` and `U_{0:T-1}` of the solution map at `theta`.
pub fn sensitivities(
    model: &SystemModel,
    trajectory: &Trajectory,
    costates: &CostateSequence,
    theta: &DVector<f64>,
) -> Result<SensitivityPair> {
    let (blocks, terminal) = trajectory_blocks(model, trajectory, costates, theta)?;
    Ok(solve_auxiliary(&blocks, &terminal)?.sensitivities)
}

/// `G_t = F_t [X_t; U_t]`.
pub fn output_jacobian(selection: &DMatrix<f64>, x_t: &DMatrix<f64>, u_t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("selection matrix columns", x_t.nrows() + u_t.nrows(), selection.ncols())?;
    check_dim("sensitivity columns", x_t.ncols(), u_t.ncols())?;
    Ok(selection * vstack(x_t, u_t))
}

/// Everything computed on the way to `G_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpJacobian {
    pub jacobian: DMatrix<f64>,
    pub costates: CostateSequence,
    pub sensitivities: SensitivityPair,
    pub stats: PassStats,
}

/// Measurement Jacobian `G_t` at the estimate that produced `trajectory`:
/// costates, Hamiltonian blocks, auxiliary recursions, then selection.
pub fn jacobian(
    t: usize,
    theta_prev: &DVector<f64>,
    trajectory: &Trajectory,
    selection: &DMatrix<f64>,
    model: &SystemModel,
) -> Result<PdpJacobian> {
    if t >= model.horizon() {
        return Err(IocError::Contract(format!(
            "measurement index {t} outside 0..{}",
            model.horizon()
        )));
    }
    let costates = costates(model, trajectory, theta_prev)?;
    let (blocks, terminal) = trajectory_blocks(model, trajectory, &costates, theta_prev)?;
    let aux = solve_auxiliary(&blocks, &terminal)?;
    let g = output_jacobian(selection, &aux.sensitivities.x[t], &aux.sensitivities.u[t])?;
    Ok(PdpJacobian {
        jacobian: g,
        costates,
        sensitivities: aux.sensitivities,
        stats: aux.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, SolverOptions};
    use crate::system::{FnObjective, LinearDynamics};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn one_step_model() -> SystemModel {
        let dynamics = LinearDynamics::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let objective = FnObjective::new(1, |_, _, u, _| u[0] * u[0], |x, th| th[0] * x[0] * x[0]);
        SystemModel::new(dynamics, objective, v(&[1.0]), 1).unwrap()
    }

    #[test]
    fn terminal_costate_is_cost_gradient() {
        // c_T = θ (x - g)^2
        let dynamics = LinearDynamics::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let objective = FnObjective::new(1, |_, _, u, _| u[0] * u[0], |x, th| th[0] * (x[0] - 3.0).powi(2));
        let model = SystemModel::new(dynamics, objective, v(&[1.0]), 1).unwrap();
        let th = v(&[2.0]);
        let traj = solve(&model, &th, &SolverOptions::default(), None).unwrap();
        let p = costates(&model, &traj, &th).unwrap();
        assert_eq!(p.len(), 1);
        let x1 = traj.states[1][0];
        assert!((p.at(1)[0] - 2.0 * 2.0 * (x1 - 3.0)).abs() < 1e-6);
    }

    #[test]
    fn zero_costs_give_zero_costates() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let model = SystemModel::new(
            LinearDynamics::new(a, b).unwrap(),
            FnObjective::new(1, |_, _, _, _| 0.0, |_, _| 0.0),
            v(&[1.0, 0.0]),
            4,
        )
        .unwrap();
        let th = v(&[1.0]);
        let traj = Trajectory::from_controls(&model, &th, vec![v(&[0.3]); 4]).unwrap();
        let p = costates(&model, &traj, &th).unwrap();
        assert!(p.iter().all(|pk| pk.amax() < 1e-9));
    }

    #[test]
    fn scalar_one_step_sensitivity() {
        // u*(θ) = -θ x0 / (1 + θ) so du/dθ = -x0 / (1 + θ)^2 = -1/4 at θ = 1.
        let model = one_step_model();
        let th = v(&[1.0]);
        let traj = solve(&model, &th, &SolverOptions::default(), None).unwrap();
        let p = costates(&model, &traj, &th).unwrap();
        let s = sensitivities(&model, &traj, &p, &th).unwrap();
        assert_eq!(s.x[0], DMatrix::zeros(1, 1));
        assert!((s.u[0][(0, 0)] + 0.25).abs() < 1e-6, "{}", s.u[0]);
        assert!((s.x[1][(0, 0)] + 0.25).abs() < 1e-6);
    }

    #[test]
    fn parameter_free_objective_has_zero_sensitivities() {
        let spec = crate::benchmarks::pendulum();
        let objective = FnObjective::new(
            2,
            |_, x, u, _| (x[0] - std::f64::consts::PI).powi(2) + 0.1 * u[0] * u[0],
            |x, _| (x[0] - std::f64::consts::PI).powi(2),
        );
        let dynamics = crate::benchmarks::Pendulum::default();
        let model = SystemModel::new(dynamics, objective, spec.model.initial_state().clone(), 20).unwrap();
        let th = v(&[1.0, 1.0]);
        let traj = solve(&model, &th, &SolverOptions::default(), None).unwrap();
        let p = costates(&model, &traj, &th).unwrap();
        let s = sensitivities(&model, &traj, &p, &th).unwrap();
        let worst = s.x.iter().chain(s.u.iter()).map(|m| m.amax()).fold(0.0, f64::max);
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn forward_consistency_and_pass_counts() {
        let spec = crate::benchmarks::pendulum();
        let th = &spec.ground_truth;
        let traj = solve(&spec.model, th, &SolverOptions::default(), None).unwrap();
        let p = costates(&spec.model, &traj, th).unwrap();
        let (blocks, terminal) = trajectory_blocks(&spec.model, &traj, &p, th).unwrap();
        let aux = solve_auxiliary(&blocks, &terminal).unwrap();
        let s = &aux.sensitivities;
        assert_eq!(s.x.len(), spec.horizon() + 1);
        assert_eq!(s.u.len(), spec.horizon());
        assert_eq!(s.x[0], DMatrix::zeros(2, 2));
        for (k, blk) in blocks.iter().enumerate() {
            let pred = &blk.a * &s.x[k] + &blk.b * &s.u[k];
            assert!((pred - &s.x[k + 1]).amax() <= 1e-9);
        }
        assert_eq!(aux.terminal_p, terminal.hxx);
        assert_eq!(aux.terminal_w, terminal.hxe);
        assert_eq!(aux.stats.backward_steps, spec.horizon());
        assert_eq!(aux.stats.forward_steps, spec.horizon());
    }

    #[test]
    fn singular_huu_is_reported() {
        // No control penalty: Huu = 0.
        let dynamics = LinearDynamics::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let objective = FnObjective::new(1, |_, x, _, th| th[0] * x[0] * x[0], |x, th| th[0] * x[0] * x[0]);
        let model = SystemModel::new(dynamics, objective, v(&[1.0]), 3).unwrap();
        let th = v(&[1.0]);
        let traj = Trajectory::from_controls(&model, &th, vec![v(&[0.0]); 3]).unwrap();
        let p = costates(&model, &traj, &th).unwrap();
        let err = sensitivities(&model, &traj, &p, &th).unwrap_err();
        assert!(matches!(err, IocError::SingularHuu { .. }), "{err:?}");
    }

    #[test]
    fn output_jacobian_selection_patterns() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let u = DMatrix::from_row_slice(1, 2, &[5.0, 6.0]);
        let full = output_jacobian(&DMatrix::identity(3, 3), &x, &u).unwrap();
        assert_eq!(full, vstack(&x, &u));
        let states = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(output_jacobian(&states, &x, &u).unwrap(), x);
        assert!(output_jacobian(&DMatrix::identity(2, 2), &x, &u).is_err());
    }

    #[test]
    fn jacobian_is_composition_of_steps() {
        let spec = crate::benchmarks::pendulum();
        let th = &spec.ground_truth;
        let traj = solve(&spec.model, th, &SolverOptions::default(), None).unwrap();
        let f = DMatrix::identity(3, 3);
        let out = jacobian(5, th, &traj, &f, &spec.model).unwrap();
        let p = costates(&spec.model, &traj, th).unwrap();
        let s = sensitivities(&spec.model, &traj, &p, th).unwrap();
        assert_eq!(out.jacobian, output_jacobian(&f, &s.x[5], &s.u[5]).unwrap());
        assert!(jacobian(spec.horizon(), th, &traj, &f, &spec.model).is_err());
    }

    #[test]
    fn value_matrices_are_symmetric_psd() {
        let spec = crate::benchmarks::cartpole();
        let th = &spec.ground_truth;
        let traj = solve(&spec.model, th, &SolverOptions::default(), None).unwrap();
        let p = costates(&spec.model, &traj, th).unwrap();
        let (blocks, terminal) = trajectory_blocks(&spec.model, &traj, &p, th).unwrap();
        let aux = solve_auxiliary(&blocks, &terminal).unwrap();
        for st in &aux.stages {
            assert!(crate::linalg::is_symmetric(&st.p, 1e-8));
        }
    }
}
