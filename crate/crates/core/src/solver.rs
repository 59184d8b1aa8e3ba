//! Forward optimal control solver.
//!
//! Iterative LQR on the exact second-order expansion of the Hamiltonian: each
//! iteration computes costates along the current rollout, runs a regularized
//! Riccati backward pass on the resulting blocks, and applies the affine policy
//! in a nonlinear forward rollout with backtracking. Convergence is declared on
//! the Pontryagin stationarity residual `max_t ‖∂H/∂u_t‖∞`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, IocError, Result};
use crate::linalg::{cholesky, symmetrize};
use crate::system::{HamiltonianBlocks, StageDerivatives, SystemModel, TerminalDerivatives};

/// State and control sequences produced by a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x_0 .. x_T` (`T + 1` entries).
    pub states: Vec<DVector<f64>>,
    /// `u_0 .. u_{T-1}` (`T` entries).
    pub controls: Vec<DVector<f64>>,
    pub objective_value: f64,
    /// Stationarity residual at return (0 for trajectories built by [`Trajectory::from_controls`]).
    pub stationarity_residual: f64,
    pub iterations: usize,
}

impl Trajectory {
    /// Roll `controls` out from the model's initial state.
    pub fn from_controls(model: &SystemModel, theta: &DVector<f64>, controls: Vec<DVector<f64>>) -> Result<Self> {
        check_dim("control sequence length", model.horizon(), controls.len())?;
        for u in &controls {
            model.check_control(u)?;
        }
        model.check_params(theta)?;
        let states = rollout(model, &controls);
        let objective_value = total_cost(model, &states, &controls, theta);
        Ok(Self {
            states,
            controls,
            objective_value,
            stationarity_residual: 0.0,
            iterations: 0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn state(&self, t: usize) -> &DVector<f64> {
        &self.states[t]
    }

    pub fn control(&self, t: usize) -> &DVector<f64> {
        &self.controls[t]
    }

    pub(crate) fn check_against(&self, model: &SystemModel) -> Result<()> {
        check_dim("trajectory controls", model.horizon(), self.controls.len())?;
        check_dim("trajectory states", model.horizon() + 1, self.states.len())?;
        for x in &self.states {
            model.check_state(x)?;
        }
        for u in &self.controls {
            model.check_control(u)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Regularization {
    pub initial: f64,
    /// Values below this snap to zero when decreasing.
    pub min: f64,
    pub max: f64,
    pub factor: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            initial: 0.0,
            min: 1e-8,
            max: 1e10,
            factor: 10.0,
        }
    }
}

impl Regularization {
    fn increase(&self, mu: f64) -> f64 {
        (mu * self.factor).max(self.min)
    }

    fn decrease(&self, mu: f64) -> f64 {
        let next = mu / self.factor;
        if next < self.min {
            0.0
        } else {
            next
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearch {
    pub backtrack: f64,
    pub min_step: f64,
    /// Sufficient-decrease fraction of the predicted reduction.
    pub armijo: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            backtrack: 0.5,
            min_step: 1e-8,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub stationarity_tolerance: f64,
    pub regularization: Regularization,
    pub line_search: LineSearch,
    pub warm_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            stationarity_tolerance: 1e-8,
            regularization: Regularization::default(),
            line_search: LineSearch::default(),
            warm_start: true,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.stationarity_tolerance = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        let reg = &self.regularization;
        if self.max_iterations == 0 {
            return Err(IocError::Contract("max_iterations must be >= 1".into()));
        }
        if !(self.stationarity_tolerance > 0.0) {
            return Err(IocError::Contract("stationarity tolerance must be positive".into()));
        }
        if !(ls.backtrack > 0.0 && ls.backtrack < 1.0) || !(ls.min_step > 0.0) || !(ls.armijo > 0.0) {
            return Err(IocError::Contract("invalid line-search parameters".into()));
        }
        if !(reg.min > 0.0 && reg.max > reg.min && reg.factor > 1.0 && reg.initial >= 0.0) {
            return Err(IocError::Contract("invalid regularization schedule".into()));
        }
        Ok(())
    }
}

pub fn rollout(model: &SystemModel, controls: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(model.initial_state().clone());
    for u in controls {
        let next = model.dynamics().step(states.last().expect("non-empty"), u);
        states.push(next);
    }
    states
}

fn total_cost(model: &SystemModel, states: &[DVector<f64>], controls: &[DVector<f64>], theta: &DVector<f64>) -> f64 {
    let obj = model.objective();
    let stages: f64 = controls
        .iter()
        .enumerate()
        .map(|(t, u)| obj.stage_cost(t, &states[t], u, theta))
        .sum();
    obj.terminal_cost(&states[controls.len()], theta) + stages
}

/// `J = c_T(x_T, θ) + Σ_t c_t(x_t, u_t, θ)`.
pub fn objective(model: &SystemModel, trajectory: &Trajectory, theta: &DVector<f64>) -> Result<f64> {
    trajectory.check_against(model)?;
    model.check_params(theta)?;
    Ok(total_cost(model, &trajectory.states, &trajectory.controls, theta))
}

/// First-order data along a trajectory: `(A_k, B_k)` and cost derivatives.
pub(crate) struct Linearization {
    pub jacobians: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    pub stages: Vec<StageDerivatives>,
    pub terminal: TerminalDerivatives,
}

pub(crate) fn linearize(model: &SystemModel, states: &[DVector<f64>], controls: &[DVector<f64>], theta: &DVector<f64>) -> Linearization {
    let horizon = controls.len();
    let mut jacobians = Vec::with_capacity(horizon);
    let mut stages = Vec::with_capacity(horizon);
    for (t, u) in controls.iter().enumerate() {
        jacobians.push(model.jacobians_unchecked(&states[t], u));
        stages.push(model.stage_derivatives_unchecked(t, &states[t], u, theta));
    }
    Linearization {
        jacobians,
        stages,
        terminal: model.terminal_derivatives_unchecked(&states[horizon], theta),
    }
}

/// Costates `p_1 .. p_T` from the adjoint recursion; entry `k` holds `p_{k+1}`.
pub(crate) fn adjoint(lin: &Linearization) -> Vec<DVector<f64>> {
    let horizon = lin.stages.len();
    let mut p = vec![DVector::zeros(0); horizon];
    p[horizon - 1] = lin.terminal.cx.clone();
    for t in (1..horizon).rev() {
        let (a, _) = &lin.jacobians[t];
        p[t - 1] = &lin.stages[t].cx + a.transpose() * &p[t];
    }
    p
}

pub(crate) fn stationarity_from(lin: &Linearization, costates: &[DVector<f64>]) -> f64 {
    lin.stages
        .iter()
        .zip(&lin.jacobians)
        .zip(costates)
        .map(|((d, (_, b)), p)| (&d.cu + b.transpose() * p).amax())
        .fold(0.0, f64::max)
}

/// `max_t ‖∂H/∂u_t‖∞` with costates from the adjoint recursion.
pub fn stationarity_residual(model: &SystemModel, trajectory: &Trajectory, theta: &DVector<f64>) -> Result<f64> {
    trajectory.check_against(model)?;
    model.check_params(theta)?;
    let lin = linearize(model, &trajectory.states, &trajectory.controls, theta);
    let p = adjoint(&lin);
    Ok(stationarity_from(&lin, &p))
}

struct Policy {
    feedback: Vec<DMatrix<f64>>,
    feedforward: Vec<DVector<f64>>,
    /// Predicted change `α dv.0 + α²/2 dv.1`.
    dv: (f64, f64),
}

fn backward_pass(blocks: &[HamiltonianBlocks], terminal: &TerminalDerivatives, mu: f64) -> Option<Policy> {
    let horizon = blocks.len();
    let mut s_mat = symmetrize(&terminal.cxx);
    let mut s_vec = terminal.cx.clone();
    let mut feedback = vec![DMatrix::zeros(0, 0); horizon];
    let mut feedforward = vec![DVector::zeros(0); horizon];
    let mut dv = (0.0, 0.0);
    for k in (0..horizon).rev() {
        let blk = &blocks[k];
        let m = blk.b.ncols();
        let at = blk.a.transpose();
        let bt = blk.b.transpose();
        let qx = &blk.cx + &at * &s_vec;
        let qu = &blk.cu + &bt * &s_vec;
        let sa = &s_mat * &blk.a;
        let qxx = &blk.hxx + &at * &sa;
        let qux = &blk.hux + &bt * &sa;
        let quu = symmetrize(&(&blk.huu + &bt * &s_mat * &blk.b)) + DMatrix::identity(m, m) * mu;
        let chol = cholesky(&quu)?;
        let k_fb = -chol.solve(&qux);
        let k_ff = -chol.solve(&qu);
        let quu_kff = &quu * &k_ff;
        dv.0 += k_ff.dot(&qu);
        dv.1 += k_ff.dot(&quu_kff);
        let kt = k_fb.transpose();
        s_vec = qx + &kt * quu_kff + &kt * &qu + qux.transpose() * &k_ff;
        s_mat = symmetrize(&(qxx + &kt * &quu * &k_fb + &kt * &qux + qux.transpose() * &k_fb));
        feedback[k] = k_fb;
        feedforward[k] = k_ff;
    }
    Some(Policy {
        feedback,
        feedforward,
        dv,
    })
}

fn forward_pass(
    model: &SystemModel,
    states: &[DVector<f64>],
    controls: &[DVector<f64>],
    policy: &Policy,
    alpha: f64,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let mut new_states = Vec::with_capacity(states.len());
    let mut new_controls = Vec::with_capacity(controls.len());
    new_states.push(model.initial_state().clone());
    for k in 0..controls.len() {
        let dx = &new_states[k] - &states[k];
        let u = &controls[k] + &policy.feedforward[k] * alpha + &policy.feedback[k] * dx;
        let next = model.dynamics().step(&new_states[k], &u);
        new_controls.push(u);
        new_states.push(next);
    }
    (new_states, new_controls)
}

/// Solve the forward optimal control problem at `theta`.
///
/// With `warm_start` (and `options.warm_start`), the given controls seed the
/// iteration; otherwise the solve starts from zero controls.
pub fn solve(
    model: &SystemModel,
    theta: &DVector<f64>,
    options: &SolverOptions,
    warm_start: Option<&Trajectory>,
) -> Result<Trajectory> {
    options.validate()?;
    model.check_params(theta)?;
    let horizon = model.horizon();
    let mut controls = match warm_start {
        Some(w) if options.warm_start => {
            w.check_against(model)?;
            w.controls.clone()
        }
        _ => vec![DVector::zeros(model.control_dim()); horizon],
    };
    let mut states = rollout(model, &controls);
    let mut cost = total_cost(model, &states, &controls, theta);
    if !cost.is_finite() {
        return Err(IocError::NonConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let reg = options.regularization;
    let ls = options.line_search;
    let mut mu = reg.initial;
    let mut residual = f64::INFINITY;

    for iter in 0..options.max_iterations {
        let lin = linearize(model, &states, &controls, theta);
        let costates = adjoint(&lin);
        residual = stationarity_from(&lin, &costates);
        if residual <= options.stationarity_tolerance {
            return Ok(Trajectory {
                states,
                controls,
                objective_value: cost,
                stationarity_residual: residual,
                iterations: iter,
            });
        }

        let Linearization {
            jacobians,
            stages,
            terminal,
        } = lin;
        let blocks: Vec<HamiltonianBlocks> = jacobians
            .into_iter()
            .zip(stages)
            .enumerate()
            .map(|(k, ((a, b), d))| model.assemble_blocks(&states[k], &controls[k], &costates[k], a, b, d))
            .collect();

        let policy = loop {
            if let Some(p) = backward_pass(&blocks, &terminal, mu) {
                break p;
            }
            mu = reg.increase(mu);
            if mu > reg.max {
                return Err(IocError::NonConvergence {
                    iterations: iter,
                    residual,
                });
            }
        };

        let noise_floor = 1e-12 * (1.0 + cost.abs());
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= ls.min_step {
            let (xs, us) = forward_pass(model, &states, &controls, &policy, alpha);
            let new_cost = total_cost(model, &xs, &us, theta);
            let predicted = alpha * policy.dv.0 + 0.5 * alpha * alpha * policy.dv.1;
            let sufficient = new_cost <= cost + ls.armijo * predicted.min(0.0);
            let below_roundoff = predicted.abs() < noise_floor && new_cost <= cost + noise_floor;
            if new_cost.is_finite() && (sufficient || below_roundoff) {
                accepted = Some((xs, us, new_cost));
                break;
            }
            alpha *= ls.backtrack;
        }

        match accepted {
            Some((xs, us, new_cost)) => {
                states = xs;
                controls = us;
                cost = new_cost;
                mu = reg.decrease(mu);
            }
            None => {
                mu = reg.increase(mu);
                if mu > reg.max {
                    return Err(IocError::NonConvergence {
                        iterations: iter,
                        residual,
                    });
                }
            }
        }
    }

    let lin = linearize(model, &states, &controls, theta);
    let final_residual = stationarity_from(&lin, &adjoint(&lin));
    if final_residual <= options.stationarity_tolerance {
        return Ok(Trajectory {
            states,
            controls,
            objective_value: cost,
            stationarity_residual: final_residual,
            iterations: options.max_iterations,
        });
    }
    Err(IocError::NonConvergence {
        iterations: options.max_iterations,
        residual: final_residual.min(residual),
    })
}
