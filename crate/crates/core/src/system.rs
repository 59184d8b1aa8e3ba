//! Discrete-time deterministic systems with parameterized additive objectives.
//!
//! A [`SystemModel`] pairs a [`Dynamics`] implementation `x' = f(x, u)` with an
//! [`Objective`] made of stage costs `c_t(x, u, θ)` and a terminal cost
//! `c_T(x, θ)`. Both traits may supply analytic derivatives; anything missing
//! is filled in by central finite differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, IocError, Result};
use crate::finite_diff;
use crate::linalg::{concat, symmetrize};

/// Second derivatives of `pᵀ f(x, u)` for a fixed costate `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    pub xx: DMatrix<f64>,
    pub xu: DMatrix<f64>,
    pub uu: DMatrix<f64>,
}

pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Analytic `(∂f/∂x, ∂f/∂u)`, if available.
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }

    /// Analytic second derivatives of `pᵀ f`, if available.
    fn costate_curvature(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _p: &DVector<f64>,
    ) -> Option<Curvature> {
        None
    }
}

/// First and second derivatives of a stage cost. `e` stands for θ.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDerivatives {
    pub cx: DVector<f64>,
    pub cu: DVector<f64>,
    pub cxx: DMatrix<f64>,
    pub cxu: DMatrix<f64>,
    pub cuu: DMatrix<f64>,
    pub cxe: DMatrix<f64>,
    pub cue: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDerivatives {
    pub cx: DVector<f64>,
    pub cxx: DMatrix<f64>,
    pub cxe: DMatrix<f64>,
}

pub trait Objective: Send + Sync {
    fn param_dim(&self) -> usize;
    fn stage_cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, theta: &DVector<f64>) -> f64;
    fn terminal_cost(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64;

    fn stage_derivatives(
        &self,
        _t: usize,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _theta: &DVector<f64>,
    ) -> Option<StageDerivatives> {
        None
    }

    fn terminal_derivatives(&self, _x: &DVector<f64>, _theta: &DVector<f64>) -> Option<TerminalDerivatives> {
        None
    }
}

/// Unknown objective parameters θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub DVector<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn all_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }
}

impl From<DVector<f64>> for ParamVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// Second-order expansion of the Hamiltonian `H = c_t + fᵀ p_{t+1}` at one stage,
/// plus the cost gradients the forward solver needs.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub hxx: DMatrix<f64>,
    pub hxu: DMatrix<f64>,
    pub hux: DMatrix<f64>,
    pub huu: DMatrix<f64>,
    pub hxe: DMatrix<f64>,
    pub hue: DMatrix<f64>,
    pub cx: DVector<f64>,
    pub cu: DVector<f64>,
}

impl HamiltonianBlocks {
    /// `∂H/∂u = c_u + Bᵀ p_{t+1}`.
    pub fn stationarity(&self, p_next: &DVector<f64>) -> DVector<f64> {
        &self.cu + self.b.transpose() * p_next
    }
}

/// Terminal-cost blocks `∂²c_T/∂x²` and `∂²c_T/∂x∂θ`, plus the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalBlocks {
    pub hxx: DMatrix<f64>,
    pub hxe: DMatrix<f64>,
    pub cx: DVector<f64>,
}

/// Dynamics, objective, initial state and horizon. Immutable and cheap to clone.
#[derive(Clone)]
pub struct SystemModel {
    dynamics: Arc<dyn Dynamics>,
    objective: Arc<dyn Objective>,
    initial_state: DVector<f64>,
    horizon: usize,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("state_dim", &self.state_dim())
            .field("control_dim", &self.control_dim())
            .field("param_dim", &self.param_dim())
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state.as_slice())
            .finish()
    }
}

impl SystemModel {
    pub fn new(
        dynamics: impl Dynamics + 'static,
        objective: impl Objective + 'static,
        initial_state: DVector<f64>,
        horizon: usize,
    ) -> Result<Self> {
        Self::from_parts(Arc::new(dynamics), Arc::new(objective), initial_state, horizon)
    }

    pub fn from_parts(
        dynamics: Arc<dyn Dynamics>,
        objective: Arc<dyn Objective>,
        initial_state: DVector<f64>,
        horizon: usize,
    ) -> Result<Self> {
        if dynamics.state_dim() == 0 || dynamics.control_dim() == 0 || objective.param_dim() == 0 {
            return Err(IocError::Contract("state, control and parameter dimensions must be >= 1".into()));
        }
        if horizon < 1 {
            return Err(IocError::Contract(format!("horizon must be >= 1, got {horizon}")));
        }
        check_dim("initial state", dynamics.state_dim(), initial_state.len())?;
        Ok(Self {
            dynamics,
            objective,
            initial_state,
            horizon,
        })
    }

    /// Same dynamics and objective with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::from_parts(self.dynamics.clone(), self.objective.clone(), self.initial_state.clone(), horizon)
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.objective.param_dim()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.initial_state
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub(crate) fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        check_dim("state", self.state_dim(), x.len())
    }

    pub(crate) fn check_control(&self, u: &DVector<f64>) -> Result<()> {
        check_dim("control", self.control_dim(), u.len())
    }

    pub(crate) fn check_params(&self, theta: &DVector<f64>) -> Result<()> {
        check_dim("parameters", self.param_dim(), theta.len())
    }

    pub(crate) fn check_stage(&self, t: usize) -> Result<()> {
        if t < self.horizon {
            Ok(())
        } else {
            Err(IocError::Contract(format!(
                "stage index {t} outside 0..{}",
                self.horizon
            )))
        }
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_state(x)?;
        self.check_control(u)?;
        Ok(self.dynamics.step(x, u))
    }

    pub fn stage_cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        self.check_state(x)?;
        self.check_control(u)?;
        self.check_params(theta)?;
        Ok(self.objective.stage_cost(t, x, u, theta))
    }

    pub fn terminal_cost(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        self.check_state(x)?;
        self.check_params(theta)?;
        Ok(self.objective.terminal_cost(x, theta))
    }

    /// `H(t, x, u, p, θ) = c_t(x, u, θ) + f(x, u)ᵀ p`.
    pub fn hamiltonian(
        &self,
        t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        p_next: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<f64> {
        self.check_stage(t)?;
        self.check_state(p_next)?;
        let c = self.stage_cost(t, x, u, theta)?;
        Ok(c + self.dynamics.step(x, u).dot(p_next))
    }

    /// `(A, B) = (∂f/∂x, ∂f/∂u)`.
    pub fn dynamics_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_state(x)?;
        self.check_control(u)?;
        Ok(self.jacobians_unchecked(x, u))
    }

    pub(crate) fn jacobians_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        if let Some(ab) = self.dynamics.jacobians(x, u) {
            return ab;
        }
        let n = self.state_dim();
        let z = concat(x, u);
        let j = finite_diff::jacobian(
            |z| {
                let (xz, uz) = split(z, n);
                self.dynamics.step(&xz, &uz)
            },
            &z,
            finite_diff::JACOBIAN_STEP,
        );
        (j.columns(0, n).into_owned(), j.columns(n, self.control_dim()).into_owned())
    }

    /// Second derivatives of `pᵀ f` at `(x, u)`.
    pub(crate) fn curvature_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>, p: &DVector<f64>) -> Curvature {
        if let Some(c) = self.dynamics.costate_curvature(x, u, p) {
            return c;
        }
        let n = self.state_dim();
        let m = self.control_dim();
        let z = concat(x, u);
        let h = if self.dynamics.jacobians(x, u).is_some() {
            // Differentiate the analytic gradient [Aᵀp; Bᵀp].
            let j = finite_diff::jacobian(
                |z| {
                    let (xz, uz) = split(z, n);
                    let (a, b) = self.dynamics.jacobians(&xz, &uz).expect("analytic jacobians");
                    concat(&(a.transpose() * p), &(b.transpose() * p))
                },
                &z,
                finite_diff::JACOBIAN_STEP,
            );
            symmetrize(&j)
        } else {
            finite_diff::hessian(
                |z| {
                    let (xz, uz) = split(z, n);
                    self.dynamics.step(&xz, &uz).dot(p)
                },
                &z,
                finite_diff::HESSIAN_STEP,
            )
        };
        Curvature {
            xx: h.view((0, 0), (n, n)).into_owned(),
            xu: h.view((0, n), (n, m)).into_owned(),
            uu: h.view((n, n), (m, m)).into_owned(),
        }
    }

    pub fn stage_derivatives(
        &self,
        t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<StageDerivatives> {
        self.check_state(x)?;
        self.check_control(u)?;
        self.check_params(theta)?;
        Ok(self.stage_derivatives_unchecked(t, x, u, theta))
    }

    pub(crate) fn stage_derivatives_unchecked(
        &self,
        t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> StageDerivatives {
        if let Some(d) = self.objective.stage_derivatives(t, x, u, theta) {
            return d;
        }
        let n = self.state_dim();
        let m = self.control_dim();
        let np = self.param_dim();
        let z = concat(&concat(x, u), theta);
        let f = |z: &DVector<f64>| {
            let xz = z.rows(0, n).into_owned();
            let uz = z.rows(n, m).into_owned();
            let tz = z.rows(n + m, np).into_owned();
            self.objective.stage_cost(t, &xz, &uz, &tz)
        };
        let g = finite_diff::gradient(f, &z, finite_diff::JACOBIAN_STEP);
        let h = finite_diff::hessian(f, &z, finite_diff::HESSIAN_STEP);
        StageDerivatives {
            cx: g.rows(0, n).into_owned(),
            cu: g.rows(n, m).into_owned(),
            cxx: h.view((0, 0), (n, n)).into_owned(),
            cxu: h.view((0, n), (n, m)).into_owned(),
            cuu: h.view((n, n), (m, m)).into_owned(),
            cxe: h.view((0, n + m), (n, np)).into_owned(),
            cue: h.view((n, n + m), (m, np)).into_owned(),
        }
    }

    pub fn terminal_derivatives(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<TerminalDerivatives> {
        self.check_state(x)?;
        self.check_params(theta)?;
        Ok(self.terminal_derivatives_unchecked(x, theta))
    }

    pub(crate) fn terminal_derivatives_unchecked(&self, x: &DVector<f64>, theta: &DVector<f64>) -> TerminalDerivatives {
        if let Some(d) = self.objective.terminal_derivatives(x, theta) {
            return d;
        }
        let n = self.state_dim();
        let np = self.param_dim();
        let z = concat(x, theta);
        let f = |z: &DVector<f64>| {
            let xz = z.rows(0, n).into_owned();
            let tz = z.rows(n, np).into_owned();
            self.objective.terminal_cost(&xz, &tz)
        };
        let g = finite_diff::gradient(f, &z, finite_diff::JACOBIAN_STEP);
        let h = finite_diff::hessian(f, &z, finite_diff::HESSIAN_STEP);
        TerminalDerivatives {
            cx: g.rows(0, n).into_owned(),
            cxx: h.view((0, 0), (n, n)).into_owned(),
            cxe: h.view((0, n), (n, np)).into_owned(),
        }
    }

    /// All second-derivative blocks of `H` at one stage.
    pub fn hamiltonian_blocks(
        &self,
        t: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        p_next: &DVector<f64>,
        theta: &DVector<f64>,
    ) -> Result<HamiltonianBlocks> {
        self.check_stage(t)?;
        self.check_state(x)?;
        self.check_control(u)?;
        self.check_state(p_next)?;
        self.check_params(theta)?;
        let (a, b) = self.jacobians_unchecked(x, u);
        let d = self.stage_derivatives_unchecked(t, x, u, theta);
        Ok(self.assemble_blocks(x, u, p_next, a, b, d))
    }

    pub(crate) fn assemble_blocks(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        p_next: &DVector<f64>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: StageDerivatives,
    ) -> HamiltonianBlocks {
        let curv = self.curvature_unchecked(x, u, p_next);
        let hxu = d.cxu + curv.xu;
        HamiltonianBlocks {
            a,
            b,
            hxx: symmetrize(&(d.cxx + curv.xx)),
            hux: hxu.transpose(),
            hxu,
            huu: symmetrize(&(d.cuu + curv.uu)),
            hxe: d.cxe,
            hue: d.cue,
            cx: d.cx,
            cu: d.cu,
        }
    }

    pub fn terminal_blocks(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<TerminalBlocks> {
        let d = self.terminal_derivatives(x, theta)?;
        Ok(TerminalBlocks {
            hxx: symmetrize(&d.cxx),
            hxe: d.cxe,
            cx: d.cx,
        })
    }
}

fn split(z: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (z.rows(0, n).into_owned(), z.rows(n, z.len() - n).into_owned())
}

/// Worst relative disagreement between the model's derivatives and
/// finite differences at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub dynamics_jacobian: f64,
    pub hamiltonian_blocks: f64,
}

/// Compare `dynamics_jacobians` and `hamiltonian_blocks` against central
/// differences of `f` and of the Hamiltonian gradient `[H_x; H_u]`.
pub fn derivative_check(
    model: &SystemModel,
    t: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    p_next: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<DerivativeCheck> {
    let n = model.state_dim();
    let m = model.control_dim();
    let np = model.param_dim();
    let blocks = model.hamiltonian_blocks(t, x, u, p_next, theta)?;

    let z = concat(x, u);
    let j = finite_diff::jacobian(
        |z| {
            let (xz, uz) = split(z, n);
            model.dynamics.step(&xz, &uz)
        },
        &z,
        finite_diff::JACOBIAN_STEP,
    );
    let mut ab = DMatrix::zeros(n, n + m);
    ab.columns_mut(0, n).copy_from(&blocks.a);
    ab.columns_mut(n, m).copy_from(&blocks.b);
    let dyn_err = crate::linalg::relative_error(&ab, &j, 1.0);

    // Gradient of H in (x, u) as a function of (x, u, θ).
    let grad = |z: &DVector<f64>| {
        let xz = z.rows(0, n).into_owned();
        let uz = z.rows(n, m).into_owned();
        let tz = z.rows(n + m, np).into_owned();
        let (a, b) = model.jacobians_unchecked(&xz, &uz);
        let d = model.stage_derivatives_unchecked(t, &xz, &uz, &tz);
        concat(&(d.cx + a.transpose() * p_next), &(d.cu + b.transpose() * p_next))
    };
    let zt = concat(&z, theta);
    let h = finite_diff::jacobian(grad, &zt, finite_diff::JACOBIAN_STEP);
    let pairs = [
        (&blocks.hxx, h.view((0, 0), (n, n)).into_owned()),
        (&blocks.hxu, h.view((0, n), (n, m)).into_owned()),
        (&blocks.hux, h.view((n, 0), (m, n)).into_owned()),
        (&blocks.huu, h.view((n, n), (m, m)).into_owned()),
        (&blocks.hxe, h.view((0, n + m), (n, np)).into_owned()),
        (&blocks.hue, h.view((n, n + m), (m, np)).into_owned()),
    ];
    let blocks_err = pairs
        .iter()
        .map(|(a, b)| crate::linalg::relative_error(a, b, 1.0))
        .fold(0.0, f64::max);
    Ok(DerivativeCheck {
        dynamics_jacobian: dyn_err,
        hamiltonian_blocks: blocks_err,
    })
}

/// Dynamics defined by closures, with finite-difference derivatives.
pub struct FnDynamics<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnDynamics<F>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(state_dim: usize, control_dim: usize, f: F) -> Self {
        Self {
            n: state_dim,
            m: control_dim,
            f,
        }
    }
}

impl<F> Dynamics for FnDynamics<F>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }
    fn control_dim(&self) -> usize {
        self.m
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, u)
    }
}

/// `x' = A x + B u` with exact derivatives.
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(IocError::Contract("A must be n×n and B n×m".into()));
        }
        Ok(Self { a, b })
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.a.clone(), self.b.clone()))
    }
    fn costate_curvature(&self, _x: &DVector<f64>, _u: &DVector<f64>, _p: &DVector<f64>) -> Option<Curvature> {
        let n = self.state_dim();
        let m = self.control_dim();
        Some(Curvature {
            xx: DMatrix::zeros(n, n),
            xu: DMatrix::zeros(n, m),
            uu: DMatrix::zeros(m, m),
        })
    }
}

type StageFn = dyn Fn(usize, &DVector<f64>, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
type TerminalFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;

/// Objective defined by closures, with finite-difference derivatives.
pub struct FnObjective {
    param_dim: usize,
    stage: Box<StageFn>,
    terminal: Box<TerminalFn>,
}

impl FnObjective {
    pub fn new(
        param_dim: usize,
        stage: impl Fn(usize, &DVector<f64>, &DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            param_dim,
            stage: Box::new(stage),
            terminal: Box::new(terminal),
        }
    }
}

impl Objective for FnObjective {
    fn param_dim(&self) -> usize {
        self.param_dim
    }
    fn stage_cost(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        (self.stage)(t, x, u, theta)
    }
    fn terminal_cost(&self, x: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        (self.terminal)(x, theta)
    }
}
