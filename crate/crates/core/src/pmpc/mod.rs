//! Joint optimal control problem for one or two quadrotors.
//!
//! The problem is transcribed by direct multiple shooting over the RK4
//! discretization and solved by a Gauss-Newton SQP. Each iteration condenses
//! the linearized dynamics into an input-only box QP per vehicle. The
//! collision reward is concave, so only its gradient enters the QP; the
//! line search on an exact-penalty merit function accounts for the rest.

mod cost;
mod qp;

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

pub use cost::{collision_cost, dynamic_weights, sigmoid, waypoint_cost, WeightMode, WeightParams};
pub use qp::{solve_box_qp, BoxQpSolution};

use crate::model::{
    discrete_step, discrete_step_linearized, InputJacobian, InputVector, ModelParams, QuadState, StateJacobian,
    StateVector, INPUT_DIM, STATE_DIM,
};
use crate::{Error, Result};

/// Solver and objective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Prediction horizon N [steps].
    pub horizon: usize,
    /// Discretization step Δt [s].
    pub dt: f64,
    /// Sigmoid switching offset μ [m² or (m/s)²].
    pub mu: f64,
    /// Position weight slope σ^ξ.
    pub sigma_pos: f64,
    /// Velocity weight slope σ^v.
    pub sigma_vel: f64,
    /// Switching offset of the velocity weight; `μ` when unset.
    pub mu_vel: Option<f64>,
    /// Constant factor on the velocity term.
    pub velocity_scale: f64,
    pub weight_mode: WeightMode,
    /// Track the point-mass velocity stage by stage instead of the constant
    /// waypoint velocity.
    pub track_reference: bool,
    /// Collision reward weight W_col.
    pub collision_weight: f64,
    /// Per-step saturation distance d_sat [m]; defaults to 3·δ_tol.
    pub collision_saturation: Option<f64>,
    /// SQP iterations per control cycle.
    pub max_iterations: usize,
    /// SQP iterations in offline refinement mode.
    pub offline_iterations: usize,
    pub kkt_tolerance: f64,
    pub step_tolerance: f64,
    /// Smallest Levenberg-Marquardt damping on the condensed Hessian; raised
    /// tenfold whenever a full step is rejected.
    pub regularization: f64,
    /// Lateral offset [m] used to break exact head-on symmetry in the initial guess.
    pub symmetry_offset: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.03,
            mu: 0.6,
            sigma_pos: 10.0,
            sigma_vel: -100.0,
            mu_vel: None,
            velocity_scale: 50.0,
            weight_mode: WeightMode::VelocityError,
            track_reference: true,
            collision_weight: 1000.0,
            collision_saturation: None,
            max_iterations: 3,
            offline_iterations: 50,
            kkt_tolerance: 1e-4,
            step_tolerance: 1e-6,
            regularization: 1e-6,
            symmetry_offset: 0.05,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(m.to_string()));
        if self.horizon < 2 {
            return fail("N >= 2");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return fail("Δt > 0");
        }
        if ![self.mu, self.sigma_pos, self.sigma_vel, self.mu_vel.unwrap_or(0.0)].iter().all(|v| v.is_finite()) {
            return fail("μ, μ_v, σ^ξ, σ^v finite");
        }
        if !(self.velocity_scale.is_finite() && self.velocity_scale > 0.0) {
            return fail("velocity_scale > 0");
        }
        if !(self.collision_weight.is_finite() && self.collision_weight >= 0.0) {
            return fail("W_col >= 0");
        }
        if let Some(d) = self.collision_saturation {
            if !(d.is_finite() && d > 0.0) {
                return fail("d_sat > 0");
            }
        }
        if self.max_iterations == 0 || self.offline_iterations == 0 {
            return fail("iteration caps >= 1");
        }
        if !(self.kkt_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return fail("tolerances > 0");
        }
        if !(self.regularization.is_finite() && self.regularization > 0.0) {
            return fail("regularization > 0");
        }
        if !(self.symmetry_offset.is_finite() && self.symmetry_offset >= 0.0) {
            return fail("symmetry_offset >= 0");
        }
        Ok(())
    }

    pub fn weight_params(&self) -> WeightParams {
        WeightParams {
            mu: self.mu,
            sigma_pos: self.sigma_pos,
            sigma_vel: self.sigma_vel,
            mu_vel: self.mu_vel.unwrap_or(self.mu),
            vel_scale: self.velocity_scale,
            mode: self.weight_mode,
        }
    }

    pub fn saturation(&self, params: &ModelParams) -> f64 {
        self.collision_saturation.unwrap_or(3.0 * params.collision_tolerance)
    }
}

/// One vehicle's part of the problem.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTask {
    pub initial: QuadState,
    /// Target waypoint position at solve time.
    pub waypoint: Vector3<f64>,
    /// Reference velocity at the waypoint.
    pub waypoint_velocity: Vector3<f64>,
    /// Per-stage velocity reference (N+1 entries) replacing `waypoint_velocity`
    /// in the velocity term; empty for a constant reference.
    pub velocity_profile: Vec<Vector3<f64>>,
}

impl QuadTask {
    pub fn new(initial: QuadState, waypoint: Vector3<f64>, waypoint_velocity: Vector3<f64>) -> Self {
        Self { initial, waypoint, waypoint_velocity, velocity_profile: Vec::new() }
    }

    fn velocity_refs(&self) -> &[Vector3<f64>] {
        if self.velocity_profile.is_empty() {
            std::slice::from_ref(&self.waypoint_velocity)
        } else {
            &self.velocity_profile
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpProblem {
    /// One or two vehicles.
    pub quads: Vec<QuadTask>,
    /// Last step index of the collision window; `None` disables the term.
    pub collision_window: Option<usize>,
    pub config: SolverConfig,
    pub params: ModelParams,
}

impl OcpProblem {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.params.validate()?;
        if self.quads.is_empty() || self.quads.len() > 2 {
            return Err(Error::InvalidArgument("problem holds one or two vehicles".into()));
        }
        for q in &self.quads {
            q.initial.check_finite()?;
            if !(q.waypoint.iter().chain(q.waypoint_velocity.iter()).all(|v| v.is_finite())) {
                return Err(Error::InvalidArgument("waypoint reference not finite".into()));
            }
            if !q.velocity_profile.is_empty() && q.velocity_profile.len() != self.config.horizon + 1 {
                return Err(Error::InvalidArgument(format!(
                    "velocity profile has {} entries, expected N+1 = {}",
                    q.velocity_profile.len(),
                    self.config.horizon + 1
                )));
            }
            if !q.velocity_profile.iter().all(|v| v.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidArgument("velocity profile not finite".into()));
            }
        }
        if let Some(tc) = self.collision_window {
            if tc > self.config.horizon {
                return Err(Error::InvalidArgument(format!("collision window {tc} beyond horizon")));
            }
        }
        Ok(())
    }

    fn window(&self) -> Option<usize> {
        if self.quads.len() == 2 {
            self.collision_window
        } else {
            None
        }
    }
}

/// State and input sequences of one vehicle: `N + 1` states, `N` inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTrajectory {
    pub states: Vec<StateVector>,
    pub inputs: Vec<InputVector>,
}

impl QuadTrajectory {
    /// Hover inputs with all states equal to `x0`.
    pub fn hover(x0: &QuadState, horizon: usize, params: &ModelParams) -> Self {
        let x = x0.to_vector();
        Self {
            states: vec![x; horizon + 1],
            inputs: vec![InputVector::new(params.hover_thrust(), 0.0, 0.0, 0.0); horizon],
        }
    }

    /// Reference guess: positions and velocities from `samples` (`N + 1`
    /// entries at `k·Δt`), attitude from `x0`, hover inputs.
    pub fn from_reference(x0: &QuadState, samples: &[(Vector3<f64>, Vector3<f64>)], params: &ModelParams) -> Self {
        let horizon = samples.len() - 1;
        let mut out = Self::hover(x0, horizon, params);
        for (x, (p, v)) in out.states.iter_mut().zip(samples).skip(1) {
            x.fixed_rows_mut::<3>(0).copy_from(p);
            x.fixed_rows_mut::<3>(3).copy_from(v);
        }
        out
    }

    /// Largest multiple-shooting gap `‖x_{k+1} − f(x_k, u_k)‖∞`.
    pub fn dynamics_residual(&self, dt: f64, params: &ModelParams) -> f64 {
        self.inputs
            .iter()
            .enumerate()
            .map(|(k, u)| (discrete_step(&self.states[k], u, dt, params) - self.states[k + 1]).amax())
            .fold(0.0, f64::max)
    }

    pub fn state(&self, k: usize) -> QuadState {
        QuadState::from_vector(&self.states[k])
    }

    fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub quads: Vec<QuadTrajectory>,
    /// Objective with the dynamic weights evaluated at the solution.
    pub objective: f64,
    pub iterations: usize,
    /// Wall-clock solve time [s].
    pub solve_time: f64,
    pub converged: bool,
    /// Stationarity and gap measure at the last linearization.
    pub kkt_residual: f64,
    pub dynamics_residual: f64,
    /// Merit before and after each accepted step, both under that
    /// iteration's frozen weights and penalty.
    pub merit_steps: Vec<(f64, f64)>,
}

/// Moves a previous solution forward by `elapsed` seconds. Samples that fall
/// past its end come from `fill` (`N + 1` reference samples at the new time)
/// with hover inputs.
pub fn shift_warm_start(
    prev: &QuadTrajectory,
    fill: &[(Vector3<f64>, Vector3<f64>)],
    elapsed: f64,
    dt: f64,
    params: &ModelParams,
) -> QuadTrajectory {
    let n = prev.horizon();
    let hover = InputVector::new(params.hover_thrust(), 0.0, 0.0, 0.0);
    let mut states = Vec::with_capacity(n + 1);
    let mut inputs = Vec::with_capacity(n);
    for k in 0..=n {
        let t = (elapsed + k as f64 * dt) / dt;
        let i = t.floor() as usize;
        let frac = t - i as f64;
        let state = if i + 1 <= n {
            let mut x = prev.states[i] * (1.0 - frac) + prev.states[i + 1] * frac;
            let qn = x.fixed_rows::<4>(6).norm();
            x.fixed_rows_mut::<4>(6).unscale_mut(qn);
            x
        } else if i == n && frac == 0.0 {
            prev.states[n]
        } else {
            let mut x = *states.last().unwrap_or(&prev.states[n]);
            let (p, v) = fill[k.min(fill.len() - 1)];
            x.fixed_rows_mut::<3>(0).copy_from(&p);
            x.fixed_rows_mut::<3>(3).copy_from(&v);
            x
        };
        states.push(state);
        if k < n {
            inputs.push(if i < n { prev.inputs[i] } else { hover });
        }
    }
    QuadTrajectory { states, inputs }
}

struct Linearization {
    a: Vec<StateJacobian>,
    b: Vec<InputJacobian>,
    gaps: Vec<StateVector>,
}

fn linearize(traj: &QuadTrajectory, dt: f64, params: &ModelParams) -> Linearization {
    let n = traj.horizon();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    for k in 0..n {
        let (f, ak, bk) = discrete_step_linearized(&traj.states[k], &traj.inputs[k], dt, params);
        a.push(ak);
        b.push(bk);
        gaps.push(f - traj.states[k + 1]);
    }
    Linearization { a, b, gaps }
}

/// Weights frozen at one iterate.
struct Frozen {
    w_pos: Vec<Vec<f64>>,
    w_vel: Vec<Vec<f64>>,
}

fn freeze_weights(problem: &OcpProblem, trajs: &[QuadTrajectory]) -> Frozen {
    let w = problem.config.weight_params();
    let mut w_pos = Vec::new();
    let mut w_vel = Vec::new();
    for (task, traj) in problem.quads.iter().zip(trajs) {
        let refs = task.velocity_refs();
        let (p, v): (Vec<f64>, Vec<f64>) = traj
            .states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                dynamic_weights(
                    &x.fixed_rows::<3>(0).into_owned(),
                    &x.fixed_rows::<3>(3).into_owned(),
                    &task.waypoint,
                    &refs[k.min(refs.len() - 1)],
                    &w,
                )
            })
            .unzip();
        w_pos.push(p);
        w_vel.push(v);
    }
    Frozen { w_pos, w_vel }
}

fn positions(traj: &QuadTrajectory) -> Vec<Vector3<f64>> {
    traj.states.iter().map(|x| x.fixed_rows::<3>(0).into_owned()).collect()
}

/// Objective with frozen weights, plus per-state gradients.
fn frozen_objective(
    problem: &OcpProblem,
    trajs: &[QuadTrajectory],
    frozen: &Frozen,
    want_grad: bool,
) -> (f64, Vec<Vec<StateVector>>) {
    let mut total = 0.0;
    let mut grads = Vec::new();
    for (j, (task, traj)) in problem.quads.iter().zip(trajs).enumerate() {
        let mut g = Vec::new();
        let refs = task.velocity_refs();
        for (k, x) in traj.states.iter().enumerate() {
            let e = x.fixed_rows::<3>(0) - task.waypoint;
            let ev = x.fixed_rows::<3>(3) - refs[k.min(refs.len() - 1)];
            let (wp, wv) = (frozen.w_pos[j][k], frozen.w_vel[j][k]);
            total += wp * e.norm_squared() + wv * ev.norm_squared();
            if want_grad {
                let mut gk = StateVector::zeros();
                gk.fixed_rows_mut::<3>(0).copy_from(&(e * (2.0 * wp)));
                gk.fixed_rows_mut::<3>(3).copy_from(&(ev * (2.0 * wv)));
                g.push(gk);
            }
        }
        grads.push(g);
    }
    if let Some(tc) = problem.window() {
        let (c, ga, gb) = collision_cost(
            &positions(&trajs[0]),
            &positions(&trajs[1]),
            Some(tc),
            &problem.params.downwash,
            problem.config.collision_weight,
            problem.config.saturation(&problem.params),
        );
        total += c;
        if want_grad {
            for (j, gc) in [ga, gb].into_iter().enumerate() {
                for (k, g) in gc.into_iter().enumerate() {
                    let mut row = grads[j][k].fixed_rows::<3>(0).into_owned();
                    row += g;
                    grads[j][k].fixed_rows_mut::<3>(0).copy_from(&row);
                }
            }
        }
    }
    (total, grads)
}

/// Objective with the dynamic weights evaluated at `trajs`.
pub fn evaluate_objective(problem: &OcpProblem, trajs: &[QuadTrajectory]) -> f64 {
    let w = problem.config.weight_params();
    let mut total: f64 = problem
        .quads
        .iter()
        .zip(trajs)
        .map(|(task, traj)| waypoint_cost(&traj.states, &task.waypoint, task.velocity_refs(), &w).0)
        .sum();
    if let Some(tc) = problem.window() {
        total += collision_cost(
            &positions(&trajs[0]),
            &positions(&trajs[1]),
            Some(tc),
            &problem.params.downwash,
            problem.config.collision_weight,
            problem.config.saturation(&problem.params),
        )
        .0;
    }
    total
}

fn gap_l1(trajs: &[QuadTrajectory], dt: f64, params: &ModelParams) -> f64 {
    trajs
        .iter()
        .map(|t| {
            (0..t.horizon())
                .map(|k| (discrete_step(&t.states[k], &t.inputs[k], dt, params) - t.states[k + 1]).lp_norm(1))
                .sum::<f64>()
        })
        .sum()
}

/// Condensed QP data for one vehicle.
struct Condensed {
    /// Sensitivity of the stacked `Δx_1..Δx_N` to `Δu_0..Δu_{N−1}`.
    g: DMatrix<f64>,
    /// Free response from the gaps.
    c: DVector<f64>,
    hess: DMatrix<f64>,
    grad: DVector<f64>,
    /// Diagonal state weights per stacked row.
    q: DVector<f64>,
    /// State gradient per stacked row.
    gx: DVector<f64>,
}

fn condense(lin: &Linearization, q_diag: &[StateVector], gx: &[StateVector]) -> Condensed {
    let n = lin.a.len();
    let (nx, nu) = (STATE_DIM, INPUT_DIM);
    let mut g = DMatrix::zeros(n * nx, n * nu);
    let mut c = DVector::zeros(n * nx);
    let mut prev_c = StateVector::zeros();
    for k in 0..n {
        // Row block k holds Δx_{k+1}.
        if k > 0 {
            for i in 0..k {
                let blk = lin.a[k] * g.fixed_view::<STATE_DIM, INPUT_DIM>((k - 1) * nx, i * nu);
                g.fixed_view_mut::<STATE_DIM, INPUT_DIM>(k * nx, i * nu).copy_from(&blk);
            }
        }
        g.fixed_view_mut::<STATE_DIM, INPUT_DIM>(k * nx, k * nu).copy_from(&lin.b[k]);
        let ck = lin.a[k] * prev_c + lin.gaps[k];
        c.fixed_rows_mut::<STATE_DIM>(k * nx).copy_from(&ck);
        prev_c = ck;
    }
    let q = DVector::from_fn(n * nx, |r, _| q_diag[r / nx + 1][r % nx]);
    let gxv = DVector::from_fn(n * nx, |r, _| gx[r / nx + 1][r % nx]);
    // Backward sweep over the block lower-triangular G:
    // V_kj = Q_k G_kj + A_{k+1}ᵀ V_{k+1,j} and H_kj = B_kᵀ V_kj for k ≥ j.
    let mut hess = DMatrix::zeros(n * nu, n * nu);
    for j in 0..n {
        let mut v = InputJacobian::zeros();
        for k in (j..n).rev() {
            let mut qg: InputJacobian = g.fixed_view::<STATE_DIM, INPUT_DIM>(k * nx, j * nu).into_owned();
            for (r, mut row) in qg.row_iter_mut().enumerate() {
                row *= q_diag[k + 1][r];
            }
            v = if k + 1 < n { qg + lin.a[k + 1].tr_mul(&v) } else { qg };
            let h_kj = lin.b[k].tr_mul(&v);
            if k == j {
                let sym = (h_kj + h_kj.transpose()) * 0.5;
                hess.fixed_view_mut::<INPUT_DIM, INPUT_DIM>(k * nu, j * nu).copy_from(&sym);
            } else {
                hess.fixed_view_mut::<INPUT_DIM, INPUT_DIM>(k * nu, j * nu).copy_from(&h_kj);
                hess.fixed_view_mut::<INPUT_DIM, INPUT_DIM>(j * nu, k * nu).copy_from(&h_kj.transpose());
            }
        }
    }
    let mut grad = DVector::zeros(n * nu);
    let mut lam = StateVector::zeros();
    for k in (0..n).rev() {
        let ck = c.fixed_rows::<STATE_DIM>(k * nx);
        let own = ck.component_mul(&q_diag[k + 1]) + gx[k + 1];
        lam = if k + 1 < n { own + lin.a[k + 1].tr_mul(&lam) } else { own };
        grad.fixed_rows_mut::<INPUT_DIM>(k * nu).copy_from(&lin.b[k].tr_mul(&lam));
    }
    Condensed { g, c, hess, grad, q, gx: gxv }
}

const MAX_DAMPING_TRIES: usize = 6;

fn apply_step(
    trajs: &[QuadTrajectory],
    steps: &[(DVector<f64>, DVector<f64>)],
    alpha: f64,
    lo: &InputVector,
    hi: &InputVector,
) -> Vec<QuadTrajectory> {
    trajs
        .iter()
        .zip(steps)
        .map(|(t, (du, dx))| {
            let mut t = t.clone();
            for k in 0..t.horizon() {
                t.states[k + 1] += dx.fixed_rows::<STATE_DIM>(k * STATE_DIM) * alpha;
                normalize_attitude(&mut t.states[k + 1]);
                t.inputs[k] += du.fixed_rows::<INPUT_DIM>(k * INPUT_DIM) * alpha;
                clamp_inputs(&mut t.inputs[k], lo, hi);
            }
            t
        })
        .collect()
}

/// Largest costate magnitude from the backward recursion of the QP solution.
fn costate_bound(lin: &Linearization, cond: &Condensed, dx: &DVector<f64>) -> f64 {
    let n = lin.a.len();
    let nx = STATE_DIM;
    let mut lambda = StateVector::zeros();
    let mut bound: f64 = 0.0;
    for k in (0..n).rev() {
        let r = k * nx;
        let local = StateVector::from_fn(|i, _| cond.q[r + i] * dx[r + i] + cond.gx[r + i]);
        lambda = if k + 1 < n { local + lin.a[k + 1].transpose() * lambda } else { local };
        bound = bound.max(lambda.amax());
    }
    bound
}

fn clamp_inputs(u: &mut InputVector, lo: &InputVector, hi: &InputVector) {
    for i in 0..INPUT_DIM {
        u[i] = u[i].clamp(lo[i], hi[i]);
    }
}

fn normalize_attitude(x: &mut StateVector) {
    let n = x.fixed_rows::<4>(6).norm();
    if n > 0.0 {
        x.fixed_rows_mut::<4>(6).unscale_mut(n);
    }
}

/// Offsets the second vehicle's guess sideways when both guesses lie on one
/// line through the initial positions, so the collision gradient has a
/// lateral component.
fn break_symmetry(problem: &OcpProblem, trajs: &mut [QuadTrajectory]) {
    let Some(tc) = problem.window() else { return };
    let offset = problem.config.symmetry_offset;
    if offset == 0.0 {
        return;
    }
    let p0 = positions(&trajs[0]);
    let p1 = positions(&trajs[1]);
    let side = match nalgebra::Unit::try_new((p1[0] - p0[0]).cross(&Vector3::z()), 1e-9) {
        Some(s) => s.into_inner(),
        None => Vector3::x(),
    };
    // Already separated sideways somewhere in the window.
    if (0..=tc.min(p0.len() - 1)).any(|k| (p1[k] - p0[k]).dot(&side).abs() >= offset) {
        return;
    }
    let n = trajs[1].horizon();
    for (k, x) in trajs[1].states.iter_mut().enumerate().skip(1) {
        let shift = side * (offset * k as f64 / n as f64);
        let p = x.fixed_rows::<3>(0) + shift;
        x.fixed_rows_mut::<3>(0).copy_from(&p);
    }
}

/// Solves the problem from `guess` (hover guess when `None`) with at most
/// `max_iterations` SQP iterations.
pub fn solve_ocp_with(problem: &OcpProblem, guess: Option<&[QuadTrajectory]>, max_iterations: usize) -> Result<OcpSolution> {
    let started = Instant::now();
    problem.validate()?;
    let cfg = &problem.config;
    let params = &problem.params;
    let n = cfg.horizon;
    let nq = problem.quads.len();

    let mut trajs: Vec<QuadTrajectory> = match guess {
        Some(g) => {
            if g.len() != nq || g.iter().any(|t| t.horizon() != n || t.states.len() != n + 1) {
                return Err(Error::InvalidArgument("warm start does not match the problem size".into()));
            }
            g.to_vec()
        }
        None => problem.quads.iter().map(|q| QuadTrajectory::hover(&q.initial, n, params)).collect(),
    };
    let lo = params.input_lower();
    let hi = params.input_upper();
    for (traj, task) in trajs.iter_mut().zip(&problem.quads) {
        traj.states[0] = task.initial.to_vector();
        for x in traj.states.iter_mut() {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument("warm start is not finite".into()));
            }
            normalize_attitude(x);
        }
        for u in traj.inputs.iter_mut() {
            clamp_inputs(u, &lo, &hi);
        }
    }
    if nq == 2 {
        break_symmetry(problem, &mut trajs);
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut merit_steps = Vec::new();
    let mut rho: f64 = 0.0;
    let mut damping = cfg.regularization;

    while iterations < max_iterations {
        let frozen = freeze_weights(problem, &trajs);
        let (obj0, grads) = frozen_objective(problem, &trajs, &frozen, true);
        let lins: Vec<Linearization> = trajs.iter().map(|t| linearize(t, cfg.dt, params)).collect();
        let max_gap = lins.iter().flat_map(|l| l.gaps.iter()).map(|g| g.amax()).fold(0.0, f64::max);

        let mut conds = Vec::with_capacity(nq);
        let mut boxes = Vec::with_capacity(nq);
        let mut proj_grad: f64 = 0.0;
        for j in 0..nq {
            let q_diag: Vec<StateVector> = (0..=n)
                .map(|k| {
                    let mut q = StateVector::zeros();
                    for i in 0..3 {
                        q[i] = 2.0 * frozen.w_pos[j][k];
                        q[3 + i] = 2.0 * frozen.w_vel[j][k];
                    }
                    q
                })
                .collect();
            let cond = condense(&lins[j], &q_diag, &grads[j]);
            let u_lo = DVector::from_fn(n * INPUT_DIM, |r, _| lo[r % INPUT_DIM] - trajs[j].inputs[r / INPUT_DIM][r % INPUT_DIM]);
            let u_hi = DVector::from_fn(n * INPUT_DIM, |r, _| hi[r % INPUT_DIM] - trajs[j].inputs[r / INPUT_DIM][r % INPUT_DIM]);
            for r in 0..n * INPUT_DIM {
                let gr = cond.grad[r];
                let blocked = (u_lo[r] >= 0.0 && gr > 0.0) || (u_hi[r] <= 0.0 && gr < 0.0);
                if !blocked {
                    proj_grad = proj_grad.max(gr.abs());
                }
            }
            conds.push(cond);
            boxes.push((u_lo, u_hi));
        }
        kkt = proj_grad.max(max_gap);
        if kkt < cfg.kkt_tolerance {
            converged = true;
            break;
        }

        let gap_sum: f64 = lins.iter().flat_map(|l| l.gaps.iter()).map(|g| g.lp_norm(1)).sum();
        let mut accepted: Option<(Vec<QuadTrajectory>, f64, f64, f64)> = None;
        let mut merit0 = f64::NAN;
        for attempt in 0..MAX_DAMPING_TRIES {
            let mut steps = Vec::with_capacity(nq);
            let mut predicted = 0.0;
            let mut lambda_bound: f64 = 0.0;
            for (j, cond) in conds.iter().enumerate() {
                let mut hess = cond.hess.clone();
                for i in 0..n * INPUT_DIM {
                    hess[(i, i)] += damping;
                }
                let (u_lo, u_hi) = &boxes[j];
                let du = solve_box_qp(&hess, &cond.grad, u_lo, u_hi, &DVector::zeros(n * INPUT_DIM))?.z;
                let dx = &cond.g * &du + &cond.c;
                predicted -= 0.5 * du.dot(&(&hess * &du)) + cond.grad.dot(&du);
                lambda_bound = lambda_bound.max(costate_bound(&lins[j], cond, &dx));
                steps.push((du, dx));
            }
            if attempt == 0 {
                rho = rho.max(2.0 * lambda_bound + 1e-3);
                merit0 = obj0 + rho * gap_l1(&trajs, cfg.dt, params);
            }
            let model_decrease = predicted.max(0.0) + rho * gap_sum;
            let step_inf = steps.iter().map(|(du, _)| du.amax()).fold(0.0, f64::max);
            let last = attempt + 1 == MAX_DAMPING_TRIES;
            let mut alpha = 1.0;
            for _ in 0..if last { 20 } else { 1 } {
                let trial = apply_step(&trajs, &steps, alpha, &lo, &hi);
                let (obj, _) = frozen_objective(problem, &trial, &frozen, false);
                let merit = obj + rho * gap_l1(&trial, cfg.dt, params);
                if merit.is_finite() && merit <= merit0 - 1e-4 * alpha * model_decrease {
                    accepted = Some((trial, merit, alpha, step_inf * alpha));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                if attempt == 0 {
                    damping = (damping * 0.1).max(cfg.regularization);
                }
                break;
            }
            damping *= 10.0;
        }
        iterations += 1;
        log::trace!(
            "sqp iteration {iterations}: kkt {kkt:.3e}, gap {max_gap:.3e}, damping {damping:.1e}, merit {merit0:.6e}, step {:?}",
            accepted.as_ref().map(|a| a.2)
        );
        let Some((trial, merit, _, step_norm)) = accepted else { break };
        trajs = trial;
        merit_steps.push((merit0, merit));
        if step_norm < cfg.step_tolerance {
            converged = true;
            break;
        }
    }

    let dynamics_residual = trajs.iter().map(|t| t.dynamics_residual(cfg.dt, params)).fold(0.0, f64::max);
    let objective = evaluate_objective(problem, &trajs);
    if !objective.is_finite() {
        return Err(Error::Solver("objective is not finite".into()));
    }
    Ok(OcpSolution {
        quads: trajs,
        objective,
        iterations,
        solve_time: started.elapsed().as_secs_f64(),
        converged,
        kkt_residual: kkt,
        dynamics_residual,
        merit_steps,
    })
}

/// Online solve with the configured per-cycle iteration cap.
pub fn solve_ocp(problem: &OcpProblem, guess: Option<&[QuadTrajectory]>) -> Result<OcpSolution> {
    solve_ocp_with(problem, guess, problem.config.max_iterations)
}
