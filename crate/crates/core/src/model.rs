//! Quadrotor rigid-body model driven by collective thrust and body rates.
//!
//! State is `(position, velocity, attitude)` with the attitude quaternion
//! rotating body frame into world frame. The thrust vector `(0, 0, ΣT)` is
//! expressed in body frame. Integration uses classical RK4 with the input held
//! constant over the step and the quaternion renormalized once per step.

use nalgebra::{Matrix3, Matrix4, Quaternion, SMatrix, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of scalar state components: position (3), velocity (3), quaternion (4).
pub const STATE_DIM: usize = 10;
/// Number of scalar inputs: collective thrust and three body rates.
pub const INPUT_DIM: usize = 4;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type InputVector = SVector<f64, INPUT_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputJacobian = SMatrix<f64, STATE_DIM, INPUT_DIM>;

const UNIT_NORM_TOL: f64 = 1e-6;

/// Full rigid-body state of one quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    /// World position [m].
    pub position: Vector3<f64>,
    /// World velocity [m/s].
    pub velocity: Vector3<f64>,
    /// Body-to-world attitude, unit quaternion.
    pub attitude: Quaternion<f64>,
}

impl QuadState {
    /// Builds a state, normalizing the attitude and rejecting non-finite input.
    pub fn new(
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        attitude: Quaternion<f64>,
    ) -> Result<Self> {
        let norm = attitude.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidState("attitude quaternion has zero or non-finite norm".into()));
        }
        let state = Self {
            position,
            velocity,
            attitude: attitude / norm,
        };
        state.check_finite()?;
        Ok(state)
    }

    /// Level hover at `position` with zero velocity.
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Quaternion::identity(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidState("state has non-finite components".into()))
        }
    }

    fn check_unit(&self) -> Result<()> {
        let n = self.attitude.norm();
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidState(format!(
                "attitude quaternion norm {n} is not unit"
            )));
        }
        Ok(())
    }

    /// Packs the state as `[ξ, v, (w, x, y, z)]`.
    pub fn to_vector(&self) -> StateVector {
        let q = &self.attitude;
        StateVector::from_column_slice(&[
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ])
    }

    /// Inverse of [`QuadState::to_vector`]; the quaternion is taken as-is.
    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: Vector3::new(x[0], x[1], x[2]),
            velocity: Vector3::new(x[3], x[4], x[5]),
            attitude: Quaternion::new(x[6], x[7], x[8], x[9]),
        }
    }
}

/// Collective thrust and body rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Sum of rotor thrusts [N].
    pub thrust: f64,
    /// Body rates [rad/s].
    pub body_rates: Vector3<f64>,
}

impl ControlInput {
    pub fn new(thrust: f64, body_rates: Vector3<f64>) -> Self {
        Self { thrust, body_rates }
    }

    /// Thrust that cancels gravity with zero rates.
    pub fn hover(params: &ModelParams) -> Self {
        Self {
            thrust: params.hover_thrust(),
            body_rates: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> InputVector {
        InputVector::new(
            self.thrust,
            self.body_rates.x,
            self.body_rates.y,
            self.body_rates.z,
        )
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self {
            thrust: u[0],
            body_rates: Vector3::new(u[1], u[2], u[3]),
        }
    }

    /// Projects onto the input box of `params`.
    pub fn clamped(&self, params: &ModelParams) -> Self {
        let lo = params.input_lower();
        let hi = params.input_upper();
        let u = self.to_vector().zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h));
        Self::from_vector(&u)
    }

    pub fn is_finite(&self) -> bool {
        self.thrust.is_finite() && self.body_rates.iter().all(|v| v.is_finite())
    }
}

/// Physical parameters and input bounds shared by the simulator and the OCP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Vehicle mass [kg].
    pub mass: f64,
    /// Gravity vector [m/s²].
    pub gravity: Vector3<f64>,
    /// Collective thrust lower bound [N].
    pub thrust_min: f64,
    /// Collective thrust upper bound [N].
    pub thrust_max: f64,
    /// Symmetric body-rate bound per axis [rad/s].
    pub rate_max: Vector3<f64>,
    /// Diagonal of the downwash scaling matrix E.
    pub downwash: Vector3<f64>,
    /// Collision tolerance on the E-scaled separation [m].
    pub collision_tolerance: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: Vector3::new(0.0, 0.0, -9.81),
            thrust_min: 1.0,
            thrust_max: 30.0,
            rate_max: Vector3::new(3.0, 3.0, 3.0),
            downwash: Vector3::new(1.0, 1.0, 1.0 / 3.0),
            collision_tolerance: 0.2,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Validation(msg.to_string()));
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return fail("m > 0");
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return fail("gravity finite");
        }
        if !(self.thrust_min.is_finite() && self.thrust_min >= 0.0) {
            return fail("T_min >= 0");
        }
        if !(self.thrust_max.is_finite() && self.thrust_max > self.thrust_min) {
            return fail("T_max > T_min");
        }
        if !self.rate_max.iter().all(|w| w.is_finite() && *w > 0.0) {
            return fail("ω_max > 0");
        }
        if !self.downwash.iter().all(|e| e.is_finite() && *e > 0.0) {
            return fail("E diagonal > 0");
        }
        if !(self.collision_tolerance.is_finite() && self.collision_tolerance > 0.0) {
            return fail("δ_tol > 0");
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity.norm()
    }

    pub fn input_lower(&self) -> InputVector {
        InputVector::new(
            self.thrust_min,
            -self.rate_max.x,
            -self.rate_max.y,
            -self.rate_max.z,
        )
    }

    pub fn input_upper(&self) -> InputVector {
        InputVector::new(
            self.thrust_max,
            self.rate_max.x,
            self.rate_max.y,
            self.rate_max.z,
        )
    }

    pub fn downwash_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.downwash)
    }

    /// `‖E·Δξ‖`, the downwash-scaled separation.
    pub fn scaled_distance(&self, delta: &Vector3<f64>) -> f64 {
        delta.component_mul(&self.downwash).norm()
    }
}

/// Time derivative of a [`QuadState`], in the same layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion<f64>,
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`, body to world.
pub fn quaternion_to_rotation(q: &Quaternion<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Left-multiplication matrix Λ(q), so that `Λ(q)·p = q ⊗ p`.
pub fn quaternion_product_matrix(q: &Quaternion<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, -z, y, //
        y, z, w, -x, //
        z, -y, x, w,
    )
}

/// Third column of R(q): the body z-axis in world frame.
fn body_z(q: &[f64; 4]) -> Vector3<f64> {
    let [w, x, y, z] = *q;
    Vector3::new(
        2.0 * (x * z + w * y),
        2.0 * (y * z - w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Unchecked vector field on the packed state; used inside RK4 stages where
/// the quaternion is only approximately unit.
pub(crate) fn vector_field(x: &StateVector, u: &InputVector, p: &ModelParams) -> StateVector {
    let q = [x[6], x[7], x[8], x[9]];
    let acc = p.gravity + body_z(&q) * (u[0] / p.mass);
    let [w, qx, qy, qz] = q;
    let (wx, wy, wz) = (u[1], u[2], u[3]);
    // ½ q ⊗ (0, ω)
    let dq = Vector4::new(
        -qx * wx - qy * wy - qz * wz,
        w * wx + qy * wz - qz * wy,
        w * wy - qx * wz + qz * wx,
        w * wz + qx * wy - qy * wx,
    ) * 0.5;
    StateVector::from_column_slice(&[
        x[3], x[4], x[5], acc.x, acc.y, acc.z, dq[0], dq[1], dq[2], dq[3],
    ])
}

/// Continuous-time Jacobians `(∂f/∂x, ∂f/∂u)` of the vector field.
pub(crate) fn vector_field_jacobians(
    x: &StateVector,
    u: &InputVector,
    p: &ModelParams,
) -> (StateJacobian, InputJacobian) {
    let [w, qx, qy, qz] = [x[6], x[7], x[8], x[9]];
    let (wx, wy, wz) = (u[1], u[2], u[3]);
    let thrust_acc = u[0] / p.mass;
    let mut a = StateJacobian::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = 1.0;
    }
    // ∂(R e3)/∂q scaled by thrust/m
    let dc = [
        [2.0 * qy, 2.0 * qz, 2.0 * w, 2.0 * qx],
        [-2.0 * qx, -2.0 * w, 2.0 * qz, 2.0 * qy],
        [0.0, -4.0 * qx, -4.0 * qy, 0.0],
    ];
    for (r, row) in dc.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            a[(3 + r, 6 + c)] = thrust_acc * v;
        }
    }
    // ½ ∂(q ⊗ (0, ω))/∂q
    let omega = Matrix4::new(
        0.0, -wx, -wy, -wz, //
        wx, 0.0, wz, -wy, //
        wy, -wz, 0.0, wx, //
        wz, wy, -wx, 0.0,
    ) * 0.5;
    a.fixed_view_mut::<4, 4>(6, 6).copy_from(&omega);

    let mut b = InputJacobian::zeros();
    let c = body_z(&[w, qx, qy, qz]) / p.mass;
    for i in 0..3 {
        b[(3 + i, 0)] = c[i];
    }
    let lambda = quaternion_product_matrix(&Quaternion::new(w, qx, qy, qz)) * 0.5;
    b.fixed_view_mut::<4, 3>(6, 1)
        .copy_from(&lambda.fixed_view::<4, 3>(0, 1));
    (a, b)
}

/// Time derivative of the quadrotor state under input `u`.
pub fn dynamics_derivative(
    x: &QuadState,
    u: &ControlInput,
    p: &ModelParams,
) -> Result<StateDerivative> {
    x.check_finite()?;
    if !u.is_finite() {
        return Err(Error::InvalidState("input has non-finite components".into()));
    }
    x.check_unit()?;
    let dx = vector_field(&x.to_vector(), &u.to_vector(), p);
    Ok(StateDerivative {
        position: Vector3::new(dx[0], dx[1], dx[2]),
        velocity: Vector3::new(dx[3], dx[4], dx[5]),
        attitude: Quaternion::new(dx[6], dx[7], dx[8], dx[9]),
    })
}

/// One RK4 step on packed vectors, before quaternion renormalization.
pub(crate) fn rk4_raw(x: &StateVector, u: &InputVector, dt: f64, p: &ModelParams) -> StateVector {
    let k1 = vector_field(x, u, p);
    let k2 = vector_field(&(x + k1 * (0.5 * dt)), u, p);
    let k3 = vector_field(&(x + k2 * (0.5 * dt)), u, p);
    let k4 = vector_field(&(x + k3 * dt), u, p);
    x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

fn normalize_quaternion(x: &mut StateVector) {
    let n = x.fixed_rows::<4>(6).norm();
    if n > 0.0 {
        x.fixed_rows_mut::<4>(6).unscale_mut(n);
    }
}

/// Discrete transition on packed vectors, including renormalization.
pub(crate) fn discrete_step(x: &StateVector, u: &InputVector, dt: f64, p: &ModelParams) -> StateVector {
    let mut next = rk4_raw(x, u, dt, p);
    normalize_quaternion(&mut next);
    next
}

/// Discrete transition and its exact Jacobians with respect to state and input.
pub(crate) fn discrete_step_linearized(
    x: &StateVector,
    u: &InputVector,
    dt: f64,
    p: &ModelParams,
) -> (StateVector, StateJacobian, InputJacobian) {
    let h = dt;
    let eye = StateJacobian::identity();

    let k1 = vector_field(x, u, p);
    let (a1, b1) = vector_field_jacobians(x, u, p);
    let dk1_dx = a1;
    let dk1_du = b1;

    let x2 = x + k1 * (0.5 * h);
    let k2 = vector_field(&x2, u, p);
    let (a2, b2) = vector_field_jacobians(&x2, u, p);
    let dk2_dx = a2 * (eye + dk1_dx * (0.5 * h));
    let dk2_du = a2 * dk1_du * (0.5 * h) + b2;

    let x3 = x + k2 * (0.5 * h);
    let k3 = vector_field(&x3, u, p);
    let (a3, b3) = vector_field_jacobians(&x3, u, p);
    let dk3_dx = a3 * (eye + dk2_dx * (0.5 * h));
    let dk3_du = a3 * dk2_du * (0.5 * h) + b3;

    let x4 = x + k3 * h;
    let k4 = vector_field(&x4, u, p);
    let (a4, b4) = vector_field_jacobians(&x4, u, p);
    let dk4_dx = a4 * (eye + dk3_dx * h);
    let dk4_du = a4 * dk3_du * h + b4;

    let raw = x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    let mut jx = eye + (dk1_dx + (dk2_dx + dk3_dx) * 2.0 + dk4_dx) * (h / 6.0);
    let mut ju = (dk1_du + (dk2_du + dk3_du) * 2.0 + dk4_du) * (h / 6.0);

    // Chain through q ↦ q/‖q‖.
    let q = raw.fixed_rows::<4>(6).into_owned();
    let n = q.norm();
    let qh = q / n;
    let proj = (Matrix4::identity() - qh * qh.transpose()) / n;
    let jq_x = proj * jx.fixed_rows::<4>(6);
    jx.fixed_rows_mut::<4>(6).copy_from(&jq_x);
    let jq_u = proj * ju.fixed_rows::<4>(6);
    ju.fixed_rows_mut::<4>(6).copy_from(&jq_u);

    let mut next = raw;
    next.fixed_rows_mut::<4>(6).copy_from(&qh);
    (next, jx, ju)
}

/// Classical RK4 step with zero-order-hold input; the quaternion is
/// renormalized after the step.
pub fn rk4_step(x: &QuadState, u: &ControlInput, dt: f64, p: &ModelParams) -> Result<QuadState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    x.check_finite()?;
    if !u.is_finite() {
        return Err(Error::InvalidState("input has non-finite components".into()));
    }
    let next = QuadState::from_vector(&discrete_step(&x.to_vector(), &u.to_vector(), dt, p));
    next.check_finite()?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Unit, UnitQuaternion};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn hover_has_zero_derivative() {
        let p = params();
        let x = QuadState::hover_at(Vector3::new(1.0, 2.0, 3.0));
        let d = dynamics_derivative(&x, &ControlInput::hover(&p), &p).unwrap();
        assert!(d.position.norm() < 1e-15);
        assert!(d.velocity.norm() < 1e-12);
        assert!(d.attitude.norm() < 1e-15);
    }

    #[test]
    fn free_fall_acceleration() {
        let p = params();
        let x = QuadState::hover_at(Vector3::zeros());
        let d = dynamics_derivative(&x, &ControlInput::new(0.0, Vector3::zeros()), &p).unwrap();
        assert_eq!(d.velocity, Vector3::new(0.0, 0.0, -9.81));
    }

    #[test]
    fn tilted_thrust_matches_rotation_oracle() {
        let p = params();
        let half = std::f64::consts::FRAC_PI_4;
        let q = Quaternion::new(half.cos(), half.sin(), 0.0, 0.0);
        let x = QuadState::new(Vector3::zeros(), Vector3::zeros(), q).unwrap();
        let d = dynamics_derivative(&x, &ControlInput::new(1.0, Vector3::zeros()), &p).unwrap();
        // nalgebra's rotation is an independent construction of R(q).
        let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::FRAC_PI_2);
        let expected = p.gravity + rot * Vector3::new(0.0, 0.0, 1.0);
        assert!((d.velocity - expected).norm() < 1e-12);
        assert!((expected - Vector3::new(0.0, -1.0, -9.81)).norm() < 1e-12);
    }

    #[test]
    fn non_finite_state_rejected() {
        let p = params();
        let mut x = QuadState::hover_at(Vector3::zeros());
        x.position.x = f64::NAN;
        assert!(matches!(
            dynamics_derivative(&x, &ControlInput::hover(&p), &p),
            Err(Error::InvalidState(_))
        ));
        let x = QuadState::hover_at(Vector3::zeros());
        let u = ControlInput::new(f64::INFINITY, Vector3::zeros());
        assert!(dynamics_derivative(&x, &u, &p).is_err());
    }

    #[test]
    fn rk4_hover_is_stationary() {
        let p = params();
        let x = QuadState::hover_at(Vector3::new(0.0, 0.0, 2.0));
        for dt in [0.001, 0.02, 0.03, 0.5] {
            let next = rk4_step(&x, &ControlInput::hover(&p), dt, &p).unwrap();
            assert!((next.to_vector() - x.to_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn rk4_free_fall_closed_form() {
        let p = params();
        let x = QuadState::hover_at(Vector3::zeros());
        let next = rk4_step(&x, &ControlInput::new(0.0, Vector3::zeros()), 0.03, &p).unwrap();
        assert!(close(next.velocity.z, -0.2943, 1e-12));
        assert!(close(next.position.z, -0.0044145, 1e-12));
    }

    #[test]
    fn rk4_pure_rotation_matches_axis_angle() {
        let p = params();
        let x = QuadState::hover_at(Vector3::zeros());
        let u = ControlInput::new(p.hover_thrust(), Vector3::new(3.0, 0.0, 0.0));
        let next = rk4_step(&x, &u, 0.03, &p).unwrap();
        let expected = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.09);
        let got = next.attitude;
        let e = expected.quaternion();
        assert!((got.coords - e.coords).norm() < 1e-6);
    }

    #[test]
    fn rk4_rejects_bad_step() {
        let p = params();
        let x = QuadState::hover_at(Vector3::zeros());
        assert!(rk4_step(&x, &ControlInput::hover(&p), 0.0, &p).is_err());
        assert!(rk4_step(&x, &ControlInput::hover(&p), -0.1, &p).is_err());
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(quaternion_to_rotation(&Quaternion::identity()), Matrix3::identity());
        let h = std::f64::consts::FRAC_PI_4;
        let r = quaternion_to_rotation(&Quaternion::new(h.cos(), h.sin(), 0.0, 0.0));
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((r - expected).norm() < 1e-15);
    }

    #[test]
    fn product_matrix_matches_quaternion_product() {
        let a = Quaternion::new(0.3, -0.2, 0.9, 0.1);
        let b = Quaternion::new(-0.5, 0.4, 0.2, 0.7);
        let prod = a * b;
        let via_matrix = quaternion_product_matrix(&a) * b.coords_wxyz();
        assert!((via_matrix - prod.coords_wxyz()).norm() < 1e-15);
    }

    trait Wxyz {
        fn coords_wxyz(&self) -> Vector4<f64>;
    }
    impl Wxyz for Quaternion<f64> {
        fn coords_wxyz(&self) -> Vector4<f64> {
            Vector4::new(self.w, self.i, self.j, self.k)
        }
    }

    #[test]
    fn rotation_agrees_with_nalgebra() {
        let axis = Unit::new_normalize(Vector3::new(0.3, -1.2, 0.7));
        let uq = UnitQuaternion::from_axis_angle(&axis, 1.1);
        let r = quaternion_to_rotation(uq.quaternion());
        assert!((r - uq.to_rotation_matrix().into_inner()).norm() < 1e-12);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let p = params();
        let q = UnitQuaternion::from_euler_angles(0.3, -0.2, 0.5);
        let x = QuadState::new(
            Vector3::new(1.0, -2.0, 3.0),
            Vector3::new(4.0, 0.5, -1.0),
            *q.quaternion(),
        )
        .unwrap()
        .to_vector();
        let u = InputVector::new(14.0, 1.2, -2.0, 0.4);
        let dt = 0.03;
        let (next, jx, ju) = discrete_step_linearized(&x, &u, dt, &p);
        assert!((next - discrete_step(&x, &u, dt, &p)).norm() < 1e-14);
        let eps = 1e-6;
        for i in 0..STATE_DIM {
            let mut xp = x;
            let mut xm = x;
            xp[i] += eps;
            xm[i] -= eps;
            let col = (discrete_step(&xp, &u, dt, &p) - discrete_step(&xm, &u, dt, &p)) / (2.0 * eps);
            assert!((col - jx.column(i)).norm() < 1e-7, "state column {i}");
        }
        for i in 0..INPUT_DIM {
            let mut up = u;
            let mut um = u;
            up[i] += eps;
            um[i] -= eps;
            let col = (discrete_step(&x, &up, dt, &p) - discrete_step(&x, &um, dt, &p)) / (2.0 * eps);
            assert!((col - ju.column(i)).norm() < 1e-7, "input column {i}");
        }
    }

    #[test]
    fn params_validation_names_invariant() {
        let mut p = params();
        p.rate_max.x = -1.0;
        match p.validate() {
            Err(Error::Validation(msg)) => assert_eq!(msg, "ω_max > 0"),
            other => panic!("unexpected {other:?}"),
        }
        let mut p = params();
        p.thrust_max = 0.5;
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
    }

    #[test]
    fn clamp_projects_into_box() {
        let p = params();
        let u = ControlInput::new(50.0, Vector3::new(-9.0, 0.5, 4.0)).clamped(&p);
        assert_eq!(u.thrust, 30.0);
        assert_eq!(u.body_rates, Vector3::new(-3.0, 0.5, 3.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn state() -> impl Strategy<Value = QuadState> {
            (prop::array::uniform3(-20.0..20.0f64), prop::array::uniform3(-10.0..10.0f64), prop::array::uniform4(-1.0..1.0f64))
                .prop_filter("nonzero quaternion", |(_, _, q)| q.iter().map(|c| c * c).sum::<f64>() > 1e-2)
                .prop_map(|(p, v, q)| QuadState {
                    position: Vector3::from(p),
                    velocity: Vector3::from(v),
                    attitude: Quaternion::new(q[0], q[1], q[2], q[3]).normalize(),
                })
        }

        fn input(rate_z: f64) -> impl Strategy<Value = ControlInput> {
            (1.0..30.0f64, -3.0..3.0f64, -3.0..3.0f64, -rate_z..=rate_z)
                .prop_map(|(t, x, y, z)| ControlInput::new(t, Vector3::new(x, y, z)))
        }

        fn raw_norm_drift(x: &QuadState, u: &ControlInput, p: &ModelParams) -> f64 {
            let next = rk4_raw(&x.to_vector(), &u.to_vector(), 0.03, p);
            (next.fixed_rows::<4>(6).norm() - 1.0).abs()
        }

        proptest! {
            #[test]
            fn quaternion_drift_within_rate_box(x in state(), u in input(0.0)) {
                prop_assert!(raw_norm_drift(&x, &u, &params()) < 1e-9);
            }

            // Yaw rate at its bound as well: |ω| up to 3√3.
            #[test]
            fn quaternion_drift_with_yaw_rate(x in state(), u in input(3.0)) {
                prop_assert!(raw_norm_drift(&x, &u, &params()) < 2e-9);
            }

            #[test]
            fn rk4_matches_dense_substeps(x in state(), u in input(3.0)) {
                let p = params();
                let next = rk4_step(&x, &u, 0.03, &p).unwrap();
                let mut fine = x;
                for _ in 0..100 {
                    fine = rk4_step(&fine, &u, 0.0003, &p).unwrap();
                }
                prop_assert!((next.position - fine.position).norm() < 1e-6);
            }

            #[test]
            fn dynamics_translation_invariant(x in state(), u in input(3.0), shift in prop::array::uniform3(-50.0..50.0f64)) {
                let p = params();
                let shift = Vector3::from(shift);
                let moved = QuadState { position: x.position + shift, ..x };
                let (d0, d1) = (dynamics_derivative(&x, &u, &p).unwrap(), dynamics_derivative(&moved, &u, &p).unwrap());
                prop_assert_eq!(d0, d1);
                let (n0, n1) = (rk4_step(&x, &u, 0.03, &p).unwrap(), rk4_step(&moved, &u, 0.03, &p).unwrap());
                prop_assert!((n1.position - n0.position - shift).norm() < 1e-12 * (1.0 + shift.norm()));
                prop_assert_eq!(n0.velocity, n1.velocity);
                prop_assert_eq!(n0.attitude, n1.attitude);
            }
        }
    }
}
