//! Waypoint-approach and collision terms of the objective.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::model::StateVector;

/// How the velocity weight is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `W^v = sigmoid(σ^v(‖v − v_wp‖² − μ_v))`.
    #[default]
    VelocityError,
    /// `W^v = sigmoid(σ^v(‖ξ − ξ_wp‖² − μ_v))`: switches on distance to the waypoint.
    PositionGated,
}

/// Sigmoid schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    pub mu: f64,
    pub sigma_pos: f64,
    pub sigma_vel: f64,
    /// Switching offset of `W^v`.
    pub mu_vel: f64,
    /// Constant factor on the velocity term.
    pub vel_scale: f64,
    pub mode: WeightMode,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(W^ξ, W^v)` at one state.
pub fn dynamic_weights(
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    waypoint: &Vector3<f64>,
    waypoint_velocity: &Vector3<f64>,
    w: &WeightParams,
) -> (f64, f64) {
    let s = (position - waypoint).norm_squared();
    let f = (velocity - waypoint_velocity).norm_squared();
    let w_pos = sigmoid(w.sigma_pos * (s - w.mu));
    let w_vel = match w.mode {
        WeightMode::VelocityError => sigmoid(w.sigma_vel * (f - w.mu_vel)),
        WeightMode::PositionGated => sigmoid(w.sigma_vel * (s - w.mu_vel)),
    };
    (w_pos, w.vel_scale * w_vel)
}

/// `Σ_k W^ξ_k‖ξ_k − ξ_wp‖² + W^v_k‖v_k − v_ref,k‖²` over all states of one
/// vehicle, with its exact gradient (weights differentiated).
///
/// `velocity_refs` holds one reference per state; a single entry applies to
/// every state.
pub fn waypoint_cost(
    states: &[StateVector],
    waypoint: &Vector3<f64>,
    velocity_refs: &[Vector3<f64>],
    w: &WeightParams,
) -> (f64, Vec<StateVector>) {
    assert!(velocity_refs.len() == 1 || velocity_refs.len() == states.len(), "velocity reference length");
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(states.len());
    for (k, x) in states.iter().enumerate() {
        let e = x.fixed_rows::<3>(0) - waypoint;
        let ev = x.fixed_rows::<3>(3) - velocity_refs[k.min(velocity_refs.len() - 1)];
        let s = e.norm_squared();
        let f = ev.norm_squared();
        let wp = sigmoid(w.sigma_pos * (s - w.mu));
        let mut g = StateVector::zeros();
        let dwp = wp * (1.0 - wp) * w.sigma_pos;
        let mut gp = e * (2.0 * (wp + s * dwp));
        let gv;
        let wv;
        match w.mode {
            WeightMode::VelocityError => {
                wv = w.vel_scale * sigmoid(w.sigma_vel * (f - w.mu_vel));
                let dwv = wv * (1.0 - wv / w.vel_scale) * w.sigma_vel;
                gv = ev * (2.0 * (wv + f * dwv));
            }
            WeightMode::PositionGated => {
                wv = w.vel_scale * sigmoid(w.sigma_vel * (s - w.mu_vel));
                let dwv = wv * (1.0 - wv / w.vel_scale) * w.sigma_vel;
                gp += e * (2.0 * f * dwv);
                gv = ev * (2.0 * wv);
            }
        }
        total += wp * s + wv * f;
        g.fixed_rows_mut::<3>(0).copy_from(&gp);
        g.fixed_rows_mut::<3>(3).copy_from(&gv);
        grad.push(g);
    }
    (total, grad)
}

/// Contribution `−W_col·Σ_{k=0}^{t_c} min(‖E(ξ_a,k − ξ_b,k)‖², d_sat²)` to the
/// minimized objective and its gradients with respect to both position
/// sequences. Zero when `window` is `None`.
pub fn collision_cost(
    pos_a: &[Vector3<f64>],
    pos_b: &[Vector3<f64>],
    window: Option<usize>,
    downwash: &Vector3<f64>,
    weight: f64,
    saturation: f64,
) -> (f64, Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    let n = pos_a.len().min(pos_b.len());
    let mut ga = vec![Vector3::zeros(); pos_a.len()];
    let mut gb = vec![Vector3::zeros(); pos_b.len()];
    let Some(tc) = window else {
        return (0.0, ga, gb);
    };
    let sat2 = saturation * saturation;
    let e2 = downwash.component_mul(downwash);
    let mut total = 0.0;
    for k in 0..=tc.min(n.saturating_sub(1)) {
        let d = pos_a[k] - pos_b[k];
        let r = d.component_mul(downwash).norm_squared();
        if r < sat2 {
            total -= weight * r;
            let g = d.component_mul(&e2) * (-2.0 * weight);
            ga[k] = g;
            gb[k] = -g;
        } else {
            total -= weight * sat2;
        }
    }
    (total, ga, gb)
}
