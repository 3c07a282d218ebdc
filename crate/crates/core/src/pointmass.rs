//! Minimum-time bang-bang trajectories for a 3-axis double integrator.
//!
//! Each axis is solved independently with `+a` then `-a` (or the mirrored
//! pattern). The slowest axis sets the leg duration; the other axes are
//! stretched to that duration by scaling their acceleration with a factor
//! `β ∈ (0, 1]`.
//!
//! Stretching an axis is not always possible: when start and end velocities
//! share a sign, the set of reachable durations with two arcs is
//! `[T_min, T_a] ∪ [T_b, ∞)`, where `T_a` and `T_b` are the remaining
//! full-acceleration solutions. [`solve_3d_min_time`] moves the common
//! duration to the end of such a gap when it falls inside one.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const TIME_EPS: f64 = 1e-12;

/// Two constant-acceleration arcs on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisProfile {
    pub p0: f64,
    pub v0: f64,
    pub pf: f64,
    pub vf: f64,
    /// Signed acceleration of the first arc; the second arc applies `-accel`.
    pub accel: f64,
    /// Switch point position.
    pub p1: f64,
    /// Switch point velocity.
    pub v1: f64,
    pub t1: f64,
    pub t2: f64,
    /// Acceleration reduction factor relative to the axis bound.
    pub beta: f64,
}

impl AxisProfile {
    fn from_arcs(p0: f64, v0: f64, pf: f64, vf: f64, accel: f64, t1: f64, t2: f64, beta: f64) -> Self {
        let p1 = p0 + v0 * t1 + 0.5 * accel * t1 * t1;
        let v1 = v0 + accel * t1;
        Self { p0, v0, pf, vf, accel, p1, v1, t1, t2, beta }
    }

    fn stationary(p: f64, v: f64, duration: f64) -> Self {
        Self::from_arcs(p, v, p + v * duration, v, 0.0, 0.5 * duration, 0.5 * duration, 1.0)
    }

    pub fn duration(&self) -> f64 {
        self.t1 + self.t2
    }

    /// Position and velocity at `t`, clamped to `[0, duration]`.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let t = t.clamp(0.0, self.duration());
        if t <= self.t1 {
            (self.p0 + self.v0 * t + 0.5 * self.accel * t * t, self.v0 + self.accel * t)
        } else {
            let s = t - self.t1;
            (self.p1 + self.v1 * s - 0.5 * self.accel * s * s, self.v1 - self.accel * s)
        }
    }

    /// Applied acceleration at `t` (the first arc owns the switch instant).
    pub fn accel_at(&self, t: f64) -> f64 {
        if t <= self.t1 {
            self.accel
        } else if t <= self.duration() {
            -self.accel
        } else {
            0.0
        }
    }

    /// Largest deviation between the integrated end state and the requested one.
    pub fn endpoint_residual(&self) -> f64 {
        let (p, v) = self.state_at(self.duration());
        (p - self.pf).abs().max((v - self.vf).abs())
    }
}

/// Every full-acceleration two-arc solution with non-negative arc durations,
/// sorted by total time.
fn full_accel_solutions(p0: f64, v0: f64, pf: f64, vf: f64, a_max: f64) -> Vec<AxisProfile> {
    let dp = pf - p0;
    let mut out: Vec<AxisProfile> = Vec::with_capacity(4);
    for sign in [1.0, -1.0] {
        let accel = sign * a_max;
        let mut r = accel * dp + 0.5 * (v0 * v0 + vf * vf);
        let scale = 1.0 + accel.abs() * dp.abs() + v0 * v0 + vf * vf;
        if r < 0.0 {
            if r > -1e-12 * scale {
                r = 0.0;
            } else {
                continue;
            }
        }
        let root = r.sqrt();
        for v1 in [root, -root] {
            let t1 = (v1 - v0) / accel;
            let t2 = (v1 - vf) / accel;
            let tol = 1e-12 * (1.0 + (v0.abs() + vf.abs()) / a_max);
            if t1 < -tol || t2 < -tol {
                continue;
            }
            let p = AxisProfile::from_arcs(p0, v0, pf, vf, accel, t1.max(0.0), t2.max(0.0), 1.0);
            if !out.iter().any(|o| (o.duration() - p.duration()).abs() < TIME_EPS && o.accel == p.accel) {
                out.push(p);
            }
        }
    }
    out.sort_by(|a, b| a.duration().total_cmp(&b.duration()));
    out
}

fn is_at_rest_target(p0: f64, v0: f64, pf: f64, vf: f64) -> bool {
    let scale = 1.0 + p0.abs().max(pf.abs());
    (pf - p0).abs() <= 1e-12 * scale && v0.abs() <= 1e-12 && vf.abs() <= 1e-12
}

/// Minimum-time bang-bang profile between two 1-D states.
pub fn solve_axis_min_time(p0: f64, v0: f64, pf: f64, vf: f64, a_max: f64) -> Result<AxisProfile> {
    if !(a_max.is_finite() && a_max > 0.0) {
        return Err(Error::InvalidArgument(format!("a_max must be positive, got {a_max}")));
    }
    if ![p0, v0, pf, vf].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite endpoint".into()));
    }
    if is_at_rest_target(p0, v0, pf, vf) {
        return Ok(AxisProfile::stationary(p0, 0.0, 0.0));
    }
    full_accel_solutions(p0, v0, pf, vf, a_max)
        .into_iter()
        .next()
        // A double integrator with symmetric bounds always has one.
        .ok_or_else(|| Error::InvalidArgument("no bang-bang solution found".into()))
}

/// Stretches an axis to exactly `t_target` by reducing its acceleration.
///
/// Solves the two-arc equations for the signed first-arc acceleration `u`:
/// `T²u² + 2(T(v0+vf) − 2Δp)u − Δv² = 0`, with `t1 = (T + Δv/u)/2`.
pub fn sync_axis_to_time(
    p0: f64,
    v0: f64,
    pf: f64,
    vf: f64,
    a_max: f64,
    t_target: f64,
) -> Result<AxisProfile> {
    let min = solve_axis_min_time(p0, v0, pf, vf, a_max)?;
    if !(t_target.is_finite() && t_target >= 0.0) {
        return Err(Error::InvalidArgument(format!("target time must be non-negative, got {t_target}")));
    }
    if (t_target - min.duration()).abs() <= TIME_EPS * (1.0 + t_target) {
        return Ok(min);
    }
    if t_target < min.duration() {
        return Err(Error::NoRoot);
    }
    if let Some(p) = full_accel_solutions(p0, v0, pf, vf, a_max)
        .into_iter()
        .find(|p| (p.duration() - t_target).abs() <= TIME_EPS * (1.0 + t_target))
    {
        return Ok(p);
    }

    let t = t_target;
    let dp = pf - p0;
    let dv = vf - v0;
    let scale = 1.0 + dp.abs() + (v0.abs() + vf.abs()) * t;
    if dv.abs() <= 1e-14 * (1.0 + v0.abs()) && (dp - v0 * t).abs() <= 1e-12 * scale {
        // Exact cruise: no acceleration needed.
        return Ok(AxisProfile::stationary(p0, v0, t));
    }

    let qa = t * t;
    let qb = 2.0 * (t * (v0 + vf) - 2.0 * dp);
    let qc = -dv * dv;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let q = -0.5 * (qb + qb.signum() * disc);
    let mut roots = Vec::with_capacity(2);
    if q != 0.0 {
        roots.push(q / qa);
        roots.push(qc / q);
    } else {
        // qb == 0 and disc == 0: only possible with dv == 0, handled above
        // unless the cruise check was too tight; fall back to the symmetric roots.
        let r = (-qc / qa).sqrt();
        roots.push(r);
        roots.push(-r);
    }

    let mut best: Option<AxisProfile> = None;
    for u in roots {
        if u == 0.0 || !u.is_finite() || u.abs() > a_max * (1.0 + 1e-12) {
            continue;
        }
        let t1 = 0.5 * (t + dv / u);
        if t1 < -1e-12 * (1.0 + t) || t1 > t * (1.0 + 1e-12) + 1e-12 {
            continue;
        }
        let t1 = t1.clamp(0.0, t);
        let beta = (u.abs() / a_max).min(1.0);
        let cand = AxisProfile::from_arcs(p0, v0, pf, vf, u, t1, t - t1, beta);
        if best.map_or(true, |b| cand.accel.abs() < b.accel.abs()) {
            best = Some(cand);
        }
    }
    best.ok_or(Error::NoRoot)
}

/// Three synchronized axis profiles sharing one duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassPointTrajectory {
    pub axes: [AxisProfile; 3],
    /// Common duration [s].
    pub total_time: f64,
    /// Absolute time of the first sample [s].
    pub start_time: f64,
}

impl MassPointTrajectory {
    /// Position and velocity at time `t` relative to the start, clamped to the leg.
    pub fn state_at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        for (i, axis) in self.axes.iter().enumerate() {
            let (pi, vi) = axis.state_at(t);
            p[i] = pi;
            v[i] = vi;
        }
        (p, v)
    }

    pub fn accel_at(&self, t: f64) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.axes[i].accel_at(t))
    }

    pub fn start(&self) -> (Vector3<f64>, Vector3<f64>) {
        self.state_at(0.0)
    }

    pub fn end(&self) -> (Vector3<f64>, Vector3<f64>) {
        self.state_at(self.total_time)
    }

    pub fn betas(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.axes[i].beta)
    }
}

/// Time-optimal synchronized 3-D leg between two position/velocity pairs.
pub fn solve_3d_min_time(
    start: (Vector3<f64>, Vector3<f64>),
    end: (Vector3<f64>, Vector3<f64>),
    a_max: Vector3<f64>,
) -> Result<MassPointTrajectory> {
    let (p0, v0) = start;
    let (pf, vf) = end;
    let mut fixed: [Option<AxisProfile>; 3] = [None; 3];
    let mut total = 0.0_f64;
    for i in 0..3 {
        let p = solve_axis_min_time(p0[i], v0[i], pf[i], vf[i], a_max[i])?;
        total = total.max(p.duration());
        fixed[i] = Some(p);
    }

    // Each bump lands on a full-acceleration solution of some axis, so the
    // loop terminates after at most a handful of rounds.
    for _ in 0..12 {
        let mut axes = [AxisProfile::stationary(0.0, 0.0, 0.0); 3];
        let mut bump: Option<f64> = None;
        for i in 0..3 {
            if let Some(p) = fixed[i].filter(|p| (p.duration() - total).abs() <= TIME_EPS * (1.0 + total)) {
                axes[i] = p;
                continue;
            }
            match sync_axis_to_time(p0[i], v0[i], pf[i], vf[i], a_max[i], total) {
                Ok(p) => axes[i] = p,
                Err(Error::NoRoot) => {
                    let next = full_accel_solutions(p0[i], v0[i], pf[i], vf[i], a_max[i])
                        .into_iter()
                        .find(|p| p.duration() > total + TIME_EPS * (1.0 + total))
                        .ok_or(Error::NoRoot)?;
                    if bump.map_or(true, |b| next.duration() < b) {
                        bump = Some(next.duration());
                        fixed[i] = Some(next);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        match bump {
            None => {
                return Ok(MassPointTrajectory {
                    axes,
                    total_time: total,
                    start_time: 0.0,
                })
            }
            Some(t) => total = t,
        }
    }
    Err(Error::NoRoot)
}

/// Samples `(position, velocity)` at `k·dt`, with a final sample at the end time.
pub fn sample_trajectory(traj: &MassPointTrajectory, dt: f64) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("sample step must be positive, got {dt}")));
    }
    let total = traj.total_time;
    let n = (total / dt + 1e-9).floor() as usize;
    let mut out: Vec<_> = (0..=n).map(|k| traj.state_at((k as f64 * dt).min(total))).collect();
    if (n as f64) * dt < total - 1e-12 {
        out.push(traj.state_at(total));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn symmetric_rest_to_rest() {
        let p = solve_axis_min_time(0.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(close(p.t1, 1.0, 1e-12) && close(p.t2, 1.0, 1e-12));
        assert!(close(p.duration(), 2.0, 1e-12));
        assert!(close(p.p1, 0.5, 1e-12) && close(p.v1, 1.0, 1e-12));
        assert_eq!(p.beta, 1.0);
    }

    #[test]
    fn degenerate_axis_has_zero_time() {
        let p = solve_axis_min_time(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(p.duration(), 0.0);
    }

    #[test]
    fn overshoot_requires_decelerating_first() {
        // From v0 = 2 the stopping distance is 2 > 1, so the profile brakes first.
        let p = solve_axis_min_time(0.0, 2.0, 1.0, 0.0, 1.0).unwrap();
        assert!(p.accel < 0.0);
        // Brake from 2 to -1 over 3 s (covering 1.5 m), then 1 s back to rest.
        assert!(close(p.duration(), 4.0, 1e-12));
        assert!(p.endpoint_residual() < 1e-12);
        let oracle = grid_oracle_min_time(0.0, 2.0, 1.0, 0.0, 1.0, 1e-4);
        assert!((oracle - p.duration()).abs() < 1e-3);
    }

    /// Scans the switch time on a uniform grid for each sign pattern; the
    /// second arc length follows from the velocity constraint and roots of the
    /// position residual are located by sign changes.
    fn grid_oracle_min_time(p0: f64, v0: f64, pf: f64, vf: f64, a: f64, h: f64) -> f64 {
        let horizon = 2.0 * (v0.abs() + vf.abs()) / a + 2.0 * (2.0 * (pf - p0).abs() / a).sqrt() + 1.0;
        let steps = (horizon / h).ceil() as usize;
        let mut best = f64::INFINITY;
        for s in [1.0, -1.0] {
            let eval = |t1: f64| -> Option<(f64, f64)> {
                let v1 = v0 + s * a * t1;
                let t2 = (v1 - vf) / (s * a);
                if t2 < 0.0 {
                    return None;
                }
                let p = p0 + v0 * t1 + 0.5 * s * a * t1 * t1 + v1 * t2 - 0.5 * s * a * t2 * t2;
                Some((p - pf, t1 + t2))
            };
            let mut prev: Option<(f64, f64, f64)> = None;
            for k in 0..=steps {
                let t1 = k as f64 * h;
                match eval(t1) {
                    Some((r, total)) => {
                        if r == 0.0 {
                            best = best.min(total);
                        } else if let Some((pr, pt, _)) = prev {
                            if pr.signum() != r.signum() {
                                let w = pr / (pr - r);
                                best = best.min(pt + w * (total - pt));
                            }
                        }
                        prev = Some((r, total, t1));
                    }
                    None => prev = None,
                }
            }
        }
        best
    }

    #[test]
    fn non_positive_accel_rejected() {
        assert!(solve_axis_min_time(0.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(solve_axis_min_time(0.0, 0.0, 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn sync_keeps_binding_axis() {
        let min = solve_axis_min_time(0.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        let p = sync_axis_to_time(0.0, 0.0, 1.0, 0.0, 1.0, min.duration()).unwrap();
        assert_eq!(p, min);
    }

    #[test]
    fn sync_rest_to_rest_scales_quadratically() {
        let p = sync_axis_to_time(0.0, 0.0, 1.0, 0.0, 1.0, 4.0).unwrap();
        assert!(close(p.beta, 0.25, 1e-12));
        assert!(close(p.t1, 2.0, 1e-12) && close(p.t2, 2.0, 1e-12));
    }

    #[test]
    fn sync_moving_start_integrates_exactly() {
        let p = sync_axis_to_time(0.0, 1.0, 2.0, 0.0, 2.0, 3.0).unwrap();
        assert!(p.beta > 0.0 && p.beta <= 1.0);
        assert!(close(p.duration(), 3.0, 1e-12));
        // Independent forward integration with fine Euler-free closed-form arcs.
        let (p1, v1) = (p.v0 * p.t1 + 0.5 * p.accel * p.t1 * p.t1, p.v0 + p.accel * p.t1);
        let pf = p1 + v1 * p.t2 - 0.5 * p.accel * p.t2 * p.t2;
        let vf = v1 - p.accel * p.t2;
        assert!(close(pf, 2.0, 1e-9) && close(vf, 0.0, 1e-9));
    }

    #[test]
    fn sync_below_minimum_time_fails() {
        assert!(matches!(sync_axis_to_time(0.0, 0.0, 1.0, 0.0, 1.0, 1.0), Err(Error::NoRoot)));
    }

    #[test]
    fn sync_inside_gap_fails_but_3d_steps_over_it() {
        // Same-sign velocities: reachable durations have a gap above T_min.
        let (p0, v0, pf, vf, a) = (-5.054305192233479, 5.147240247142442, 5.45232700766325, 6.919146878640813, 2.913128110413223);
        let sols = full_accel_solutions(p0, v0, pf, vf, a);
        assert_eq!(sols.len(), 3);
        let gap_mid = 0.5 * (sols[1].duration() + sols[2].duration());
        assert!(matches!(sync_axis_to_time(p0, v0, pf, vf, a, gap_mid), Err(Error::NoRoot)));

        // Put the gap's interior on the common duration via a slower x axis.
        let a_x = 4.0 / (gap_mid * gap_mid); // rest-to-rest 1 m takes gap_mid
        let traj = solve_3d_min_time(
            (Vector3::new(0.0, p0, 0.0), Vector3::new(0.0, v0, 0.0)),
            (Vector3::new(1.0, pf, 0.0), Vector3::new(0.0, vf, 0.0)),
            Vector3::new(a_x, a, 1.0),
        )
        .unwrap();
        assert!(close(traj.total_time, sols[2].duration(), 1e-12));
        for axis in &traj.axes {
            assert!(close(axis.duration(), traj.total_time, 1e-9));
            assert!(axis.endpoint_residual() < 1e-6);
            assert!(axis.beta > 0.0 && axis.beta <= 1.0);
        }
    }

    #[test]
    fn three_axis_example() {
        let traj = solve_3d_min_time(
            (Vector3::zeros(), Vector3::zeros()),
            (Vector3::new(1.0, 1.0, 1.0), Vector3::zeros()),
            Vector3::new(1.0, 1.0, 2.0),
        )
        .unwrap();
        assert!(close(traj.total_time, 2.0, 1e-12));
        let b = traj.betas();
        assert!(close(b.x, 1.0, 1e-12) && close(b.y, 1.0, 1e-12) && close(b.z, 0.5, 1e-12));
        let (p, v) = traj.end();
        assert!((p - Vector3::new(1.0, 1.0, 1.0)).norm() < 1e-12 && v.norm() < 1e-12);
    }

    #[test]
    fn one_dimensional_displacement_matches_axis_solution() {
        let traj = solve_3d_min_time(
            (Vector3::new(0.0, 2.0, 3.0), Vector3::zeros()),
            (Vector3::new(4.0, 2.0, 3.0), Vector3::zeros()),
            Vector3::new(2.0, 2.0, 2.0),
        )
        .unwrap();
        let x = solve_axis_min_time(0.0, 0.0, 4.0, 0.0, 2.0).unwrap();
        assert!(close(traj.total_time, x.duration(), 1e-12));
        for axis in &traj.axes[1..] {
            assert_eq!(axis.beta, 1.0);
            assert_eq!(axis.accel, 0.0);
            assert!(close(axis.t1, traj.total_time / 2.0, 1e-12));
        }
    }

    #[test]
    fn sampling_zero_length() {
        let traj = solve_3d_min_time(
            (Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()),
            (Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()),
            Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        let s = sample_trajectory(&traj, 0.03).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn sampling_midpoint_and_end() {
        let traj = solve_3d_min_time(
            (Vector3::zeros(), Vector3::zeros()),
            (Vector3::new(4.0, 0.0, 0.0), Vector3::zeros()),
            Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        // T = 4, peak speed 2 at T/2.
        let s = sample_trajectory(&traj, 0.5).unwrap();
        assert_eq!(s.len(), 9);
        assert!(close(s[4].0.x, 2.0, 1e-12) && close(s[4].1.x, 2.0, 1e-12));
        let s = sample_trajectory(&traj, 0.3).unwrap();
        let last = s.last().unwrap();
        assert!(close(last.0.x, 4.0, 1e-12));
        assert_eq!(s.len(), 15);
    }

    #[test]
    fn sampling_rejects_bad_step() {
        let traj = solve_3d_min_time(
            (Vector3::zeros(), Vector3::zeros()),
            (Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()),
            Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap();
        assert!(sample_trajectory(&traj, 0.0).is_err());
    }

    fn endpoint() -> impl Strategy<Value = (f64, f64)> {
        (-10.0..10.0f64, -10.0..10.0f64)
    }

    proptest! {
        #[test]
        fn switch_velocity_is_continuous((p0, v0) in endpoint(), (pf, vf) in endpoint(), a in 1.0..15.0f64) {
            let p = solve_axis_min_time(p0, v0, pf, vf, a).unwrap();
            let (_, v_before) = p.state_at(p.t1);
            prop_assert!((v_before - p.v1).abs() < 1e-12);
            prop_assert!(p.t1 >= 0.0 && p.t2 >= 0.0);
            prop_assert!(p.endpoint_residual() < 1e-9);
        }

        #[test]
        fn larger_bound_on_binding_axis_never_slower(
            (p0, v0) in endpoint(), (pf, vf) in endpoint(),
            (q0, w0) in endpoint(), (qf, wf) in endpoint(),
            a in 1.0..15.0f64, b in 1.0..15.0f64, extra in 0.0..5.0f64
        ) {
            let start = (Vector3::new(p0, q0, 0.0), Vector3::new(v0, w0, 0.0));
            let end = (Vector3::new(pf, qf, 0.0), Vector3::new(vf, wf, 0.0));
            let bound = Vector3::new(a, b, 1.0);
            let base = solve_3d_min_time(start, end, bound).unwrap();
            let binding = (0..3)
                .max_by(|&i, &j| {
                    let ti = solve_axis_min_time(start.0[i], start.1[i], end.0[i], end.1[i], bound[i]).unwrap().duration();
                    let tj = solve_axis_min_time(start.0[j], start.1[j], end.0[j], end.1[j], bound[j]).unwrap().duration();
                    ti.total_cmp(&tj)
                })
                .unwrap();
            let mut raised = bound;
            raised[binding] += extra;
            let faster = solve_3d_min_time(start, end, raised).unwrap();
            prop_assert!(faster.total_time <= base.total_time + 1e-9,
                "{} > {}", faster.total_time, base.total_time);
        }

        #[test]
        fn finite_difference_consistency(
            (p0, v0) in endpoint(), (pf, vf) in endpoint(), a in 1.0..15.0f64, dt in 0.01..0.2f64
        ) {
            let traj = solve_3d_min_time(
                (Vector3::new(p0, 0.0, 0.0), Vector3::new(v0, 0.0, 0.0)),
                (Vector3::new(pf, 0.0, 0.0), Vector3::new(vf, 0.0, 0.0)),
                Vector3::new(a, a, a),
            ).unwrap();
            let s = sample_trajectory(&traj, dt).unwrap();
            for w in s.windows(2) {
                let step = (w[1].0.x - w[0].0.x) / dt;
                let mean = 0.5 * (w[1].1.x + w[0].1.x);
                // The last interval may be shorter than dt.
                let h = if (w[1].0 - traj.end().0).norm() < 1e-15 { f64::INFINITY } else { dt };
                if h.is_finite() {
                    prop_assert!((step - mean).abs() < a * dt);
                }
            }
        }
    }
}
