//! Closed-loop simulation of one or two quadrotors.

use nalgebra::Vector3;
use serde::Serialize;

use crate::model::{rk4_step, ControlInput, QuadState};
use crate::pmpc::{shift_warm_start, solve_ocp, solve_ocp_with, OcpProblem, QuadTask, QuadTrajectory};
use crate::scenario::TrackScenario;
use crate::velocity_search::{first_collision_time, plan_velocities_after, PlanWaypoint, VelocityPlan};
use crate::waypoint::Waypoint;
use crate::{Error, Result};

/// Snapshot at one control instant. `inputs` are applied from `t` to the next record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub states: Vec<QuadState>,
    pub inputs: Vec<ControlInput>,
    /// Index of the next waypoint per vehicle; equal to the list length once finished.
    pub active_waypoints: Vec<usize>,
    /// Reference velocity handed to the controller.
    pub planned_velocity: Vec<Vector3<f64>>,
    /// First predicted point-mass conflict, relative to `t`.
    pub collision_time: Option<f64>,
    /// `‖E(ξ_1 − ξ_2)‖` at `t`; `None` with a single vehicle.
    pub separation: Option<f64>,
    pub solver_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    /// Time at which the later vehicle passed its last waypoint.
    pub lap_time: Option<f64>,
    pub finish_times: Vec<Option<f64>>,
    pub top_speed: f64,
    pub min_distance: Option<f64>,
    pub collision: bool,
    pub steps: usize,
    pub solver_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub scenario: String,
    pub control_period: f64,
    pub collision_tolerance: f64,
    pub waypoint_counts: Vec<usize>,
    pub records: Vec<StepRecord>,
    /// Wall-clock solve time per control cycle [s]. Not part of the
    /// deterministic output.
    pub solve_times: Vec<f64>,
    pub summary: SimSummary,
}

/// Options that do not change the simulated trajectory semantics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Run the solver to its offline iteration cap every cycle.
    pub offline_refine: bool,
}

/// Smallest parameter `s ∈ [s0, 1]` where the segment `a → b` is strictly
/// inside the ball, if any.
fn segment_ball_entry(a: &Vector3<f64>, b: &Vector3<f64>, center: &Vector3<f64>, radius: f64, s0: f64) -> Option<f64> {
    let d = b - a;
    let f = a - center;
    let dd = d.norm_squared();
    let s_close = if dd > 0.0 { (-f.dot(&d) / dd).clamp(s0, 1.0) } else { s0 };
    let p = a + d * s_close;
    if (p - center).norm() < radius {
        Some(s_close)
    } else {
        None
    }
}

/// Advances `active` past every waypoint whose ball the segment
/// `prev → now` enters, in order.
pub fn advance_waypoint(
    prev: &Vector3<f64>,
    now: &Vector3<f64>,
    waypoints: &[Waypoint],
    active: usize,
    t_now: f64,
) -> usize {
    let mut idx = active;
    let mut s0 = 0.0;
    while idx < waypoints.len() {
        let w = &waypoints[idx];
        match segment_ball_entry(prev, now, &moving_waypoint_position(w, t_now), w.pass_tolerance, s0) {
            Some(s) => {
                idx += 1;
                s0 = s;
            }
            None => break,
        }
    }
    idx
}

pub fn moving_waypoint_position(w: &Waypoint, t: f64) -> Vector3<f64> {
    w.position_at(t)
}

/// Summary statistics recomputed from the records.
pub fn compute_metrics(log: &SimLog) -> Result<SimSummary> {
    if log.records.is_empty() {
        return Err(Error::InvalidArgument("empty simulation log".into()));
    }
    let nq = log.waypoint_counts.len();
    let mut finish_times = vec![None; nq];
    let mut top_speed: f64 = 0.0;
    let mut min_distance: Option<f64> = None;
    for r in &log.records {
        for (j, s) in r.states.iter().enumerate() {
            top_speed = top_speed.max(s.velocity.norm());
            if finish_times[j].is_none() && r.active_waypoints[j] >= log.waypoint_counts[j] {
                finish_times[j] = Some(r.t);
            }
        }
        if let Some(d) = r.separation {
            min_distance = Some(min_distance.map_or(d, |m: f64| m.min(d)));
        }
    }
    let lap_time = if finish_times.iter().all(|f| f.is_some()) {
        finish_times.iter().flatten().copied().reduce(f64::max)
    } else {
        None
    };
    Ok(SimSummary {
        lap_time,
        finish_times,
        top_speed,
        min_distance,
        collision: min_distance.is_some_and(|d| d < log.collision_tolerance),
        steps: log.records.len(),
        solver_failures: log.records.iter().filter(|r| !r.solver_ok).count(),
    })
}

/// Fixed-point passes refining where moving waypoints are met.
const PREDICTION_PASSES: usize = 2;

struct Cycle {
    plans: Vec<VelocityPlan>,
    problem: OcpProblem,
    fills: Vec<Vec<(Vector3<f64>, Vector3<f64>)>>,
    planned: Vec<Vector3<f64>>,
    collision_time: Option<f64>,
}

fn plan_cycle(scn: &TrackScenario, t: f64, states: &[QuadState], active: &[usize]) -> Result<Cycle> {
    let cfg = &scn.solver;
    let mut plans: Vec<VelocityPlan> = Vec::with_capacity(states.len());
    let mut tasks = Vec::with_capacity(states.len());
    for (j, x) in states.iter().enumerate() {
        let wps = &scn.waypoints[j];
        let ahead = &wps[active[j]..];
        let mut remaining: Vec<PlanWaypoint> =
            ahead.iter().map(|w| PlanWaypoint { position: moving_waypoint_position(w, t), stop: w.stop }).collect();
        let previous = (scn.sim.heading_from_previous && active[j] > 0)
            .then(|| moving_waypoint_position(&wps[active[j] - 1], t));
        let mut plan = plan_velocities_after((x.position, x.velocity), previous, &remaining, &scn.planner)?;
        if scn.sim.predict_motion && ahead.iter().any(|w| w.motion.is_some()) {
            for _ in 0..PREDICTION_PASSES {
                for (i, (w, r)) in ahead.iter().zip(remaining.iter_mut()).enumerate() {
                    let arrival = plan.arrival_times.get(i).copied().unwrap_or(plan.total_time);
                    r.position = moving_waypoint_position(w, t + arrival);
                }
                plan = plan_velocities_after((x.position, x.velocity), previous, &remaining, &scn.planner)?;
            }
        }
        let (waypoint, waypoint_velocity) = match remaining.first() {
            Some(w) => (w.position, plan.velocities[0]),
            None => match wps.last() {
                Some(w) => (moving_waypoint_position(w, t), Vector3::zeros()),
                None => (scn.initial_states[j].position, Vector3::zeros()),
            },
        };
        tasks.push(QuadTask::new(*x, waypoint, waypoint_velocity));
        plans.push(plan);
    }
    // Finished vehicles hold at their task waypoint.
    for (plan, task) in plans.iter_mut().zip(&tasks) {
        if plan.legs.is_empty() {
            plan.start = (task.waypoint, Vector3::zeros());
        }
    }
    let collision_time = if plans.len() == 2 {
        first_collision_time(&plans[0], &plans[1], &scn.params.downwash, scn.params.collision_tolerance, cfg.dt)?
    } else {
        None
    };
    let fills: Vec<Vec<(Vector3<f64>, Vector3<f64>)>> = plans
        .iter()
        .zip(&tasks)
        .map(|(p, task)| {
            (0..=cfg.horizon)
                .map(|k| if k == 0 { (task.initial.position, task.initial.velocity) } else { p.state_at(k as f64 * cfg.dt) })
                .collect()
        })
        .collect();
    if scn.solver.track_reference {
        for (task, fill) in tasks.iter_mut().zip(&fills) {
            task.velocity_profile = fill.iter().map(|s: &(Vector3<f64>, Vector3<f64>)| s.1).collect();
        }
    }
    let window = collision_time.map(|tc| ((tc / cfg.dt).round() as usize).min(cfg.horizon));
    let planned = tasks.iter().map(|t| t.waypoint_velocity).collect();
    Ok(Cycle {
        plans,
        problem: OcpProblem { quads: tasks, collision_window: window, config: cfg.clone(), params: scn.params.clone() },
        fills,
        planned,
        collision_time,
    })
}

/// Point-mass plans from the initial states, without any OCP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPlan {
    pub plans: Vec<VelocityPlan>,
    /// First conflict between the two plans [s].
    pub collision_time: Option<f64>,
}

pub fn plan_scenario(scn: &TrackScenario) -> Result<ScenarioPlan> {
    scn.validate()?;
    let cycle = plan_cycle(scn, 0.0, &scn.initial_states, &vec![0; scn.num_quads()])?;
    Ok(ScenarioPlan { plans: cycle.plans, collision_time: cycle.collision_time })
}

fn separation(scn: &TrackScenario, states: &[QuadState]) -> Option<f64> {
    (states.len() == 2).then(|| scn.params.scaled_distance(&(states[0].position - states[1].position)))
}

/// Runs the closed loop until every vehicle has passed its last waypoint or
/// the duration cap is reached.
pub fn run_scenario(scn: &TrackScenario) -> Result<SimLog> {
    run_scenario_with(scn, RunOptions::default())
}

pub fn run_scenario_with(scn: &TrackScenario, opts: RunOptions) -> Result<SimLog> {
    scn.validate()?;
    let period = scn.sim.control_period;
    let nq = scn.num_quads();
    let counts: Vec<usize> = scn.waypoints.iter().map(|w| w.len()).collect();
    let hover = ControlInput::hover(&scn.params);
    let mut states = scn.initial_states.clone();
    let mut active = vec![0usize; nq];
    let mut inputs = vec![hover; nq];
    let mut previous: Option<Vec<QuadTrajectory>> = None;
    let mut records = Vec::new();
    let mut solve_times = Vec::new();
    let max_steps = (scn.sim.duration / period).ceil() as usize;

    for step in 0..=max_steps {
        let t = step as f64 * period;
        let done = active.iter().zip(&counts).all(|(a, c)| a >= c);
        if done || step == max_steps {
            records.push(StepRecord {
                t,
                states: states.clone(),
                inputs: inputs.clone(),
                active_waypoints: active.clone(),
                planned_velocity: vec![Vector3::zeros(); nq],
                collision_time: None,
                separation: separation(scn, &states),
                solver_ok: true,
            });
            break;
        }

        let cycle = plan_cycle(scn, t, &states, &active)?;
        let guess: Vec<QuadTrajectory> = match &previous {
            Some(prev) => prev
                .iter()
                .zip(&cycle.fills)
                .map(|(p, fill)| shift_warm_start(p, fill, period, scn.solver.dt, &scn.params))
                .collect(),
            None => cycle
                .problem
                .quads
                .iter()
                .zip(&cycle.fills)
                .map(|(task, fill)| QuadTrajectory::from_reference(&task.initial, fill, &scn.params))
                .collect(),
        };
        let result = if opts.offline_refine {
            solve_ocp_with(&cycle.problem, Some(&guess), scn.solver.offline_iterations)
        } else {
            solve_ocp(&cycle.problem, Some(&guess))
        };
        let solver_ok = match result {
            Ok(sol) => {
                solve_times.push(sol.solve_time);
                for (u, traj) in inputs.iter_mut().zip(&sol.quads) {
                    *u = ControlInput::from_vector(&traj.inputs[0]);
                }
                previous = Some(sol.quads);
                true
            }
            Err(Error::Solver(msg)) => {
                log::warn!("t = {t:.2} s: solver failed ({msg}); holding last input");
                solve_times.push(0.0);
                previous = None;
                false
            }
            Err(e) => return Err(e),
        };
        records.push(StepRecord {
            t,
            states: states.clone(),
            inputs: inputs.clone(),
            active_waypoints: active.clone(),
            planned_velocity: cycle.planned,
            collision_time: cycle.collision_time,
            separation: separation(scn, &states),
            solver_ok,
        });

        let t_next = (step + 1) as f64 * period;
        for j in 0..nq {
            let next = rk4_step(&states[j], &inputs[j], period, &scn.params)?;
            next.check_finite()?;
            active[j] = advance_waypoint(&states[j].position, &next.position, &scn.waypoints[j], active[j], t_next);
            states[j] = next;
        }
    }

    let mut log = SimLog {
        scenario: scn.name.clone(),
        control_period: period,
        collision_tolerance: scn.params.collision_tolerance,
        waypoint_counts: counts,
        records,
        solve_times,
        summary: SimSummary {
            lap_time: None,
            finish_times: Vec::new(),
            top_speed: 0.0,
            min_distance: None,
            collision: false,
            steps: 0,
            solver_failures: 0,
        },
    };
    log.summary = compute_metrics(&log)?;
    Ok(log)
}
