//! On-disk output formats.
//!
//! A run writes `trajectory.csv` and `summary.json`; the plan command writes
//! `plan.csv` and `plan.json`. CSV files start with a `#` line naming the
//! format version, followed by a fixed column header. Every number is written
//! in scientific notation with ten significant digits; fields that do not
//! apply are left empty.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::scenario::TrackScenario;
use crate::sim::{ScenarioPlan, SimLog, SimSummary};
use crate::Result;

pub const TRAJECTORY_FORMAT: &str = "pmpc-trajectory/1";
pub const PLAN_FORMAT: &str = "pmpc-plan/1";

pub const TRAJECTORY_HEADER: &str =
    "t,quad,px,py,pz,vx,vy,vz,qw,qx,qy,qz,thrust,wx,wy,wz,waypoint,e_distance,solve_time";
pub const PLAN_HEADER: &str = "t,quad,px,py,pz,vx,vy,vz,ax,ay,az";

fn num(out: &mut String, x: f64) {
    // -0 and 0 print the same.
    let x = if x == 0.0 { 0.0 } else { x };
    write!(out, "{x:.9e}").unwrap();
}

fn row(out: &mut String, fields: &[f64]) {
    for (i, x) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        num(out, *x);
    }
}

/// Trajectory table: one row per record and vehicle. `solve_time` is the
/// wall-clock solve time of the cycle when `timing` is set, otherwise 0 so
/// that repeated runs produce identical bytes.
pub fn trajectory_csv(log: &SimLog, timing: bool) -> String {
    let mut out = format!("# {TRAJECTORY_FORMAT}\n{TRAJECTORY_HEADER}\n");
    for (k, rec) in log.records.iter().enumerate() {
        let solve = if timing { log.solve_times.get(k).copied().unwrap_or(0.0) } else { 0.0 };
        for (j, (x, u)) in rec.states.iter().zip(&rec.inputs).enumerate() {
            let q = &x.attitude;
            num(&mut out, rec.t);
            write!(out, ",{j},").unwrap();
            row(
                &mut out,
                &[
                    x.position.x,
                    x.position.y,
                    x.position.z,
                    x.velocity.x,
                    x.velocity.y,
                    x.velocity.z,
                    q.w,
                    q.i,
                    q.j,
                    q.k,
                    u.thrust,
                    u.body_rates.x,
                    u.body_rates.y,
                    u.body_rates.z,
                ],
            );
            write!(out, ",{},", rec.active_waypoints[j]).unwrap();
            if let Some(d) = rec.separation {
                num(&mut out, d);
            }
            out.push(',');
            num(&mut out, solve);
            out.push('\n');
        }
    }
    out
}

/// Solve-time distribution [ms].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    pub cycles: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
}

/// Nearest-rank percentile of `sorted`, `p` in (0, 1].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn solve_stats(times: &[f64]) -> Option<SolveStats> {
    if times.is_empty() {
        return None;
    }
    let mut s: Vec<f64> = times.iter().map(|t| t * 1e3).collect();
    s.sort_by(f64::total_cmp);
    Some(SolveStats {
        cycles: s.len(),
        median_ms: percentile(&s, 0.5),
        p95_ms: percentile(&s, 0.95),
        max_ms: s[s.len() - 1],
        mean_ms: s.iter().sum::<f64>() / s.len() as f64,
    })
}

#[derive(Serialize)]
struct RunSummary<'a> {
    format: &'static str,
    scenario: &'a str,
    control_period: f64,
    #[serde(flatten)]
    summary: &'a SimSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve_time: Option<SolveStats>,
}

pub fn summary_json(log: &SimLog, timing: bool) -> String {
    let doc = RunSummary {
        format: TRAJECTORY_FORMAT,
        scenario: &log.scenario,
        control_period: log.control_period,
        summary: &log.summary,
        solve_time: if timing { solve_stats(&log.solve_times) } else { None },
    };
    serde_json::to_string_pretty(&doc).unwrap() + "\n"
}

/// Writes `trajectory.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_run(dir: &Path, log: &SimLog, timing: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trajectory.csv"), trajectory_csv(log, timing))?;
    fs::write(dir.join("summary.json"), summary_json(log, timing))?;
    Ok(())
}

/// Point-mass reference sampled every solver step until the longest plan ends.
pub fn plan_csv(scn: &TrackScenario, plan: &ScenarioPlan) -> String {
    let dt = scn.solver.dt;
    let end = plan.plans.iter().map(|p| p.total_time).fold(0.0, f64::max);
    let steps = (end / dt).ceil() as usize;
    let mut out = format!("# {PLAN_FORMAT}\n{PLAN_HEADER}\n");
    for k in 0..=steps {
        let t = (k as f64 * dt).min(end);
        for (j, p) in plan.plans.iter().enumerate() {
            let (pos, vel) = p.state_at(t);
            let acc = p.accel_at(t);
            num(&mut out, t);
            write!(out, ",{j},").unwrap();
            row(&mut out, &[pos.x, pos.y, pos.z, vel.x, vel.y, vel.z, acc.x, acc.y, acc.z]);
            out.push('\n');
        }
    }
    out
}

#[derive(Serialize)]
struct QuadPlanDoc {
    waypoint_velocities: Vec<[f64; 3]>,
    arrival_times: Vec<f64>,
    total_time: f64,
    first_pass_time: f64,
}

#[derive(Serialize)]
struct PlanDoc<'a> {
    format: &'static str,
    scenario: &'a str,
    collision_time: Option<f64>,
    quads: Vec<QuadPlanDoc>,
}

pub fn plan_json(scn: &TrackScenario, plan: &ScenarioPlan) -> String {
    let doc = PlanDoc {
        format: PLAN_FORMAT,
        scenario: &scn.name,
        collision_time: plan.collision_time,
        quads: plan
            .plans
            .iter()
            .map(|p| QuadPlanDoc {
                waypoint_velocities: p.velocities.iter().map(|v| [v.x, v.y, v.z]).collect(),
                arrival_times: p.arrival_times.clone(),
                total_time: p.total_time,
                first_pass_time: p.first_pass_time,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).unwrap() + "\n"
}

/// Writes `plan.csv` and `plan.json` into `dir`, creating it if needed.
pub fn write_plan(dir: &Path, scn: &TrackScenario, plan: &ScenarioPlan) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("plan.csv"), plan_csv(scn, plan))?;
    fs::write(dir.join("plan.json"), plan_json(scn, plan))?;
    Ok(())
}
