//! Waypoint velocity selection for the point-mass model.
//!
//! Two graph searches run over layered velocity candidates. The first pass
//! samples speeds along the direction from the previous waypoint. The second
//! resamples a cone of directions around each winner at the same speed.
//! Edge weights are the synchronized bang-bang leg times from [`crate::pointmass`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::pointmass::{solve_3d_min_time, MassPointTrajectory};
use crate::{Error, Result};

/// Planner settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Per-axis acceleration bound of the point mass [m/s²].
    pub accel_max: [f64; 3],
    /// Speeds sampled in the first pass are `1, 2, …, speed_samples` [m/s].
    pub speed_samples: usize,
    /// Off-axis angles of the resampling cone rings [deg].
    pub cone_angles_deg: Vec<f64>,
    /// Azimuthal samples per cone ring.
    pub cone_azimuths: usize,
    /// Plan at most this many waypoints ahead.
    pub horizon_cap: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            accel_max: [10.0, 10.0, 12.0],
            speed_samples: 20,
            cone_angles_deg: vec![10.0, 20.0],
            cone_azimuths: 8,
            horizon_cap: None,
        }
    }
}

impl PlannerConfig {
    pub fn accel_vector(&self) -> Vector3<f64> {
        Vector3::from(self.accel_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.accel_max.iter().all(|a| a.is_finite() && *a > 0.0) {
            return Err(Error::Validation("a_max > 0".into()));
        }
        if self.speed_samples == 0 {
            return Err(Error::Validation("speed_samples >= 1".into()));
        }
        if !self.cone_angles_deg.iter().all(|a| a.is_finite()) {
            return Err(Error::Validation("cone angles finite".into()));
        }
        if self.horizon_cap == Some(0) {
            return Err(Error::Validation("horizon_cap >= 1".into()));
        }
        Ok(())
    }
}

/// Waypoint as seen by the planner at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanWaypoint {
    pub position: Vector3<f64>,
    /// Forces a zero-velocity node.
    pub stop: bool,
}

/// Layered graph: layer 0 is the current state, layer `i` holds velocity
/// candidates at waypoint `i`.
#[derive(Debug, Clone)]
pub struct VelocityGraph {
    /// Position of every layer; entry 0 is the vehicle position.
    pub positions: Vec<Vector3<f64>>,
    /// Velocity candidates per layer; layer 0 has exactly one.
    pub layers: Vec<Vec<Vector3<f64>>>,
    /// `edges[i][a][b]`: travel time from node `a` of layer `i` to node `b`
    /// of layer `i + 1`. Pairs without a synchronized leg are `+∞`.
    pub edges: Vec<Vec<Vec<f64>>>,
}

impl VelocityGraph {
    pub fn build(
        current: (Vector3<f64>, Vector3<f64>),
        waypoints: &[Vector3<f64>],
        candidates: Vec<Vec<Vector3<f64>>>,
        accel_max: Vector3<f64>,
    ) -> Self {
        assert_eq!(waypoints.len(), candidates.len());
        let mut positions = Vec::with_capacity(waypoints.len() + 1);
        positions.push(current.0);
        positions.extend_from_slice(waypoints);
        let mut layers = Vec::with_capacity(candidates.len() + 1);
        layers.push(vec![current.1]);
        layers.extend(candidates);
        let edges = (0..layers.len() - 1)
            .map(|i| {
                layers[i]
                    .iter()
                    .map(|va| {
                        layers[i + 1]
                            .iter()
                            .map(|vb| {
                                solve_3d_min_time((positions[i], *va), (positions[i + 1], *vb), accel_max)
                                    .map(|t| t.total_time)
                                    .unwrap_or(f64::INFINITY)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { positions, layers, edges }
    }

    pub fn num_waypoints(&self) -> usize {
        self.layers.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    cost: f64,
    layer: usize,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost; ties broken on position for determinism.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.layer.cmp(&self.layer))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path through the layered graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath {
    /// Chosen node per waypoint layer (layer 0 omitted).
    pub nodes: Vec<usize>,
    pub total_time: f64,
}

/// Dijkstra from the single source node to the cheapest node of the last layer.
pub fn dijkstra_min_time(graph: &VelocityGraph) -> Result<GraphPath> {
    let n_layers = graph.layers.len();
    if graph.layers.first().map_or(true, |l| l.len() != 1) {
        return Err(Error::InvalidArgument("layer 0 must hold exactly one node".into()));
    }
    if graph.layers.iter().any(|l| l.is_empty()) {
        return Err(Error::InvalidArgument("empty velocity layer".into()));
    }
    if n_layers == 1 {
        return Ok(GraphPath { nodes: Vec::new(), total_time: 0.0 });
    }
    let mut dist: Vec<Vec<f64>> = graph.layers.iter().map(|l| vec![f64::INFINITY; l.len()]).collect();
    let mut prev: Vec<Vec<usize>> = graph.layers.iter().map(|l| vec![usize::MAX; l.len()]).collect();
    let mut done: Vec<Vec<bool>> = graph.layers.iter().map(|l| vec![false; l.len()]).collect();
    dist[0][0] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Frontier { cost: 0.0, layer: 0, node: 0 });
    let mut target: Option<usize> = None;
    while let Some(Frontier { cost, layer, node }) = heap.pop() {
        if done[layer][node] {
            continue;
        }
        done[layer][node] = true;
        if layer == n_layers - 1 {
            target = Some(node);
            break;
        }
        for (next, w) in graph.edges[layer][node].iter().enumerate() {
            if !w.is_finite() {
                continue;
            }
            let c = cost + w;
            if c < dist[layer + 1][next] {
                dist[layer + 1][next] = c;
                prev[layer + 1][next] = node;
                heap.push(Frontier { cost: c, layer: layer + 1, node: next });
            }
        }
    }
    let last = target.ok_or(Error::NoRoot)?;
    let mut nodes = vec![0; n_layers - 1];
    let mut cur = last;
    for layer in (1..n_layers).rev() {
        nodes[layer - 1] = cur;
        cur = prev[layer][cur];
    }
    Ok(GraphPath { nodes, total_time: dist[n_layers - 1][last] })
}

/// Unit vector from `from` to `to`.
pub fn heading_direction(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<Unit<Vector3<f64>>> {
    Unit::try_new(to - from, 1e-12).ok_or(Error::CoincidentWaypoints)
}

/// Speeds `1..=count` along `direction`.
pub fn magnitude_samples(direction: &Unit<Vector3<f64>>, count: usize) -> Vec<Vector3<f64>> {
    (1..=count).map(|k| direction.into_inner() * k as f64).collect()
}

/// `v_min` followed by rings of equal-magnitude vectors tilted off its axis.
pub fn cone_resample(v_min: &Vector3<f64>, azimuths: usize, angles_rad: &[f64]) -> Vec<Vector3<f64>> {
    let speed = v_min.norm();
    let mut out = vec![*v_min];
    if speed == 0.0 || azimuths == 0 {
        return out;
    }
    let axis = v_min / speed;
    // Seed with the world axis least aligned with v_min.
    let seed = match axis.iamin() {
        0 => Vector3::x(),
        1 => Vector3::y(),
        _ => Vector3::z(),
    };
    let e1 = seed.cross(&axis).normalize();
    let e2 = axis.cross(&e1);
    for &theta in angles_rad {
        let (s, c) = theta.sin_cos();
        for j in 0..azimuths {
            let phi = TAU * j as f64 / azimuths as f64;
            let radial = e1 * phi.cos() + e2 * phi.sin();
            let dir = (axis * c + radial * s).normalize();
            out.push(dir * speed);
        }
    }
    out
}

/// Result of the two-pass search.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityPlan {
    /// Start position and velocity of the plan.
    pub start: (Vector3<f64>, Vector3<f64>),
    /// Selected velocity at each waypoint.
    pub velocities: Vec<Vector3<f64>>,
    /// Consecutive legs; `legs[i].start_time` is the arrival time at the previous waypoint.
    pub legs: Vec<MassPointTrajectory>,
    /// Arrival time at each waypoint [s].
    pub arrival_times: Vec<f64>,
    pub total_time: f64,
    /// Total time after the first pass alone.
    pub first_pass_time: f64,
}

impl VelocityPlan {
    /// Position and velocity at time `t` after the plan start; holds the
    /// final position once the plan is over.
    pub fn state_at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        if self.legs.is_empty() {
            return self.start;
        }
        if t >= self.total_time {
            let (p, v) = self.legs.last().unwrap().end();
            return (p, v);
        }
        let idx = self
            .legs
            .iter()
            .position(|leg| t <= leg.start_time + leg.total_time)
            .unwrap_or(self.legs.len() - 1);
        let leg = &self.legs[idx];
        leg.state_at(t - leg.start_time)
    }

    pub fn accel_at(&self, t: f64) -> Vector3<f64> {
        match self
            .legs
            .iter()
            .find(|leg| t >= leg.start_time && t <= leg.start_time + leg.total_time)
        {
            Some(leg) => leg.accel_at(t - leg.start_time),
            None => Vector3::zeros(),
        }
    }
}

fn layer_candidates(
    prev: &Vector3<f64>,
    wp: &PlanWaypoint,
    count: usize,
) -> Vec<Vector3<f64>> {
    if wp.stop {
        return vec![Vector3::zeros()];
    }
    match heading_direction(prev, &wp.position) {
        Ok(dir) => magnitude_samples(&dir, count),
        Err(_) => vec![Vector3::zeros()],
    }
}

fn chain_legs(
    current: (Vector3<f64>, Vector3<f64>),
    waypoints: &[PlanWaypoint],
    velocities: &[Vector3<f64>],
    accel_max: Vector3<f64>,
) -> Result<(Vec<MassPointTrajectory>, Vec<f64>)> {
    let mut legs = Vec::with_capacity(waypoints.len());
    let mut arrivals = Vec::with_capacity(waypoints.len());
    let mut from = current;
    let mut t = 0.0;
    for (wp, v) in waypoints.iter().zip(velocities) {
        let to = (wp.position, *v);
        let mut leg = solve_3d_min_time(from, to, accel_max)?;
        leg.start_time = t;
        t += leg.total_time;
        arrivals.push(t);
        legs.push(leg);
        from = to;
    }
    Ok((legs, arrivals))
}

/// Two-pass velocity search over the waypoints ahead of `current`.
pub fn plan_velocities(
    current: (Vector3<f64>, Vector3<f64>),
    waypoints: &[PlanWaypoint],
    config: &PlannerConfig,
) -> Result<VelocityPlan> {
    plan_velocities_after(current, None, waypoints, config)
}

/// As [`plan_velocities`], with the first sampling direction taken from
/// `previous` (the waypoint last passed) instead of the current position.
pub fn plan_velocities_after(
    current: (Vector3<f64>, Vector3<f64>),
    previous: Option<Vector3<f64>>,
    waypoints: &[PlanWaypoint],
    config: &PlannerConfig,
) -> Result<VelocityPlan> {
    let accel = config.accel_vector();
    let ahead = match config.horizon_cap {
        Some(cap) => &waypoints[..waypoints.len().min(cap)],
        None => waypoints,
    };
    if ahead.is_empty() {
        return Ok(VelocityPlan {
            start: current,
            velocities: Vec::new(),
            legs: Vec::new(),
            arrival_times: Vec::new(),
            total_time: 0.0,
            first_pass_time: 0.0,
        });
    }
    let positions: Vec<Vector3<f64>> = ahead.iter().map(|w| w.position).collect();

    let first: Vec<Vec<Vector3<f64>>> = ahead
        .iter()
        .enumerate()
        .map(|(i, wp)| {
            let prev = if i == 0 { previous.unwrap_or(current.0) } else { positions[i - 1] };
            layer_candidates(&prev, wp, config.speed_samples)
        })
        .collect();
    let graph = VelocityGraph::build(current, &positions, first, accel);
    let path = dijkstra_min_time(&graph)?;
    let v_min: Vec<Vector3<f64>> = path
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| graph.layers[i + 1][n])
        .collect();

    let angles: Vec<f64> = config.cone_angles_deg.iter().map(|d| d.to_radians()).collect();
    let second: Vec<Vec<Vector3<f64>>> = v_min
        .iter()
        .map(|v| cone_resample(v, config.cone_azimuths, &angles))
        .collect();
    let graph2 = VelocityGraph::build(current, &positions, second, accel);
    let path2 = dijkstra_min_time(&graph2)?;
    let velocities: Vec<Vector3<f64>> = path2
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| graph2.layers[i + 1][n])
        .collect();

    let (legs, arrival_times) = chain_legs(current, ahead, &velocities, accel)?;
    let total_time = arrival_times.last().copied().unwrap_or(0.0);
    Ok(VelocityPlan {
        start: current,
        velocities,
        legs,
        arrival_times,
        total_time,
        first_pass_time: path.total_time,
    })
}

/// First grid instant at which the two plans are closer than `tolerance` in
/// the downwash-scaled metric. Each plan holds its final position after it
/// ends; the scan covers the longer of the two.
pub fn first_collision_time(
    a: &VelocityPlan,
    b: &VelocityPlan,
    downwash: &Vector3<f64>,
    tolerance: f64,
    dt: f64,
) -> Result<Option<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("scan step must be positive, got {dt}")));
    }
    let horizon = a.total_time.max(b.total_time);
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let tol2 = tolerance * tolerance;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let d = (a.state_at(t).0 - b.state_at(t).0).component_mul(downwash);
        if d.norm_squared() < tol2 {
            return Ok(Some(t));
        }
    }
    Ok(None)
}
