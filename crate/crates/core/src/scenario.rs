//! Scenario description and its TOML file format.
//!
//! ```toml
//! name = "demo"
//!
//! [model]            # optional, every key optional
//! mass = 1.0
//! thrust_max = 30.0
//!
//! [solver]           # optional, see SolverConfig
//! [planner]          # optional, see PlannerConfig
//!
//! [sim]
//! duration = 8.0
//! control_period = 0.02
//! predict_motion = true  # aim moving waypoints at the planned arrival time
//! heading_from_previous = true
//!
//! [[waypoints]]      # shared track, flown in order
//! position = [5.0, 15.0, 2.0]
//! tolerance = 0.3    # optional
//! stop = false       # optional
//! motion = { amplitude = [0.0, 2.0, 0.0], period = [1.0, 4.0, 1.0] }  # optional
//!
//! [[quads]]          # one or two vehicles
//! position = [0.0, 15.0, 2.0]
//! velocity = [0.0, 0.0, 0.0]       # optional
//! attitude = [1.0, 0.0, 0.0, 0.0]  # optional, (w, x, y, z)
//! waypoints = [{ position = [2.0, 0.0, 1.0], stop = true }]  # optional, replaces the shared track
//! ```

use std::path::Path;

use nalgebra::{Quaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, QuadState};
use crate::pmpc::SolverConfig;
use crate::velocity_search::PlannerConfig;
use crate::waypoint::{MotionLaw, Waypoint, DEFAULT_PASS_TOLERANCE};
use crate::{Error, Result};

/// Simulation loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    /// Upper bound on simulated time [s].
    pub duration: f64,
    /// Control period [s].
    pub control_period: f64,
    /// Aim at moving waypoints where they will be at the planned arrival time.
    pub predict_motion: bool,
    /// Sample the next waypoint's velocity along the direction from the
    /// waypoint last passed rather than from the current position.
    pub heading_from_previous: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { duration: 20.0, control_period: 0.02, predict_motion: true, heading_from_previous: true }
    }
}

/// Everything needed to run one closed-loop simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackScenario {
    pub name: String,
    /// Initial state of each vehicle (one or two).
    pub initial_states: Vec<QuadState>,
    /// Ordered waypoints per vehicle.
    pub waypoints: Vec<Vec<Waypoint>>,
    pub params: ModelParams,
    pub solver: SolverConfig,
    pub planner: PlannerConfig,
    pub sim: SimSettings,
}

impl TrackScenario {
    pub fn num_quads(&self) -> usize {
        self.initial_states.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.initial_states.len();
        if n == 0 || n > 2 {
            return Err(Error::Validation("one or two quadrotors".into()));
        }
        if self.waypoints.len() != n {
            return Err(Error::Validation("one waypoint list per quadrotor".into()));
        }
        self.params.validate()?;
        self.solver.validate()?;
        self.planner.validate()?;
        if !(self.sim.duration.is_finite() && self.sim.duration > 0.0) {
            return Err(Error::Validation("duration > 0".into()));
        }
        if !(self.sim.control_period.is_finite() && self.sim.control_period > 0.0) {
            return Err(Error::Validation("control_period > 0".into()));
        }
        for s in &self.initial_states {
            s.check_finite()?;
            if ((s.attitude.norm()) - 1.0).abs() > 1e-6 {
                return Err(Error::Validation("‖q‖ = 1".into()));
            }
        }
        for w in self.waypoints.iter().flatten() {
            w.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gravity: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thrust_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thrust_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_max: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    downwash: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    collision_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointEntry {
    position: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    stop: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    motion: Option<MotionLaw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadEntry {
    position: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    velocity: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attitude: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    waypoints: Option<Vec<WaypointEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control_period: Option<f64>,
    predict_motion: Option<bool>,
    heading_from_previous: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    planner: Option<PlannerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    waypoints: Vec<WaypointEntry>,
    quads: Vec<QuadEntry>,
}

fn or_default<T: std::fmt::Debug>(value: Option<T>, default: T, key: &str) -> T {
    match value {
        Some(v) => v,
        None => {
            log::info!("{key} not set, using default {default:?}");
            default
        }
    }
}

fn to_waypoint(e: WaypointEntry) -> Waypoint {
    Waypoint {
        base_position: Vector3::from(e.position),
        motion: e.motion,
        pass_tolerance: e.tolerance.unwrap_or(DEFAULT_PASS_TOLERANCE),
        stop: e.stop,
    }
}

fn from_waypoint(w: &Waypoint) -> WaypointEntry {
    WaypointEntry {
        position: w.base_position.into(),
        tolerance: Some(w.pass_tolerance),
        stop: w.stop,
        motion: w.motion.clone(),
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<TrackScenario> {
        let d = ModelParams::default();
        let m = self.model.unwrap_or_else(|| {
            log::info!("[model] not set, using defaults");
            ModelSection::default()
        });
        let params = ModelParams {
            mass: or_default(m.mass, d.mass, "model.mass"),
            gravity: Vector3::from(or_default(m.gravity, d.gravity.into(), "model.gravity")),
            thrust_min: or_default(m.thrust_min, d.thrust_min, "model.thrust_min"),
            thrust_max: or_default(m.thrust_max, d.thrust_max, "model.thrust_max"),
            rate_max: Vector3::from(or_default(m.rate_max, d.rate_max.into(), "model.rate_max")),
            downwash: Vector3::from(or_default(m.downwash, d.downwash.into(), "model.downwash")),
            collision_tolerance: or_default(m.collision_tolerance, d.collision_tolerance, "model.collision_tolerance"),
        };
        let solver = or_default(self.solver, SolverConfig::default(), "[solver]");
        let planner = or_default(self.planner, PlannerConfig::default(), "[planner]");
        let ds = SimSettings::default();
        let sim = match self.sim {
            Some(s) => SimSettings {
                duration: or_default(s.duration, ds.duration, "sim.duration"),
                control_period: or_default(s.control_period, ds.control_period, "sim.control_period"),
                predict_motion: or_default(s.predict_motion, ds.predict_motion, "sim.predict_motion"),
                heading_from_previous: or_default(s.heading_from_previous, ds.heading_from_previous, "sim.heading_from_previous"),
            },
            None => or_default(None, ds, "[sim]"),
        };
        let shared: Vec<Waypoint> = self.waypoints.into_iter().map(to_waypoint).collect();
        let mut initial_states = Vec::new();
        let mut waypoints = Vec::new();
        for q in self.quads {
            let att = q.attitude.unwrap_or([1.0, 0.0, 0.0, 0.0]);
            let state = QuadState::new(
                Vector3::from(q.position),
                Vector3::from(q.velocity.unwrap_or([0.0; 3])),
                Quaternion::new(att[0], att[1], att[2], att[3]),
            )
            .map_err(|e| Error::Validation(e.to_string()))?;
            initial_states.push(state);
            waypoints.push(match q.waypoints {
                Some(list) => list.into_iter().map(to_waypoint).collect(),
                None => shared.clone(),
            });
        }
        let scenario = TrackScenario { name: self.name, initial_states, waypoints, params, solver, planner, sim };
        scenario.validate()?;
        Ok(scenario)
    }

    fn from_scenario(s: &TrackScenario) -> Self {
        let p = &s.params;
        let shared = s.waypoints.first().cloned().unwrap_or_default();
        let all_shared = s.waypoints.iter().all(|w| *w == shared);
        ScenarioFile {
            name: s.name.clone(),
            model: Some(ModelSection {
                mass: Some(p.mass),
                gravity: Some(p.gravity.into()),
                thrust_min: Some(p.thrust_min),
                thrust_max: Some(p.thrust_max),
                rate_max: Some(p.rate_max.into()),
                downwash: Some(p.downwash.into()),
                collision_tolerance: Some(p.collision_tolerance),
            }),
            solver: Some(s.solver.clone()),
            planner: Some(s.planner.clone()),
            sim: Some(SimSection {
                duration: Some(s.sim.duration),
                control_period: Some(s.sim.control_period),
                predict_motion: Some(s.sim.predict_motion),
                heading_from_previous: Some(s.sim.heading_from_previous),
            }),
            waypoints: if all_shared { shared.iter().map(from_waypoint).collect() } else { Vec::new() },
            quads: s
                .initial_states
                .iter()
                .zip(&s.waypoints)
                .map(|(x, w)| QuadEntry {
                    position: x.position.into(),
                    velocity: Some(x.velocity.into()),
                    attitude: Some([x.attitude.w, x.attitude.i, x.attitude.j, x.attitude.k]),
                    waypoints: if all_shared { None } else { Some(w.iter().map(from_waypoint).collect()) },
                })
                .collect(),
        }
    }
}

/// Parses a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<TrackScenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
    file.into_scenario()
}

/// Renders a scenario as TOML with every key explicit.
pub fn scenario_to_toml(s: &TrackScenario) -> Result<String> {
    toml::to_string(&ScenarioFile::from_scenario(s)).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_scenario(path: &Path) -> Result<TrackScenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_scenario(s: &TrackScenario, path: &Path) -> Result<()> {
    std::fs::write(path, scenario_to_toml(s)?)?;
    Ok(())
}

/// Scenario files shipped with the library.
pub const BUNDLED: &[(&str, &str)] = &[
    ("hover10m", include_str!("../scenarios/hover10m.toml")),
    ("table2_track", include_str!("../scenarios/table2_track.toml")),
    ("position_switch", include_str!("../scenarios/position_switch.toml")),
    ("six_gate_compact", include_str!("../scenarios/six_gate_compact.toml")),
];

/// Loads a bundled scenario by name.
pub fn bundled(name: &str) -> Result<TrackScenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown bundled scenario '{name}'")))
        .and_then(|(_, text)| parse_scenario(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_load() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap();
            assert_eq!(s.name, *name);
        }
    }

    #[test]
    fn table2_waypoints() {
        let s = bundled("table2_track").unwrap();
        let expected = [
            [5.0, 15.0, 2.0],
            [25.0, 5.0, 3.0],
            [20.0, 25.0, 5.0],
            [14.0, 14.0, 2.0],
            [18.0, 18.0, 6.0],
            [5.0, 14.0, 4.0],
        ];
        assert_eq!(s.num_quads(), 2);
        for wps in &s.waypoints {
            assert_eq!(wps.len(), 6);
            for (w, e) in wps.iter().zip(expected) {
                assert_eq!(w.base_position, Vector3::from(e));
            }
            assert!(wps[1].motion.is_some());
            assert!(wps.iter().enumerate().all(|(i, w)| (i == 1) == w.motion.is_some()));
        }
    }

    #[test]
    fn empty_file_is_parse_error() {
        assert!(matches!(parse_scenario(""), Err(Error::Parse(_))));
    }

    #[test]
    fn negative_rate_bound_is_validation_error() {
        let text = "name = \"x\"\n[model]\nrate_max = [-1.0, 3.0, 3.0]\n[[quads]]\nposition = [0.0, 0.0, 1.0]\n";
        match parse_scenario(text) {
            Err(Error::Validation(m)) => assert_eq!(m, "ω_max > 0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_location() {
        let text = "name = \"x\"\n[model]\nmas = 1.0\n[[quads]]\nposition = [0.0, 0.0, 1.0]\n";
        match parse_scenario(text) {
            Err(Error::Parse(m)) => {
                assert!(m.contains("mas"), "{m}");
                assert!(m.contains("line 3"), "{m}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_bundled() {
        for (name, _) in BUNDLED {
            let s = bundled(name).unwrap();
            let text = scenario_to_toml(&s).unwrap();
            assert_eq!(parse_scenario(&text).unwrap(), s, "{name}");
        }
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let s = parse_scenario("name = \"m\"\n[[quads]]\nposition = [0.0, 0.0, 1.0]\n").unwrap();
        assert_eq!(s.params, ModelParams::default());
        assert_eq!(s.solver, SolverConfig::default());
        assert_eq!(s.sim, SimSettings::default());
        assert!(s.waypoints[0].is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
            prop::array::uniform3(-r..r).prop_map(Vector3::from)
        }

        fn waypoint() -> impl Strategy<Value = Waypoint> {
            (vec3(30.0), 0.05..2.0f64, any::<bool>(), prop::option::of((prop::array::uniform3(0.0..3.0f64), prop::array::uniform3(0.5..8.0f64))))
                .prop_map(|(p, tol, stop, motion)| Waypoint {
                    base_position: p,
                    motion: motion.map(|(amplitude, period)| MotionLaw { amplitude, period, phase: [0.0, 0.5, -1.0] }),
                    pass_tolerance: tol,
                    stop,
                })
        }

        fn quad() -> impl Strategy<Value = (QuadState, Vec<Waypoint>)> {
            (vec3(30.0), vec3(5.0), prop::collection::vec(waypoint(), 0..5)).prop_map(|(p, v, w)| {
                (QuadState { position: p, velocity: v, attitude: Quaternion::identity() }, w)
            })
        }

        fn scenario() -> impl Strategy<Value = TrackScenario> {
            (
                prop::collection::vec(quad(), 1..=2),
                0.5..3.0f64,
                2usize..40,
                0.01..0.05f64,
                1.0..30.0f64,
                any::<bool>(),
            )
                .prop_map(|(quads, mass, horizon, dt, duration, predict)| {
                    let mut s = bundled("hover10m").unwrap();
                    s.name = "random".into();
                    s.initial_states = quads.iter().map(|q| q.0).collect();
                    s.waypoints = quads.into_iter().map(|q| q.1).collect();
                    s.params.mass = mass;
                    s.solver.horizon = horizon;
                    s.solver.dt = dt;
                    s.sim.duration = duration;
                    s.sim.predict_motion = predict;
                    s
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn round_trip(s in scenario()) {
                prop_assume!(s.validate().is_ok());
                let text = scenario_to_toml(&s).unwrap();
                prop_assert_eq!(parse_scenario(&text).unwrap(), s);
            }
        }
    }
}
