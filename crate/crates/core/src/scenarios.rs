//! Scenario files and the built-in scenario library.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "name": "demo",
//!   "map": { "rows": ["....", "...."], "resolution": 0.5, "origin": [0.0, 0.0] },
//!   "defaults": { "planner": {}, "cost": {}, "optimizer": {} },
//!   "agents": [
//!     { "id": "a", "start": {"x": 0.2, "y": 0.2, "heading": 0.0},
//!       "goal": {"x": 1.7, "y": 0.7, "heading": 0.0}, "radius": 0.2, "mode": "ds" }
//!   ],
//!   "scripted_obstacles": [],
//!   "duration": 20.0,
//!   "seed": 1
//! }
//! ```
//!
//! Only `name`, `map` and `agents` are required; the duration defaults to
//! 60 s. Map rows are listed top first; `#` marks an occupied cell. Per-agent
//! `planner`, `cost` and `optimizer` blocks are merged field by field over
//! `defaults`, and `mode` is shorthand for `cost.mode`.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::path::Path;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cost::{CostMode, CostParams};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::kinematics::PlannerConfig;
use crate::optimizer::OptimizerConfig;
use crate::world::{DynamicObstacle, Motion, OccupancyGrid, Waypoint};

pub const DEFAULT_RADIUS: f64 = 0.35;
const BUILTIN_RESOLUTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub rows: Vec<String>,
    pub resolution: f64,
    #[serde(default)]
    pub origin: [f64; 2],
}

impl MapSpec {
    pub fn to_grid(&self) -> Result<OccupancyGrid> {
        OccupancyGrid::from_ascii(&self.rows, self.resolution, DVec2::from(self.origin))
    }

    /// Rasterises `occupied(x, y)` evaluated at cell centres.
    pub fn from_fn(
        min: DVec2,
        max: DVec2,
        resolution: f64,
        occupied: impl Fn(f64, f64) -> bool,
    ) -> Self {
        let w = ((max.x - min.x) / resolution).round() as usize + 1;
        let h = ((max.y - min.y) / resolution).round() as usize + 1;
        let rows = (0..h)
            .rev()
            .map(|j| {
                (0..w)
                    .map(|i| {
                        let (x, y) = (min.x + i as f64 * resolution, min.y + j as f64 * resolution);
                        if occupied(x, y) {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            rows,
            resolution,
            origin: min.to_array(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Defaults {
    pub planner: PlannerConfig,
    pub cost: CostParams,
    pub optimizer: OptimizerConfig,
}

/// A fully resolved agent: defaults are already merged in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub start: Pose,
    pub goal: Pose,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub cost: CostParams,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

fn default_duration() -> f64 {
    60.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub map: MapSpec,
    #[serde(default)]
    pub defaults: Defaults,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub scripted_obstacles: Vec<DynamicObstacle>,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Recursively overlays `over` onto `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

fn field_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    Error::Field {
        path,
        message: e.into_inner().to_string(),
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let Some(root) = doc.as_object_mut() else {
            return Err(Error::Field {
                path: ".".into(),
                message: "scenario must be a JSON object".into(),
            });
        };
        let defaults = root.get("defaults").cloned().unwrap_or(Value::Null);
        if let Some(Value::Array(agents)) = root.get_mut("agents") {
            for agent in agents.iter_mut() {
                let Some(obj) = agent.as_object_mut() else {
                    continue;
                };
                let mode = obj.remove("mode");
                for key in ["planner", "cost", "optimizer"] {
                    let mut merged = match defaults.get(key) {
                        Some(v) if v.is_object() => v.clone(),
                        _ => Value::Object(Default::default()),
                    };
                    if let Some(over) = obj.remove(key) {
                        merge(&mut merged, over);
                    }
                    obj.insert(key.to_string(), merged);
                }
                if let Some(mode) = mode {
                    obj["cost"]
                        .as_object_mut()
                        .map(|c| c.insert("mode".into(), normalise_mode(mode)));
                }
            }
        }
        let config: ScenarioConfig = serde_path_to_error::deserialize(doc).map_err(field_error)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario values are serialisable")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn agent(&self, id: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Validation(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return invalid("duration must be positive".into());
        }
        let grid = self.map.to_grid()?;
        let mut ids = HashSet::new();
        let step = self.agents.first().map(|a| a.planner.step);
        for a in &self.agents {
            let ctx = |e: Error| Error::Validation(format!("agent `{}`: {e}", a.id));
            if !ids.insert(a.id.as_str()) {
                return invalid(format!("duplicate agent id `{}`", a.id));
            }
            a.planner.validate().map_err(ctx)?;
            a.cost.validate().map_err(ctx)?;
            a.optimizer.validate().map_err(ctx)?;
            if Some(a.planner.step) != step {
                return invalid(format!(
                    "agent `{}`: all agents must share one planner step",
                    a.id
                ));
            }
            if !(a.radius > 0.0 && a.radius.is_finite()) {
                return invalid(format!("agent `{}`: radius must be positive", a.id));
            }
            for (what, pose) in [("start", &a.start), ("goal", &a.goal)] {
                if !pose.is_finite() {
                    return invalid(format!("agent `{}`: {what} is not finite", a.id));
                }
                let (lo, hi) = grid.bounds();
                let p = pose.position();
                if p.cmplt(lo).any() || p.cmpgt(hi).any() {
                    return invalid(format!("agent `{}`: {what} lies outside the map", a.id));
                }
                let clearance = grid.distance_at(p);
                if clearance < a.radius {
                    return invalid(format!(
                        "agent `{}`: {what} has clearance {clearance:.3} m, less than the radius {:.3} m",
                        a.id, a.radius
                    ));
                }
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                if a.start.position().distance(b.start.position()) < a.radius + b.radius {
                    return invalid(format!("agents `{}` and `{}` overlap at start", a.id, b.id));
                }
            }
        }
        for o in &self.scripted_obstacles {
            o.validate().map_err(|e| Error::Validation(e.to_string()))?;
            if !ids.insert(o.id.as_str()) {
                return invalid(format!("duplicate id `{}`", o.id));
            }
            if let Motion::Scripted { waypoints } = &o.motion {
                if waypoints.iter().any(|w| w.t < 0.0 || w.t > self.duration) {
                    return invalid(format!(
                        "obstacle `{}`: script times must lie within [0, duration]",
                        o.id
                    ));
                }
            }
        }
        Ok(())
    }
}

fn normalise_mode(mode: Value) -> Value {
    match mode.as_str().map(str::parse::<CostMode>) {
        Some(Ok(m)) => Value::String(m.as_str().into()),
        _ => mode,
    }
}

/// Parameters for a builtin, as `key -> value` strings.
pub type BuiltinParams = BTreeMap<String, String>;

pub struct BuiltinInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [&'static str],
}

pub const BUILTINS: &[BuiltinInfo] = &[
    BuiltinInfo {
        name: "t_corridor",
        description: "robot turns from a corridor stem into a T junction blocked by a parked robot",
        params: &["mode", "seed", "gap", "blocker_x"],
    },
    BuiltinInfo {
        name: "narrow_corridor",
        description: "two robots swap ends of a corridor",
        params: &["mode", "seed", "width", "length"],
    },
    BuiltinInfo {
        name: "circle",
        description: "n robots on a circle swap to antipodal positions",
        params: &["mode", "seed", "n", "radius"],
    },
    BuiltinInfo {
        name: "open_field",
        description: "single robot crossing an empty field",
        params: &["mode", "seed", "distance"],
    },
    BuiltinInfo {
        name: "pedestrian_hall",
        description: "robot crossing a hall while scripted pedestrians walk across",
        params: &["mode", "seed", "pedestrians"],
    },
];

struct Params<'a> {
    name: &'a str,
    values: &'a BuiltinParams,
}

impl Params<'_> {
    fn check(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Validation(format!(
                "builtin `{}` has no parameter `{k}`",
                self.name
            ))),
            None => Ok(()),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| {
                Error::Validation(format!(
                    "builtin `{}`: bad value `{s}` for `{key}`",
                    self.name
                ))
            }),
        }
    }
}

/// Builds a named builtin scenario.
pub fn builtin(name: &str, params: &BuiltinParams) -> Result<ScenarioConfig> {
    let info = BUILTINS
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::UnknownBuiltin(name.to_string()))?;
    let p = Params {
        name,
        values: params,
    };
    p.check(info.params)?;
    let mode: CostMode = match params.get("mode") {
        None => CostMode::DsMpepc,
        Some(s) => s.parse().map_err(Error::Validation)?,
    };
    let mut scenario = match name {
        "t_corridor" => t_corridor(p.get("gap", 1.15)?, p.get("blocker_x", 2.5)?),
        "narrow_corridor" => narrow_corridor(
            p.get("width", 6.0 * DEFAULT_RADIUS)?,
            p.get("length", 12.0)?,
        )?,
        "circle" => circle(p.get("n", 4)?, p.get("radius", 4.0)?)?,
        "open_field" => open_field(p.get("distance", 5.0)?),
        "pedestrian_hall" => pedestrian_hall(p.get("pedestrians", 3)?),
        _ => unreachable!("listed builtin"),
    };
    scenario.seed = p.get("seed", scenario.seed)?;
    scenario.defaults.cost = CostParams {
        mode,
        ..scenario.defaults.cost
    };
    for a in &mut scenario.agents {
        a.cost.mode = mode;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn agent(id: &str, start: Pose, goal: Pose, defaults: &Defaults) -> AgentSpec {
    AgentSpec {
        id: id.to_string(),
        start,
        goal,
        radius: DEFAULT_RADIUS,
        planner: defaults.planner,
        cost: defaults.cost,
        optimizer: defaults.optimizer,
    }
}

fn scenario(
    name: String,
    map: MapSpec,
    defaults: Defaults,
    agents: Vec<AgentSpec>,
    duration: f64,
) -> ScenarioConfig {
    ScenarioConfig {
        name,
        map,
        defaults,
        agents,
        scripted_obstacles: Vec::new(),
        duration,
        seed: 1,
    }
}

/// Stem `x in (-1, 1)` coming up from `y = -7` into a bar along `x`. The
/// goal is at the right end of the bar. A parked robot sits against the far
/// wall of the right branch, leaving a free passage `gap` meters wide next to
/// the near wall.
fn t_corridor(gap: f64, blocker_x: f64) -> ScenarioConfig {
    let (stem, half_len) = (1.0, 7.0);
    let blocker_y = gap + DEFAULT_RADIUS;
    let bar_hi = blocker_y + DEFAULT_RADIUS + 0.1;
    let map = MapSpec::from_fn(
        DVec2::new(-7.5, -7.5),
        DVec2::new(7.5, bar_hi + 0.6),
        BUILTIN_RESOLUTION,
        |x, y| {
            let in_stem = x.abs() < stem && y > -7.0 && y < bar_hi;
            let in_bar = x.abs() < half_len && y > 0.0 && y < bar_hi;
            !(in_stem || in_bar)
        },
    );
    let defaults = Defaults::default();
    let blocker = Pose::new(blocker_x, blocker_y, PI);
    let agents = vec![
        agent(
            "robot",
            Pose::new(0.0, -5.5, PI / 2.0),
            Pose::new(5.5, 0.5 * bar_hi, 0.0),
            &defaults,
        ),
        agent("parked", blocker, blocker, &defaults),
    ];
    scenario("t_corridor".into(), map, defaults, agents, 60.0)
}

fn narrow_corridor(width: f64, length: f64) -> Result<ScenarioConfig> {
    if !(width >= 2.0 * DEFAULT_RADIUS) {
        return Err(Error::InfeasibleGeometry(format!(
            "corridor width {width} m is narrower than the robot diameter {} m",
            2.0 * DEFAULT_RADIUS
        )));
    }
    let half = 0.5 * width;
    let half_len = 0.5 * length;
    let map = MapSpec::from_fn(
        DVec2::new(-half_len - 1.0, -half - 0.5),
        DVec2::new(half_len + 1.0, half + 0.5),
        BUILTIN_RESOLUTION,
        |x, y| y.abs() >= half || x.abs() >= half_len + 0.5,
    );
    let defaults = Defaults::default();
    let end = half_len - 1.0;
    let agents = vec![
        agent(
            "west",
            Pose::new(-end, 0.0, 0.0),
            Pose::new(end, 0.0, 0.0),
            &defaults,
        ),
        agent(
            "east",
            Pose::new(end, 0.0, PI),
            Pose::new(-end, 0.0, PI),
            &defaults,
        ),
    ];
    let scenario = scenario(
        format!("narrow_corridor_w{width}"),
        map,
        defaults,
        agents,
        60.0,
    );
    // Walls snap to cell centres, so a corridor barely wider than the robot
    // can still be too tight once rasterised.
    let clearance = scenario.map.to_grid()?.distance_at(DVec2::new(-end, 0.0));
    if clearance < DEFAULT_RADIUS {
        return Err(Error::InfeasibleGeometry(format!(
            "corridor width {width} m rasterises to {:.2} m, narrower than the robot diameter {} m",
            2.0 * clearance,
            2.0 * DEFAULT_RADIUS
        )));
    }
    Ok(scenario)
}

fn open_map(half: f64) -> MapSpec {
    MapSpec::from_fn(
        DVec2::splat(-half),
        DVec2::splat(half),
        BUILTIN_RESOLUTION,
        |_, _| false,
    )
}

fn circle(n: usize, radius: f64) -> Result<ScenarioConfig> {
    if n == 0 {
        return Err(Error::Validation("circle needs at least one robot".into()));
    }
    let defaults = Defaults::default();
    let agents = (0..n)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n as f64;
            let start = radius * DVec2::from_angle(phi);
            let heading = phi + PI;
            agent(
                &format!("r{k}"),
                Pose::from_position(start, heading),
                Pose::from_position(-start, heading),
                &defaults,
            )
        })
        .collect();
    let map = open_map(radius + 3.0);
    Ok(scenario(format!("circle_{n}"), map, defaults, agents, 60.0))
}

fn open_field(distance: f64) -> ScenarioConfig {
    let defaults = Defaults::default();
    let half = 0.5 * distance;
    let agents = vec![agent(
        "robot",
        Pose::new(-half, 0.0, 0.0),
        Pose::new(half, 0.0, 0.0),
        &defaults,
    )];
    scenario("open_field".into(), open_map(10.0), defaults, agents, 40.0)
}

/// Hall with walls and pedestrians crossing the robot's path at walking pace.
fn pedestrian_hall(pedestrians: usize) -> ScenarioConfig {
    let map = MapSpec::from_fn(
        DVec2::new(-8.0, -5.0),
        DVec2::new(8.0, 5.0),
        BUILTIN_RESOLUTION,
        |x, y| x.abs() >= 7.5 || y.abs() >= 4.5,
    );
    let defaults = Defaults::default();
    let agents = vec![agent(
        "robot",
        Pose::new(-6.0, 0.0, 0.0),
        Pose::new(6.0, 0.0, 0.0),
        &defaults,
    )];
    let mut s = scenario("pedestrian_hall".into(), map, defaults, agents, 60.0);
    s.scripted_obstacles = (0..pedestrians)
        .map(|k| {
            let x = -3.0 + 3.0 * k as f64;
            let (from, to) = if k % 2 == 0 { (-3.8, 3.8) } else { (3.8, -3.8) };
            let t0 = 1.0 + 2.0 * k as f64;
            DynamicObstacle {
                id: format!("ped{k}"),
                radius: 0.3,
                motion: Motion::Scripted {
                    waypoints: vec![
                        Waypoint {
                            t: t0,
                            position: DVec2::new(x, from),
                        },
                        Waypoint {
                            t: t0 + 7.6 / 1.2,
                            position: DVec2::new(x, to),
                        },
                    ],
                },
            }
        })
        .collect();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for b in BUILTINS {
            let s = builtin(b.name, &BuiltinParams::new()).unwrap();
            assert!(!s.agents.is_empty(), "{}", b.name);
        }
    }

    #[test]
    fn circle_goals_are_antipodal() {
        let s = builtin("circle", &[("n".to_string(), "4".to_string())].into()).unwrap();
        for k in 0..4 {
            let goal = s.agents[k].goal.position();
            let other = s.agents[(k + 2) % 4].start.position();
            assert!(goal.distance(other) < 1e-9);
        }
    }

    #[test]
    fn too_narrow_corridor_is_infeasible() {
        let params = [("width".to_string(), "0.69".to_string())].into();
        assert!(matches!(
            builtin("narrow_corridor", &params),
            Err(Error::InfeasibleGeometry(_))
        ));
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(
            builtin("maze", &BuiltinParams::new()),
            Err(Error::UnknownBuiltin(_))
        ));
    }

    fn minimal(start: &str) -> String {
        let rows = vec![".".repeat(20); 20];
        format!(
            r#"{{"name": "m", "map": {{"rows": {rows:?}, "resolution": 0.5}},
                "agents": [{{"id": "solo", "start": {start},
                            "goal": {{"x": 8.0, "y": 8.0, "heading": 0.0}}}}]}}"#
        )
    }

    #[test]
    fn minimal_document_takes_defaults() {
        let s =
            ScenarioConfig::from_json(&minimal(r#"{"x": 1.0, "y": 1.0, "heading": 0.0}"#)).unwrap();
        assert_eq!(s.duration, 60.0);
        assert_eq!(s.seed, 0);
        let a = &s.agents[0];
        assert_eq!(a.radius, DEFAULT_RADIUS);
        assert_eq!(a.cost, CostParams::default());
        assert_eq!(a.planner, PlannerConfig::default());
        assert_eq!(a.optimizer, OptimizerConfig::default());
    }

    #[test]
    fn load_diagnostics() {
        let mut doc = minimal(r#"{"x": 1.0, "y": 1.0, "heading": 0.0}"#);
        doc = doc.replacen("....................", "..#.................", 1);
        // The first row is the top of the map: cell (2, 19) sits at (1.0, 9.5).
        let walled = doc.replace(r#""x": 1.0, "y": 1.0"#, r#""x": 1.0, "y": 9.5"#);
        let err = ScenarioConfig::from_json(&walled).unwrap_err().to_string();
        assert!(err.contains("solo"), "{err}");

        let err = ScenarioConfig::from_json(&doc.replace("0.5}", "\"half\"}"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("map.resolution"), "{err}");
        assert!(matches!(
            ScenarioConfig::from_json("{\n  \"name\": }"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
