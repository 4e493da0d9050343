//! Scenario files: reference route, AV start, agents and simulation timing.
//!
//! ```json
//! {
//!   "name": "crossing",                      // optional
//!   "route": [[x, y], ...],                  // meters
//!   "av": {"x": 0, "y": 0, "heading": 0, "v": 5, "a": 0},
//!   "task_length": 150,                      // meters of route progress
//!   "speed_limit": 13.9,                     // optional, m/s
//!   "agents": [
//!     {"id": 1, "shape": {"l": 4.5, "w": 1.8}, "behavior": "scripted",
//!      "trajectory": [[t, x, y, heading], ...], "route": [[x, y], ...]},
//!     {"id": 2, "shape": {"l": 4.5, "w": 1.8}, "behavior": "reactive",
//!      "reactive": {"a_lo": -5, "a_hi": 2, "speed": 10, "start_s": 0, "v0": 4},  // v0 optional
//!      "route": [[x, y], ...]}
//!   ],
//!   "duration": 80,                          // seconds
//!   "dt": 0.1                                // seconds
//! }
//! ```
//! Routes are resampled on load so consecutive vertices are at most 0.5 m apart.

use crate::frenet::Route;
use crate::types::{PoseState, Shape};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const ROUTE_RESAMPLE_STEP: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Field path named by a parse or validation error.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Parse { field, .. } | Self::Invalid { field, .. } => Some(field),
            Self::Io { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvInit {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    #[serde(default)]
    pub a: f64,
}

impl AvInit {
    pub fn pose(&self) -> PoseState {
        PoseState::new(self.x, self.y, self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    Scripted,
    Reactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactiveParams {
    pub a_lo: f64,
    pub a_hi: f64,
    /// Cruise speed the agent returns to when its corridor is clear.
    pub speed: f64,
    /// Starting arc length along the agent's route.
    #[serde(default)]
    pub start_s: f64,
    /// Initial speed; defaults to `speed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
}

/// One timed pose of a scripted trajectory, stored as `[t, x, y, heading]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: PoseState,
}

#[derive(Debug, Clone)]
pub enum Behavior {
    Scripted(Vec<TimedPose>),
    Reactive(ReactiveParams),
}

#[derive(Debug, Clone)]
pub struct AgentDescriptor {
    pub id: u32,
    pub shape: Shape,
    pub behavior: Behavior,
    pub route_points: Option<Vec<[f64; 2]>>,
    pub route: Option<Route>,
}

impl AgentDescriptor {
    pub fn kind(&self) -> BehaviorKind {
        match self.behavior {
            Behavior::Scripted(_) => BehaviorKind::Scripted,
            Behavior::Reactive(_) => BehaviorKind::Reactive,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: Option<String>,
    pub route_points: Vec<[f64; 2]>,
    pub route: Route,
    pub av: AvInit,
    pub task_length: f64,
    pub speed_limit: Option<f64>,
    pub agents: Vec<AgentDescriptor>,
    pub duration: f64,
    pub dt: f64,
}

fn default_duration() -> f64 {
    80.0
}

fn default_dt() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: u32,
    shape: Shape,
    behavior: BehaviorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trajectory: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reactive: Option<ReactiveParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    route: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    route: Vec<[f64; 2]>,
    av: AvInit,
    task_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_limit: Option<f64>,
    #[serde(default)]
    agents: Vec<AgentFile>,
    #[serde(default = "default_duration")]
    duration: f64,
    #[serde(default = "default_dt")]
    dt: f64,
}

fn check_points(field: &str, pts: &[[f64; 2]]) -> Result<Route, ScenarioError> {
    if let Some(i) = pts.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(ScenarioError::invalid(format!("{field}[{i}]"), "coordinates must be finite"));
    }
    Route::new(pts, ROUTE_RESAMPLE_STEP)
        .map_err(|_| ScenarioError::invalid(field, "needs at least two distinct points"))
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, format!("must be positive, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, "must be finite"))
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let route = check_points("route", &self.route)?;
        for (f, v) in [("av.x", self.av.x), ("av.y", self.av.y), ("av.heading", self.av.heading), ("av.a", self.av.a)] {
            finite(f, v)?;
        }
        if !(self.av.v.is_finite() && self.av.v >= 0.0) {
            return Err(ScenarioError::invalid("av.v", "must be finite and non-negative"));
        }
        positive("task_length", self.task_length)?;
        positive("duration", self.duration)?;
        positive("dt", self.dt)?;
        if let Some(v) = self.speed_limit {
            positive("speed_limit", v)?;
        }
        let mut agents = Vec::with_capacity(self.agents.len());
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.agents.into_iter().enumerate() {
            let p = format!("agents[{i}]");
            if !seen.insert(a.id) {
                return Err(ScenarioError::invalid(format!("{p}.id"), format!("duplicate id {}", a.id)));
            }
            positive(&format!("{p}.shape.length"), a.shape.length)?;
            positive(&format!("{p}.shape.width"), a.shape.width)?;
            let route = match &a.route {
                Some(pts) => Some(check_points(&format!("{p}.route"), pts)?),
                None => None,
            };
            let behavior = match a.behavior {
                BehaviorKind::Scripted => {
                    let traj = a.trajectory.as_ref().ok_or_else(|| {
                        ScenarioError::invalid(format!("{p}.trajectory"), "required for scripted agents")
                    })?;
                    if traj.is_empty() {
                        return Err(ScenarioError::invalid(format!("{p}.trajectory"), "must not be empty"));
                    }
                    let mut out = Vec::with_capacity(traj.len());
                    for (k, row) in traj.iter().enumerate() {
                        if row.iter().any(|v| !v.is_finite()) {
                            return Err(ScenarioError::invalid(format!("{p}.trajectory[{k}]"), "must be finite"));
                        }
                        if k > 0 && row[0] <= traj[k - 1][0] {
                            return Err(ScenarioError::invalid(
                                format!("{p}.trajectory[{k}]"),
                                "timestamps must be strictly increasing",
                            ));
                        }
                        out.push(TimedPose {
                            t: row[0],
                            pose: PoseState::new(row[1], row[2], row[3]),
                        });
                    }
                    Behavior::Scripted(out)
                }
                BehaviorKind::Reactive => {
                    let r = a.reactive.ok_or_else(|| {
                        ScenarioError::invalid(format!("{p}.reactive"), "required for reactive agents")
                    })?;
                    if !(r.a_lo < 0.0 && r.a_hi >= 0.0 && r.a_hi.is_finite() && r.a_lo.is_finite()) {
                        return Err(ScenarioError::invalid(
                            format!("{p}.reactive"),
                            "bounds must satisfy a_lo < 0 <= a_hi",
                        ));
                    }
                    if !(r.speed.is_finite() && r.speed >= 0.0) {
                        return Err(ScenarioError::invalid(format!("{p}.reactive.speed"), "must be non-negative"));
                    }
                    if r.v0.is_some_and(|v| !(v.is_finite() && v >= 0.0)) {
                        return Err(ScenarioError::invalid(format!("{p}.reactive.v0"), "must be non-negative"));
                    }
                    finite(&format!("{p}.reactive.start_s"), r.start_s)?;
                    if route.is_none() {
                        return Err(ScenarioError::invalid(format!("{p}.route"), "required for reactive agents"));
                    }
                    Behavior::Reactive(r)
                }
            };
            agents.push(AgentDescriptor {
                id: a.id,
                shape: a.shape,
                behavior,
                route_points: a.route,
                route,
            });
        }
        Ok(Scenario {
            name: self.name,
            route_points: self.route,
            route,
            av: self.av,
            task_length: self.task_length,
            speed_limit: self.speed_limit,
            agents,
            duration: self.duration,
            dt: self.dt,
        })
    }
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError::Parse {
                field,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        file.into_scenario()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            name: self.name.clone(),
            route: self.route_points.clone(),
            av: self.av,
            task_length: self.task_length,
            speed_limit: self.speed_limit,
            agents: self
                .agents
                .iter()
                .map(|a| {
                    let (trajectory, reactive) = match &a.behavior {
                        Behavior::Scripted(tr) => (
                            Some(tr.iter().map(|p| [p.t, p.pose.x, p.pose.y, p.pose.heading]).collect()),
                            None,
                        ),
                        Behavior::Reactive(r) => (None, Some(*r)),
                    };
                    AgentFile {
                        id: a.id,
                        shape: a.shape,
                        behavior: a.kind(),
                        trajectory,
                        reactive,
                        route: a.route_points.clone(),
                    }
                })
                .collect(),
            duration: self.duration,
            dt: self.dt,
        }
    }

    /// Canonical pretty-printed JSON form.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    /// Number of simulation steps.
    pub fn step_count(&self) -> usize {
        (self.duration / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn display_name(&self, fallback: &str) -> String {
        self.name.clone().unwrap_or_else(|| fallback.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"route": [[0,0],[200,0]], "av": {"x":0,"y":0,"heading":0,"v":5}, "task_length": 150}"#
    }

    #[test]
    fn minimal_scenario_has_no_agents() {
        let s = Scenario::from_json_str(minimal()).unwrap();
        assert!(s.agents.is_empty());
        assert_eq!(s.duration, 80.0);
        assert_eq!(s.dt, 0.1);
        assert_eq!(s.step_count(), 800);
        assert!((s.route.length() - 200.0).abs() < 1e-9);
        assert_eq!(s.route.len(), 401);
    }

    #[test]
    fn negative_width_names_field() {
        let text = r#"{"route": [[0,0],[200,0]], "av": {"x":0,"y":0,"heading":0,"v":5}, "task_length": 150,
            "agents": [{"id": 1, "shape": {"l": 4, "w": -1}, "behavior": "scripted", "trajectory": [[0, 10, 0, 0]]}]}"#;
        let err = Scenario::from_json_str(text).unwrap_err();
        assert!(err.field().unwrap().ends_with("shape.width"), "{err}");
    }

    #[test]
    fn parse_error_reports_position() {
        let text = "{\"route\": [[0,0],[200,0]],\n \"av\": {\"x\":0,\"y\":0,\"heading\":\"north\",\"v\":5}, \"task_length\": 1}";
        match Scenario::from_json_str(text).unwrap_err() {
            ScenarioError::Parse { field, line, .. } => {
                assert_eq!(field, "av.heading");
                assert_eq!(line, 2);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_increasing_times_rejected() {
        let text = r#"{"route": [[0,0],[200,0]], "av": {"x":0,"y":0,"heading":0,"v":5}, "task_length": 150,
            "agents": [{"id": 1, "shape": {"l": 4, "w": 2}, "behavior": "scripted", "trajectory": [[0, 10, 0, 0], [0, 11, 0, 0]]}]}"#;
        let err = Scenario::from_json_str(text).unwrap_err();
        assert_eq!(err.field(), Some("agents[0].trajectory[1]"));
    }

    #[test]
    fn reactive_needs_route_and_ordered_bounds() {
        let base = |reactive: &str, route: &str| {
            format!(
                r#"{{"route": [[0,0],[200,0]], "av": {{"x":0,"y":0,"heading":0,"v":5}}, "task_length": 150,
                "agents": [{{"id": 1, "shape": {{"l": 4, "w": 2}}, "behavior": "reactive", "reactive": {reactive} {route}}}]}}"#
            )
        };
        let good = r#"{"a_lo": -3, "a_hi": 1, "speed": 8}"#;
        assert!(Scenario::from_json_str(&base(good, r#", "route": [[0,5],[100,5]]"#)).is_ok());
        assert_eq!(
            Scenario::from_json_str(&base(good, "")).unwrap_err().field(),
            Some("agents[0].route")
        );
        let bad = r#"{"a_lo": 1, "a_hi": 2, "speed": 8}"#;
        assert_eq!(
            Scenario::from_json_str(&base(bad, r#", "route": [[0,5],[100,5]]"#)).unwrap_err().field(),
            Some("agents[0].reactive")
        );
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{"name": "x", "route": [[0,0],[50,0],[80,30]], "av": {"x":1,"y":0.5,"heading":0.1,"v":5,"a":0.2},
            "task_length": 90, "speed_limit": 12,
            "agents": [{"id": 3, "shape": {"l": 4.5, "w": 1.8}, "behavior": "scripted", "trajectory": [[0, 10, 3, 3.0], [1, 8, 3, 3.0]]},
                       {"id": 4, "shape": {"l": 4.5, "w": 1.8}, "behavior": "reactive",
                        "reactive": {"a_lo": -5, "a_hi": 2, "speed": 9, "start_s": 4}, "route": [[0,-20],[0,20]]}],
            "duration": 20, "dt": 0.1}"#;
        let a = Scenario::from_json_str(text).unwrap();
        let once = a.to_json_string();
        let b = Scenario::from_json_str(&once).unwrap();
        assert_eq!(once, b.to_json_string());
        assert_eq!(a.route, b.route);
        assert_eq!(b.agents.len(), 2);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = r#"{"route": [[0,0],[200,0]], "av": {"x":0,"y":0,"heading":0,"v":5}, "task_length": 150, "lanes": 2}"#;
        assert!(matches!(Scenario::from_json_str(text), Err(ScenarioError::Parse { .. })));
    }
}
