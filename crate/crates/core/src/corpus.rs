//! Synthetic scenario corpus.

use crate::scenario::Scenario;
use serde_json::{json, Value};
use std::f64::consts::FRAC_PI_2;

/// Dense polyline of a circular arc from `a0` to `a1` (radians) around `(cx, cy)`.
fn arc(cx: f64, cy: f64, r: f64, a0: f64, a1: f64) -> Vec<[f64; 2]> {
    let n = ((a1 - a0).abs() * r / 0.25).ceil().max(2.0) as usize;
    (0..=n)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect()
}

/// Side road heading north that turns right onto an eastbound road along
/// y = 0, joining it at `x_join`.
fn right_turn_route(x_join: f64, radius: f64) -> Vec<[f64; 2]> {
    let mut pts = vec![[x_join - radius, -250.0]];
    pts.extend(arc(x_join, -radius, radius, std::f64::consts::PI, FRAC_PI_2));
    pts.push([500.0, 0.0]);
    pts
}

fn right_turn_length_to_join(radius: f64) -> f64 {
    250.0 - radius + FRAC_PI_2 * radius
}

fn car(id: u32) -> Value {
    json!({"id": id, "shape": {"l": 4.5, "w": 1.8}})
}

fn reactive(id: u32, route: Vec<[f64; 2]>, speed: f64, start_s: f64, a_lo: f64) -> Value {
    let mut v = car(id);
    v["behavior"] = json!("reactive");
    v["reactive"] = json!({"a_lo": a_lo, "a_hi": 2.0, "speed": speed, "start_s": start_s});
    v["route"] = json!(route);
    v
}

fn scripted(id: u32, poses: Vec<[f64; 4]>) -> Value {
    let mut v = car(id);
    v["behavior"] = json!("scripted");
    v["trajectory"] = json!(poses);
    v
}

/// Straight constant-speed script from `(x, y)` along `heading`.
fn straight_script(x: f64, y: f64, heading: f64, speed: f64, duration: f64) -> Vec<[f64; 4]> {
    let (s, c) = heading.sin_cos();
    let d = speed * duration;
    vec![[0.0, x, y, heading], [duration, x + d * c, y + d * s, heading]]
}

/// Junction where a side-road agent turns into the AV's lane ahead of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingParams {
    pub av_speed: f64,
    pub speed_limit: f64,
    pub agent_speed: f64,
    /// Seconds between the AV reaching the junction at constant speed and the agent reaching it.
    pub agent_delay: f64,
    pub agent_a_lo: f64,
    pub x_join: f64,
    pub turn_radius: f64,
    pub duration: f64,
}

impl Default for CrossingParams {
    fn default() -> Self {
        Self {
            av_speed: 8.0,
            speed_limit: 8.0,
            agent_speed: 12.0,
            agent_delay: 1.4,
            agent_a_lo: -5.0,
            x_join: 60.0,
            turn_radius: 8.0,
            duration: 15.0,
        }
    }
}

pub fn crossing(name: &str, p: &CrossingParams) -> Value {
    let arrival = p.x_join / p.av_speed + p.agent_delay;
    let start_s = right_turn_length_to_join(p.turn_radius) - p.agent_speed * arrival;
    let route = right_turn_route(p.x_join, p.turn_radius);
    json!({
        "name": name,
        "route": [[-20.0, 0.0], [500.0, 0.0]],
        "av": {"x": 0.0, "y": 0.0, "heading": 0.0, "v": p.av_speed, "a": 0.0},
        "task_length": 150.0,
        "speed_limit": p.speed_limit,
        "agents": [reactive(1, route, p.agent_speed, start_s, p.agent_a_lo)],
        "duration": p.duration,
        "dt": 0.1
    })
}

/// Variations of [`crossing`] for batch experiments.
pub fn crossing_suite() -> Vec<(String, Value)> {
    let base = CrossingParams::default();
    // (agent delay s, agent speed, AV speed and limit)
    let variants = [
        (1.4, 12.0, 8.0),
        (1.3, 12.0, 8.0),
        (1.5, 12.0, 8.0),
        (1.6, 12.0, 8.0),
        (1.4, 11.5, 8.0),
        (1.4, 12.5, 8.0),
        (1.5, 12.5, 8.0),
        (1.2, 11.0, 8.0),
        (1.8, 12.0, 8.0),
        (1.4, 13.0, 8.5),
    ];
    variants
        .iter()
        .enumerate()
        .map(|(i, &(delay, v, av_v))| {
            let name = format!("crossing_{:02}", i + 1);
            let p = CrossingParams {
                agent_delay: delay,
                agent_speed: v,
                av_speed: av_v,
                speed_limit: av_v,
                ..base
            };
            (name.clone(), crossing(&name, &p))
        })
        .collect()
}

pub fn minimal() -> Value {
    json!({
        "name": "minimal",
        "route": [[0.0, 0.0], [300.0, 0.0]],
        "av": {"x": 0.0, "y": 0.0, "heading": 0.0, "v": 10.0},
        "task_length": 100.0,
        "agents": [],
        "duration": 15.0
    })
}

/// Slower lead vehicle in the AV's lane.
pub fn follow() -> Value {
    json!({
        "name": "follow",
        "route": [[0.0, 0.0], [400.0, 0.0]],
        "av": {"x": 0.0, "y": 0.0, "heading": 0.0, "v": 10.0},
        "task_length": 150.0,
        "agents": [scripted(1, straight_script(30.0, 0.0, 0.0, 6.0, 40.0))],
        "duration": 20.0
    })
}

/// Oncoming traffic in the opposite lane and a pedestrian-speed crosser.
pub fn oncoming() -> Value {
    json!({
        "name": "oncoming",
        "route": [[0.0, 0.0], [400.0, 0.0]],
        "av": {"x": 0.0, "y": 0.0, "heading": 0.0, "v": 12.0},
        "task_length": 150.0,
        "agents": [
            scripted(1, straight_script(120.0, 3.5, std::f64::consts::PI, 10.0, 30.0)),
            scripted(2, straight_script(60.0, -12.0, FRAC_PI_2, 1.5, 30.0))
        ],
        "duration": 20.0
    })
}

/// AV starts off the route and merges onto it along a quintic.
pub fn lateral_offset() -> Value {
    json!({
        "name": "lateral_offset",
        "route": [[0.0, 0.0], [400.0, 0.0]],
        "av": {"x": 0.0, "y": 2.5, "heading": 0.0, "v": 8.0},
        "task_length": 120.0,
        "agents": [],
        "duration": 20.0
    })
}

/// Fast agent approaching from behind in the AV's lane.
pub fn rear_approach() -> Value {
    json!({
        "name": "rear_approach",
        "route": [[0.0, 0.0], [400.0, 0.0]],
        "av": {"x": 0.0, "y": 0.0, "heading": 0.0, "v": 6.0},
        "task_length": 120.0,
        "agents": [scripted(1, straight_script(-25.0, 0.0, 0.0, 12.0, 30.0))],
        "duration": 15.0
    })
}

/// Right turn with a scripted main-road agent and a reactive one.
pub fn turn_two_agents() -> Value {
    let mut v = crossing("turn_two_agents", &CrossingParams::default());
    v["agents"]
        .as_array_mut()
        .expect("agents array")
        .push(scripted(2, straight_script(80.0, 3.5, std::f64::consts::PI, 9.0, 30.0)));
    v
}

/// Every bundled scenario as `(relative file path, scenario json)`.
pub fn bundled() -> Vec<(String, Value)> {
    let mut out = vec![
        ("minimal.json".to_string(), minimal()),
        ("crossing.json".to_string(), crossing("crossing", &CrossingParams::default())),
        ("follow.json".to_string(), follow()),
        ("oncoming.json".to_string(), oncoming()),
        ("lateral_offset.json".to_string(), lateral_offset()),
        ("rear_approach.json".to_string(), rear_approach()),
        ("turn_two_agents.json".to_string(), turn_two_agents()),
    ];
    for (name, v) in crossing_suite() {
        out.push((format!("crossing_suite/{name}.json"), v));
    }
    out
}

/// Pretty JSON text for a corpus entry, with a trailing newline.
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn parse(v: &Value) -> Scenario {
    Scenario::from_json_str(&v.to_string()).expect("generated scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_is_valid() {
        let all = bundled();
        assert!(all.len() >= 17);
        for (path, v) in &all {
            let s = parse(v);
            assert!(s.route.length() > s.task_length, "{path}");
        }
    }

    #[test]
    fn crossing_route_is_smooth() {
        let s = parse(&crossing("c", &CrossingParams::default()));
        let r = s.agents[0].route.as_ref().unwrap();
        let max_k = (0..600).map(|i| r.curvature_at(i as f64 * 0.5).abs()).fold(0.0, f64::max);
        assert!((max_k - 1.0 / CrossingParams::default().turn_radius).abs() < 0.01, "{max_k}");
    }
}
