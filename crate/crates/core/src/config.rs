//! Planner configuration.
//!
//! Serialized keys follow the conventional symbol names (`c_T`, `c_t`, `w_v`, ...)
//! so config files and `--set key=value` overrides read like the parameter
//! tables they are usually copied from.

use crate::types::Shape;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config value `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
}

/// Bucket sizes of the (s, t, v) pruning grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneGrid {
    pub ds: f64,
    pub dt: f64,
    pub dv: f64,
}

/// Parameters of the forward sampling-distance heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistance {
    pub tau: f64,
    pub ds_min: f64,
    pub ds_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Planning time horizon [s].
    #[serde(rename = "c_T")]
    pub horizon: f64,
    /// Speed below which a node becomes a leaf [m/s].
    #[serde(rename = "c_v")]
    pub min_speed: f64,
    /// Distance horizon [m].
    #[serde(rename = "c_s")]
    pub distance_horizon: f64,
    /// Safety time gap around predicted occupancy [s].
    #[serde(rename = "c_t")]
    pub safety_gap: f64,
    /// Single-linkage gap for grouping overlaps into one zone [m].
    #[serde(rename = "c_z1")]
    pub zone_gap: f64,
    /// Maximum span of an inverse (oncoming) zone [m].
    #[serde(rename = "c_z2")]
    pub inverse_zone_span: f64,
    pub w_v: f64,
    pub w_a: f64,
    pub w_j: f64,
    pub a_bounds: [f64; 2],
    pub jerk_bounds: [f64; 2],
    pub a_lat_max: f64,
    pub v_limit: f64,
    /// Agent response deceleration assumed while judging influence.
    pub a_i_judge: f64,
    /// Agent response deceleration assumed while checking an established influence.
    pub a_i_check: f64,
    pub c_f1: f64,
    pub c_f2: f64,
    /// Rear sub-rectangle of the AV used by the initial relation pass.
    pub rear_shape: Shape,
    pub prune_grid: PruneGrid,

    /// Number of evenly spaced accelerations per expansion.
    pub control_count: usize,
    pub sampling: SamplingDistance,
    /// Arc-length spacing of path samples [m].
    pub path_step: f64,
    pub s_f_candidates: Vec<f64>,
    pub w_len: f64,
    pub w_smooth: f64,
    /// Merge paths whose curvature exceeds this are rejected [1/m].
    pub curvature_cap: f64,
    pub av_shape: Shape,
    /// Distance from the rear axle forward to the footprint center [m].
    pub rear_axle_offset: f64,
    /// Path length kept behind the AV for rear overlaps [m].
    pub path_back: f64,
    pub pred_horizon: f64,
    pub pred_interval: f64,
    /// Mode accelerations; the first entry is treated as the most probable mode.
    pub accel_set: Vec<f64>,
    pub ls_short_horizon: f64,
    pub conti_trunk_horizon: f64,
    pub conti_infeasible_penalty: f64,
    pub conti_max_trunk_leaves: usize,
    pub fallback_decel: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 6.0,
            min_speed: 0.1,
            distance_horizon: 100.0,
            safety_gap: 0.5,
            zone_gap: 5.0,
            inverse_zone_span: 5.0,
            w_v: 5.0,
            w_a: 0.5,
            w_j: 0.8,
            a_bounds: [-4.0, 3.0],
            jerk_bounds: [-8.0, 8.0],
            a_lat_max: 3.43,
            v_limit: 13.9,
            a_i_judge: -0.01,
            a_i_check: -15.0,
            c_f1: 1.0,
            c_f2: 3.0,
            rear_shape: Shape::new(2.4, 1.0),
            prune_grid: PruneGrid {
                ds: 1.0,
                dt: 0.25,
                dv: 0.5,
            },
            control_count: 7,
            sampling: SamplingDistance {
                tau: 1.0,
                ds_min: 2.0,
                ds_max: 12.0,
            },
            path_step: 0.5,
            s_f_candidates: vec![10.0, 20.0, 30.0, 40.0, 50.0],
            w_len: 0.1,
            w_smooth: 10.0,
            curvature_cap: 0.5,
            av_shape: Shape::new(4.8, 2.0),
            rear_axle_offset: 1.4,
            path_back: 10.0,
            pred_horizon: 6.0,
            pred_interval: 0.5,
            accel_set: vec![0.0, -1.0, 1.0],
            ls_short_horizon: 2.0,
            conti_trunk_horizon: 3.0,
            conti_infeasible_penalty: 1e4,
            conti_max_trunk_leaves: 16,
            fallback_decel: -4.0,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl PlannerConfig {
    pub fn a_min(&self) -> f64 {
        self.a_bounds[0]
    }

    pub fn a_max(&self) -> f64 {
        self.a_bounds[1]
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PlannerConfig =
            serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
                field: e.path().to_string(),
                line: e.inner().line(),
                column: e.inner().column(),
                message: e.inner().to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies a `key=value` override. Dotted keys reach nested fields
    /// (`prune_grid.ds=0.5`); values are parsed as JSON.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let parsed: serde_json::Value = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        {
            let mut slot = &mut tree;
            for part in key.split('.') {
                slot = slot
                    .get_mut(part)
                    .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
            }
            *slot = parsed;
        }
        let updated: PlannerConfig =
            serde_path_to_error::deserialize(tree).map_err(|e| ConfigError::Parse {
                field: key.to_string(),
                line: 0,
                column: 0,
                message: e.inner().to_string(),
            })?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("c_T", self.horizon),
            ("c_s", self.distance_horizon),
            ("c_t", self.safety_gap),
            ("c_z1", self.zone_gap),
            ("c_z2", self.inverse_zone_span),
            ("a_lat_max", self.a_lat_max),
            ("v_limit", self.v_limit),
            ("path_step", self.path_step),
            ("pred_horizon", self.pred_horizon),
            ("pred_interval", self.pred_interval),
            ("curvature_cap", self.curvature_cap),
            ("prune_grid.ds", self.prune_grid.ds),
            ("prune_grid.dt", self.prune_grid.dt),
            ("prune_grid.dv", self.prune_grid.dv),
            ("sampling.tau", self.sampling.tau),
            ("sampling.ds_min", self.sampling.ds_min),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {value}")));
            }
        }
        if self.min_speed < 0.0 {
            return Err(invalid("c_v", "must be non-negative"));
        }
        if !(self.a_bounds[0] < 0.0 && 0.0 < self.a_bounds[1]) {
            return Err(invalid("a_bounds", "need a_min < 0 < a_max"));
        }
        if !(self.jerk_bounds[0] < 0.0 && 0.0 < self.jerk_bounds[1]) {
            return Err(invalid("jerk_bounds", "need j_min < 0 < j_max"));
        }
        for (field, w) in [("w_v", self.w_v), ("w_a", self.w_a), ("w_j", self.w_j)] {
            if w < 0.0 {
                return Err(invalid(field, "weights must be non-negative"));
            }
        }
        if self.a_i_judge < self.a_i_check {
            return Err(invalid(
                "a_i_judge",
                "judging deceleration must not be looser than the checking one",
            ));
        }
        if self.sampling.ds_max < self.sampling.ds_min {
            return Err(invalid("sampling.ds_max", "must be >= sampling.ds_min"));
        }
        if self.control_count < 2 {
            return Err(invalid("control_count", "need at least two controls"));
        }
        if self.s_f_candidates.is_empty() || self.s_f_candidates.iter().any(|&s| s <= 0.0) {
            return Err(invalid("s_f_candidates", "need a non-empty list of positive lengths"));
        }
        if self.accel_set.is_empty() {
            return Err(invalid("accel_set", "must not be empty"));
        }
        for (field, shape) in [("av_shape", self.av_shape), ("rear_shape", self.rear_shape)] {
            if !(shape.length > 0.0 && shape.width > 0.0) {
                return Err(invalid(field, "length and width must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_parameter_values() {
        let c = PlannerConfig::default();
        assert_eq!(c.horizon, 6.0);
        assert_eq!(c.min_speed, 0.1);
        assert_eq!(c.distance_horizon, 100.0);
        assert_eq!(c.safety_gap, 0.5);
        assert_eq!(c.zone_gap, 5.0);
        assert_eq!(c.inverse_zone_span, 5.0);
        assert_eq!((c.w_v, c.w_a, c.w_j), (5.0, 0.5, 0.8));
        assert_eq!(c.a_bounds, [-4.0, 3.0]);
        assert_eq!(c.jerk_bounds, [-8.0, 8.0]);
        assert_eq!(c.a_lat_max, 3.43);
        assert_eq!((c.a_i_judge, c.c_f1, c.c_f2, c.a_i_check), (-0.01, 1.0, 3.0, -15.0));
        c.validate().unwrap();
    }

    #[test]
    fn keys_use_symbol_names() {
        let v = serde_json::to_value(PlannerConfig::default()).unwrap();
        for key in ["c_T", "c_v", "c_s", "c_t", "c_z1", "c_z2", "a_i_judge", "a_i_check"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = PlannerConfig::from_json_str(r#"{"c_f1": 6.0, "prune_grid": {"ds": 2.0, "dt": 0.5, "dv": 1.0}}"#)
            .unwrap();
        assert_eq!(c.c_f1, 6.0);
        assert_eq!(c.prune_grid.ds, 2.0);
        assert_eq!(c.horizon, 6.0);
    }

    #[test]
    fn parse_error_names_field() {
        let err = PlannerConfig::from_json_str("{\n  \"w_v\": \"fast\"\n}").unwrap_err();
        match err {
            ConfigError::Parse { field, line, .. } => {
                assert_eq!(field, "w_v");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            PlannerConfig::from_json_str(r#"{"bogus": 1}"#),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn dotted_overrides() {
        let mut c = PlannerConfig::default();
        c.set("c_f1", "-0.5").unwrap();
        c.set("prune_grid.dv", "0.25").unwrap();
        c.set("a_bounds", "[-3.0, 2.0]").unwrap();
        assert_eq!(c.c_f1, -0.5);
        assert_eq!(c.prune_grid.dv, 0.25);
        assert_eq!(c.a_bounds, [-3.0, 2.0]);
        assert!(matches!(c.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.set("c_T", "-1"), Err(ConfigError::Invalid { .. })));
        // failed overrides leave the config untouched
        assert_eq!(c.horizon, 6.0);
    }

    #[test]
    fn judge_must_be_stricter_than_check() {
        let mut c = PlannerConfig::default();
        let err = c.set("a_i_judge", "-20.0").unwrap_err();
        assert!(err.to_string().contains("a_i_judge"));
    }
}
