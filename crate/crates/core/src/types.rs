//! Planar poses, longitudinal AV states and vehicle shapes.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into (-π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar pose of a vehicle reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl PoseState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    pub fn distance(&self, other: &PoseState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point `forward` meters ahead and `left` meters to the left of this pose.
    pub fn offset(&self, forward: f64, left: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (
            self.x + forward * c - left * s,
            self.y + forward * s + left * c,
        )
    }
}

/// Longitudinal state of the AV along its planned path: `[t, s, v, a]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvState {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

impl AvState {
    pub fn new(t: f64, s: f64, v: f64, a: f64) -> Self {
        Self { t, s, v, a }
    }
}

/// Rectangular vehicle footprint in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    #[serde(rename = "l")]
    pub length: f64,
    #[serde(rename = "w")]
    pub width: f64,
}

impl Shape {
    pub fn new(length: f64, width: f64) -> Self {
        Self { length, width }
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}
