//! Oriented rectangles: separating-axis overlap tests and contact regions.

use crate::types::{PoseState, Shape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn new(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> Self {
        Self {
            cx,
            cy,
            heading,
            half_length: 0.5 * length,
            half_width: 0.5 * width,
        }
    }

    /// Footprint whose center sits `center_offset` meters ahead of `pose`.
    pub fn from_pose(pose: &PoseState, shape: Shape, center_offset: f64) -> Self {
        let (cx, cy) = pose.offset(center_offset, 0.0);
        Self::new(cx, cy, pose.heading, shape.length, shape.width)
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let [(ux, uy), (vx, vy)] = self.axes();
        let (l, w) = (self.half_length, self.half_width);
        [
            (self.cx + ux * l - vx * w, self.cy + uy * l - vy * w),
            (self.cx + ux * l + vx * w, self.cy + uy * l + vy * w),
            (self.cx - ux * l + vx * w, self.cy - uy * l + vy * w),
            (self.cx - ux * l - vx * w, self.cy - uy * l - vy * w),
        ]
    }

    fn projected_radius(&self, axis: (f64, f64)) -> f64 {
        let [(ux, uy), (vx, vy)] = self.axes();
        self.half_length * (ux * axis.0 + uy * axis.1).abs()
            + self.half_width * (vx * axis.0 + vy * axis.1).abs()
    }

    /// Separating-axis test; touching edges count as overlap.
    pub fn intersects(&self, other: &OrientedRect) -> bool {
        let dx = other.cx - self.cx;
        let dy = other.cy - self.cy;
        let reach = self.bounding_radius() + other.bounding_radius();
        if dx * dx + dy * dy > reach * reach {
            return false;
        }
        for axis in self.axes().into_iter().chain(other.axes()) {
            let dist = (dx * axis.0 + dy * axis.1).abs();
            if dist > self.projected_radius(axis) + other.projected_radius(axis) {
                return false;
            }
        }
        true
    }

    /// Coordinates of a world point in this rectangle's frame (forward, left).
    pub fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        (dx * c + dy * s, -dx * s + dy * c)
    }

    /// Centroid of the overlap region, if any.
    pub fn contact_centroid(&self, other: &OrientedRect) -> Option<(f64, f64)> {
        if !self.intersects(other) {
            return None;
        }
        let clipped = clip_convex(&other.corners(), &self.corners());
        polygon_centroid(&clipped).or(Some((
            0.5 * (self.cx + other.cx),
            0.5 * (self.cy + other.cy),
        )))
    }
}

/// Sutherland–Hodgman clip of `subject` by the convex counter-clockwise `clip`.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut output: Vec<(f64, f64)> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let inside = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0;
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                if let Some(p) = line_intersection(prev, cur, a, b) {
                    output.push(p);
                }
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    output
}

fn line_intersection(
    p1: (f64, f64),
    p2: (f64, f64),
    q1: (f64, f64),
    q2: (f64, f64),
) -> Option<(f64, f64)> {
    let r = (p2.0 - p1.0, p2.1 - p1.1);
    let s = (q2.0 - q1.0, q2.1 - q1.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = ((q1.0 - p1.0) * s.1 - (q1.1 - p1.1) * s.0) / denom;
    Some((p1.0 + t * r.0, p1.1 + t * r.1))
}

fn polygon_centroid(poly: &[(f64, f64)]) -> Option<(f64, f64)> {
    if poly.len() < 3 {
        return None;
    }
    let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        let cross = x0 * y1 - x1 * y0;
        area += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    if area.abs() < 1e-12 {
        let n = poly.len() as f64;
        let (sx, sy) = poly.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        return Some((sx / n, sy / n));
    }
    Some((cx / (3.0 * area), cy / (3.0 * area)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn axis_aligned_overlap_and_separation() {
        let a = OrientedRect::new(0.0, 0.0, 0.0, 4.0, 2.0);
        assert!(a.intersects(&OrientedRect::new(3.9, 0.0, 0.0, 4.0, 2.0)));
        assert!(!a.intersects(&OrientedRect::new(4.1, 0.0, 0.0, 4.0, 2.0)));
        assert!(!a.intersects(&OrientedRect::new(0.0, 2.1, 0.0, 4.0, 2.0)));
    }

    #[test]
    fn rotated_rect_separated_on_its_own_axis() {
        // a 2x2 square turned 45 degrees reaches 1.414 m from its center
        let a = OrientedRect::new(0.0, 0.0, 0.0, 4.0, 4.0);
        let b = OrientedRect::new(3.3, 0.0, FRAC_PI_4, 2.0, 2.0);
        assert!(!a.intersects(&OrientedRect::new(4.3, 0.0, FRAC_PI_4, 2.0, 2.0)));
        assert!(a.intersects(&b));
        let c = OrientedRect::new(3.5, 3.5, FRAC_PI_4, 2.0, 2.0);
        assert!(!a.intersects(&c));
    }

    #[test]
    fn contact_centroid_of_half_overlap() {
        let a = OrientedRect::new(0.0, 0.0, 0.0, 4.0, 2.0);
        let b = OrientedRect::new(3.0, 0.0, 0.0, 4.0, 2.0);
        let (x, y) = a.contact_centroid(&b).unwrap();
        assert!((x - 1.5).abs() < 1e-9 && y.abs() < 1e-9);
        assert!(a.contact_centroid(&OrientedRect::new(10.0, 0.0, 0.0, 1.0, 1.0)).is_none());
    }

    #[test]
    fn local_frame() {
        let a = OrientedRect::new(1.0, 1.0, std::f64::consts::FRAC_PI_2, 4.0, 2.0);
        let (f, l) = a.to_local(1.0, 3.0);
        assert!((f - 2.0).abs() < 1e-12 && l.abs() < 1e-12);
    }
}
