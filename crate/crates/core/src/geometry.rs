//! Small planar geometry helpers in the road frame.
//!
//! The road frame has `x` lateral (increasing toward the left, away from
//! lane 1) and `y` longitudinal (increasing in the direction of travel).
//! Headings are measured from the `+y` axis, positive toward `+x`.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector for a heading measured from `+y` toward `+x`.
    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.sin(), heading.cos())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Heading of this vector, measured from `+y` toward `+x`.
    pub fn heading(self) -> f64 {
        self.x.atan2(self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Oriented rectangle: a vehicle footprint centred on `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    fn axes(&self) -> [Vec2; 2] {
        let fwd = Vec2::from_heading(self.heading);
        // perpendicular pointing toward +x for heading 0
        let side = Vec2::new(fwd.y, -fwd.x);
        [fwd, side]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let [fwd, side] = self.axes();
        let f = fwd * (self.length / 2.0);
        let s = side * (self.width / 2.0);
        [self.center + f + s, self.center + f - s, self.center - f - s, self.center - f + s]
    }

    /// Separating-axis overlap test. Touching edges count as overlap.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let a = self.corners();
        let b = other.corners();
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = project(&a, axis);
            let (bmin, bmax) = project(&b, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }
}

fn project(points: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, y: f64, heading: f64) -> OrientedRect {
        OrientedRect { center: Vec2::new(x, y), heading, length: 4.0, width: 2.0 }
    }

    #[test]
    fn axis_aligned_overlap() {
        assert!(rect(0.0, 0.0, 0.0).overlaps(&rect(1.5, 3.5, 0.0)));
        assert!(!rect(0.0, 0.0, 0.0).overlaps(&rect(0.0, 4.01, 0.0)));
        assert!(!rect(0.0, 0.0, 0.0).overlaps(&rect(2.01, 0.0, 0.0)));
    }

    #[test]
    fn rotated_rect_misses_corner() {
        // a diamond near the corner of an axis-aligned box
        let a = rect(0.0, 0.0, 0.0);
        let b =
            OrientedRect { center: Vec2::new(2.6, 2.6), heading: std::f64::consts::FRAC_PI_4, length: 2.0, width: 2.0 };
        assert!(!a.overlaps(&b));
        let c = OrientedRect { center: Vec2::new(1.8, 2.6), ..b };
        assert!(a.overlaps(&c));
    }

    #[test]
    fn heading_round_trip() {
        for h in [-1.0, -0.2, 0.0, 0.3, 1.2] {
            assert!((Vec2::from_heading(h).heading() - h).abs() < 1e-12);
        }
    }
}
