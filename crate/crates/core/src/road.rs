//! World model: straight multi-lane road, vehicle states and controls.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{OrientedRect, Vec2};

/// 1-based lane index. Lane 1 is the slowest (rightmost) lane at the
/// smallest `x`; higher indices are further left.
pub type Lane = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Straight, axis-aligned highway section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    pub num_lanes: usize,
    #[serde(rename = "lane_width_m")]
    pub lane_width: f64,
    #[serde(rename = "length_m")]
    pub length: f64,
}

impl RoadGeometry {
    pub const DEFAULT_LANE_WIDTH: f64 = 3.7;

    pub fn new(num_lanes: usize, lane_width: f64, length: f64) -> Result<Self> {
        let road = Self { num_lanes, lane_width, length };
        road.validate()?;
        Ok(road)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_lanes < 1 {
            return Err(Error::config("road.num_lanes must be at least 1"));
        }
        if !(self.lane_width > 0.0 && self.lane_width.is_finite()) {
            return Err(Error::config("road.lane_width_m must be positive"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::config("road.length_m must be positive"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.num_lanes as f64 * self.lane_width
    }

    /// Lateral position of the centre of `lane`.
    pub fn lane_center(&self, lane: Lane) -> f64 {
        (lane as f64 - 0.5) * self.lane_width
    }

    /// Lane containing lateral position `x`. Points on a boundary go to the
    /// higher-index lane; positions off the road clamp to the edge lanes.
    pub fn lane_of(&self, x: f64) -> Lane {
        let mut k = (x / self.lane_width).floor();
        // the division can round a point on a boundary down into the lower lane
        if (k + 1.0) * self.lane_width <= x {
            k += 1.0;
        }
        let raw = k + 1.0;
        if raw.is_nan() || raw < 1.0 {
            1
        } else if raw >= self.num_lanes as f64 {
            self.num_lanes
        } else {
            raw as Lane
        }
    }

    pub fn has_lane(&self, lane: isize) -> bool {
        lane >= 1 && lane as usize <= self.num_lanes
    }

    pub fn contains_lateral(&self, x: f64) -> bool {
        (0.0..=self.width()).contains(&x)
    }
}

/// Kinematic state of one vehicle in the road frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    pub position: Vec2,
    /// Speed along the heading, m/s.
    pub speed: f64,
    /// Radians from the `+y` axis, positive toward `+x`.
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl AgentState {
    pub const DEFAULT_LENGTH: f64 = 4.5;
    pub const DEFAULT_WIDTH: f64 = 1.8;

    /// Vehicle driving straight down the road at `speed`.
    pub fn new(id: u64, x: f64, y: f64, speed: f64) -> Self {
        Self {
            id: AgentId(id),
            position: Vec2::new(x, y),
            speed,
            heading: 0.0,
            length: Self::DEFAULT_LENGTH,
            width: Self::DEFAULT_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.position.x, "agent x")?;
        ensure_finite(self.position.y, "agent y")?;
        ensure_finite(self.speed, "agent speed")?;
        ensure_finite(self.heading, "agent heading")?;
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::invalid(format!("agent {}: length and width must be positive", self.id)));
        }
        if self.speed < 0.0 {
            return Err(Error::invalid(format!("agent {}: speed must be non-negative", self.id)));
        }
        Ok(())
    }

    pub fn lane(&self, road: &RoadGeometry) -> Lane {
        road.lane_of(self.position.x)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_heading(self.heading) * self.speed
    }

    pub fn footprint(&self) -> OrientedRect {
        OrientedRect { center: self.position, heading: self.heading, length: self.length, width: self.width }
    }
}

/// Acceleration (m/s²) and front-wheel steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub accel: f64,
    pub steer: f64,
}

impl ControlInput {
    pub fn clamped(self, accel_max: f64, steer_max: f64) -> Self {
        Self { accel: self.accel.clamp(-accel_max, accel_max), steer: self.steer.clamp(-steer_max, steer_max) }
    }
}
