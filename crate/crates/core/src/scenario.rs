//! Scenario files: road, surrounding vehicles with behaviour scripts, and
//! the planned ego vehicle.
//!
//! ```json
//! {
//!   "road": {"num_lanes": 3, "lane_width_m": 3.7, "length_m": 3000},
//!   "agents": [
//!     {"id": 1, "x_m": 1.85, "y_m": 80, "speed_mps": 25,
//!      "heading_rad": 0, "length_m": 4.5, "width_m": 1.8,
//!      "behavior": "constant_speed"}
//!   ],
//!   "ego": {"x_m": 5.55, "y_m": 0, "speed_mps": 30, "desired_speed_mps": 32,
//!           "style": "aggressive"},
//!   "duration_s": 20,
//!   "seed": 7
//! }
//! ```
//!
//! `behavior` is `"constant_speed"` (default), `{"replay": {"samples":
//! [{"t_s", "x_m", "y_m", "speed_mps"}]}}`, or `{"model":
//! {"desired_speed_mps", "style"}}`. Ego fields other than the position,
//! speed and `desired_speed_mps` are optional; `risk_threshold` overrides
//! the style's threshold.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::config::{DrivingStyle, EgoConfig, StylePresets};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::road::{AgentId, AgentState, RoadGeometry};

fn default_length() -> f64 {
    AgentState::DEFAULT_LENGTH
}

fn default_width() -> f64 {
    AgentState::DEFAULT_WIDTH
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplaySample {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Hold the initial lane and speed.
    #[default]
    ConstantSpeed,
    /// Follow recorded samples; the vehicle exists only within their span.
    Replay { samples: Vec<ReplaySample> },
    /// Drive with its own planner.
    Model { desired_speed_mps: f64, style: DrivingStyle },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u64,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
    #[serde(default)]
    pub heading_rad: f64,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_width")]
    pub width_m: f64,
    #[serde(default)]
    pub behavior: Behavior,
}

impl AgentSpec {
    pub fn state(&self) -> AgentState {
        AgentState {
            id: AgentId(self.id),
            position: Vec2::new(self.x_m, self.y_m),
            speed: self.speed_mps,
            heading: self.heading_rad,
            length: self.length_m,
            width: self.width_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    #[serde(default)]
    pub id: u64,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
    #[serde(default)]
    pub heading_rad: f64,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_width")]
    pub width_m: f64,
    #[serde(default)]
    pub risk_threshold: Option<f64>,
    pub desired_speed_mps: f64,
    #[serde(default = "default_style")]
    pub style: DrivingStyle,
}

fn default_style() -> DrivingStyle {
    DrivingStyle::Normal
}

impl EgoSpec {
    pub fn state(&self) -> AgentState {
        AgentState {
            id: AgentId(self.id),
            position: Vec2::new(self.x_m, self.y_m),
            speed: self.speed_mps,
            heading: self.heading_rad,
            length: self.length_m,
            width: self.width_m,
        }
    }

    pub fn config(&self, presets: &StylePresets) -> EgoConfig {
        let mut cfg = EgoConfig::from_style(self.style, presets.get(self.style), self.desired_speed_mps);
        if let Some(h) = self.risk_threshold {
            cfg.risk_threshold = h;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub road: RoadGeometry,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    pub ego: EgoSpec,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Absolute time of the first tick; replay samples use the same clock.
    #[serde(default)]
    pub start_time_s: f64,
}

impl Scenario {
    /// Parses and validates a scenario. Parse errors name the offending
    /// field path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::invalid(format!("scenario field `{path}`: {}", e.inner()))
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.road.validate()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid("duration_s must be positive"));
        }
        let mut ids = BTreeSet::new();
        ids.insert(self.ego.id);
        let ego = self.ego.state();
        ego.validate().map_err(|e| Error::invalid(format!("ego: {e}")))?;
        self.check_on_road("ego", ego.position)?;
        if !(self.ego.desired_speed_mps >= 0.0 && self.ego.desired_speed_mps.is_finite()) {
            return Err(Error::invalid("ego.desired_speed_mps must be non-negative"));
        }
        if let Some(h) = self.ego.risk_threshold {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("ego.risk_threshold must be positive"));
            }
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if !ids.insert(agent.id) {
                return Err(Error::invalid(format!("agents[{i}].id {} is not unique", agent.id)));
            }
            agent.state().validate().map_err(|e| Error::invalid(format!("agents[{i}]: {e}")))?;
            match &agent.behavior {
                Behavior::ConstantSpeed => self.check_on_road(&format!("agents[{i}]"), agent.state().position)?,
                Behavior::Replay { samples } => {
                    if samples.is_empty() {
                        return Err(Error::invalid(format!("agents[{i}].behavior.replay has no samples")));
                    }
                    if samples.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
                        return Err(Error::invalid(format!("agents[{i}].behavior.replay times must increase")));
                    }
                }
                Behavior::Model { desired_speed_mps, .. } => {
                    if !(*desired_speed_mps >= 0.0) {
                        return Err(Error::invalid(format!(
                            "agents[{i}].behavior.model.desired_speed_mps must be non-negative"
                        )));
                    }
                    self.check_on_road(&format!("agents[{i}]"), agent.state().position)?;
                }
            }
        }
        Ok(())
    }

    fn check_on_road(&self, what: &str, p: Vec2) -> Result<()> {
        if !self.road.contains_lateral(p.x) || !(0.0..=self.road.length).contains(&p.y) {
            return Err(Error::invalid(format!("{what} starts outside the road at ({}, {})", p.x, p.y)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "road": {"num_lanes": 3, "lane_width_m": 3.7, "length_m": 1000},
        "agents": [{"id": 1, "x_m": 1.85, "y_m": 50, "speed_mps": 20}],
        "ego": {"x_m": 5.55, "y_m": 0, "speed_mps": 25, "desired_speed_mps": 25, "style": "conservative"},
        "duration_s": 10,
        "seed": 3
    }"#;

    #[test]
    fn parses_minimal() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(s.agents[0].behavior, Behavior::ConstantSpeed);
        assert_eq!(s.agents[0].length_m, 4.5);
        let cfg = s.ego.config(&StylePresets::default());
        assert_eq!(cfg.risk_threshold, 0.4);
        let back = Scenario::from_json_str(&s.to_json_pretty()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn error_names_field() {
        let bad = MINIMAL.replace("\"speed_mps\": 20", "\"speed_mps\": \"fast\"");
        let err = Scenario::from_json_str(&bad).unwrap_err().to_string();
        assert!(err.contains("agents[0].speed_mps"), "{err}");
        let missing = MINIMAL.replace("\"duration_s\": 10,", "");
        let err = Scenario::from_json_str(&missing).unwrap_err().to_string();
        assert!(err.contains("duration_s"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dup = MINIMAL.replace("\"id\": 1", "\"id\": 0");
        assert!(Scenario::from_json_str(&dup).unwrap_err().to_string().contains("not unique"));
    }

    #[test]
    fn off_road_start_rejected() {
        let off = MINIMAL.replace("\"x_m\": 1.85", "\"x_m\": -3.0");
        assert!(Scenario::from_json_str(&off).is_err());
    }

    #[test]
    fn behavior_variants_parse() {
        let text = MINIMAL.replace(
            "\"speed_mps\": 20}",
            "\"speed_mps\": 20, \"behavior\": {\"model\": {\"desired_speed_mps\": 22, \"style\": \"normal\"}}}",
        );
        let s = Scenario::from_json_str(&text).unwrap();
        assert!(matches!(s.agents[0].behavior, Behavior::Model { .. }));
    }
}
