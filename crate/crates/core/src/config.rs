//! Configuration shared across prediction, risk, planning and simulation.
//!
//! Every struct deserializes with defaults for missing keys, so a config
//! file only needs to name the values it changes.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lane_pref::LaneStats;
use crate::planner::TieBreak;
use crate::road::RoadGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrivingStyle {
    Conservative,
    Normal,
    Aggressive,
}

impl DrivingStyle {
    pub const ALL: [DrivingStyle; 3] = [Self::Conservative, Self::Normal, Self::Aggressive];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Conservative => "conservative",
            Self::Normal => "normal",
            Self::Aggressive => "aggressive",
        }
    }
}

impl std::fmt::Display for DrivingStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DrivingStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conservative" => Ok(Self::Conservative),
            "normal" => Ok(Self::Normal),
            "aggressive" => Ok(Self::Aggressive),
            other => Err(Error::config(format!("unknown driving style {other:?}"))),
        }
    }
}

/// Numeric values attached to a driving style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleParams {
    /// Planning threshold: the highest risk a planned node may carry.
    pub risk_threshold: f64,
    /// Longitudinal acceleration limit, m/s².
    pub accel_limit: f64,
    /// Lateral acceleration limit, m/s².
    pub lateral_accel_limit: f64,
}

impl Default for StyleParams {
    fn default() -> Self {
        StylePresets::default().normal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StylePresets {
    pub conservative: StyleParams,
    pub normal: StyleParams,
    pub aggressive: StyleParams,
}

impl Default for StylePresets {
    fn default() -> Self {
        Self {
            conservative: StyleParams { risk_threshold: 0.4, accel_limit: 1.5, lateral_accel_limit: 2.0 },
            normal: StyleParams { risk_threshold: 0.6, accel_limit: 2.5, lateral_accel_limit: 3.0 },
            aggressive: StyleParams { risk_threshold: 0.8, accel_limit: 3.5, lateral_accel_limit: 4.0 },
        }
    }
}

impl StylePresets {
    pub fn get(&self, style: DrivingStyle) -> StyleParams {
        match style {
            DrivingStyle::Conservative => self.conservative,
            DrivingStyle::Normal => self.normal,
            DrivingStyle::Aggressive => self.aggressive,
        }
    }

    /// Thresholds must be positive and strictly ordered
    /// conservative < normal < aggressive.
    pub fn validate(&self) -> Result<()> {
        for style in DrivingStyle::ALL {
            let p = self.get(style);
            if !(p.risk_threshold > 0.0 && p.risk_threshold.is_finite()) {
                return Err(Error::config(format!("styles.{style}.risk_threshold must be positive")));
            }
            if !(p.accel_limit > 0.0 && p.lateral_accel_limit > 0.0) {
                return Err(Error::config(format!("styles.{style}: acceleration limits must be positive")));
            }
        }
        let (c, n, a) = (self.conservative.risk_threshold, self.normal.risk_threshold, self.aggressive.risk_threshold);
        if !(c < n && n < a) {
            return Err(Error::config(format!(
                "style thresholds must satisfy conservative < normal < aggressive (got {c}, {n}, {a})"
            )));
        }
        Ok(())
    }
}

/// Default parameters for a named style.
pub fn style_preset(name: &str) -> Result<StyleParams> {
    let style: DrivingStyle = name.parse()?;
    Ok(StylePresets::default().get(style))
}

/// Driver parameters for a planned vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoConfig {
    pub risk_threshold: f64,
    pub desired_speed: f64,
    pub style: DrivingStyle,
    pub accel_limit: f64,
    pub lateral_accel_limit: f64,
}

impl EgoConfig {
    pub fn from_style(style: DrivingStyle, params: StyleParams, desired_speed: f64) -> Self {
        Self {
            risk_threshold: params.risk_threshold,
            desired_speed,
            style,
            accel_limit: params.accel_limit,
            lateral_accel_limit: params.lateral_accel_limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.risk_threshold > 0.0 && self.risk_threshold.is_finite()) {
            return Err(Error::config("ego.risk_threshold must be positive"));
        }
        if !(self.desired_speed >= 0.0 && self.desired_speed.is_finite()) {
            return Err(Error::config("ego.desired_speed_mps must be non-negative"));
        }
        if !(self.accel_limit > 0.0 && self.lateral_accel_limit > 0.0) {
            return Err(Error::config("ego acceleration limits must be positive"));
        }
        Ok(())
    }
}

/// Which way the velocity sigmoid elongates a vehicle's risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocitySkew {
    /// Sign −1: risk extends ahead of the vehicle along its velocity.
    #[default]
    Forward,
    /// Sign +1: risk extends behind the vehicle.
    Rearward,
}

impl VelocitySkew {
    pub fn sign(self) -> f64 {
        match self {
            Self::Forward => -1.0,
            Self::Rearward => 1.0,
        }
    }
}

/// Parameters of the rectangular higher-order Gaussian risk cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskParams {
    pub alpha: f64,
    pub beta: f64,
    pub velocity_skew: VelocitySkew,
    /// Metres of lateral spread added per m/s of agent speed.
    pub lateral_speed_gain: f64,
    /// Metres of longitudinal spread added per m/s of agent speed.
    pub longitudinal_speed_gain: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 1.5,
            velocity_skew: VelocitySkew::Forward,
            lateral_speed_gain: 0.05,
            longitudinal_speed_gain: 1.0,
        }
    }
}

impl RiskParams {
    /// Spread grows one metre per m/s on both axes.
    pub fn unit_speed_gain() -> Self {
        Self { lateral_speed_gain: 1.0, longitudinal_speed_gain: 1.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("risk.alpha must be positive"));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(Error::config("risk.beta must be at least 1"));
        }
        if !(self.lateral_speed_gain >= 0.0 && self.longitudinal_speed_gain >= 0.0) {
            return Err(Error::config("risk speed gains must be non-negative"));
        }
        Ok(())
    }
}

/// How the planner maps a grid column onto a prediction time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMapping {
    /// Constant current speed.
    CurrentSpeed,
    /// Constant desired speed.
    DesiredSpeed,
    /// The ramp toward the desired speed used for the reference.
    #[default]
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Spacing of risk time steps, s.
    pub step_period: f64,
    /// Number of predicted time steps.
    pub n_time: usize,
    /// Spacing of predicted trajectory points, s.
    pub point_period: f64,
    /// Longitudinal spacing of grid columns, m.
    pub column_spacing: f64,
    /// Number of grid columns ahead of the ego.
    pub n_horiz: usize,
    pub replan_period: f64,
    /// Speed floor used when mapping columns to time steps, m/s.
    pub min_mapping_speed: f64,
    pub time_mapping: TimeMapping,
    /// Add the learned lane-preference delta to edge weights.
    pub lane_preference: bool,
    pub tie_break: TieBreak,
    /// Path costs closer than this are treated as equal and settled by
    /// `tie_break`, so negligible far-field risk does not steer lane choice.
    pub cost_tolerance: f64,
    /// Statistics used for lanes with fewer than two observed vehicles.
    /// `None` disables the lane-preference term on edges touching such lanes.
    pub nominal_lane_stats: Option<LaneStats>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            step_period: 0.2,
            n_time: 25,
            point_period: 0.2,
            column_spacing: 10.0,
            n_horiz: 15,
            replan_period: 0.2,
            min_mapping_speed: 1.0,
            time_mapping: TimeMapping::Projected,
            lane_preference: true,
            tie_break: TieBreak::default(),
            cost_tolerance: 1e-3,
            nominal_lane_stats: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("planner.step_period", self.step_period),
            ("planner.point_period", self.point_period),
            ("planner.column_spacing", self.column_spacing),
            ("planner.replan_period", self.replan_period),
            ("planner.min_mapping_speed", self.min_mapping_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.n_time == 0 || self.n_horiz == 0 {
            return Err(Error::config("planner.n_time and planner.n_horiz must be positive"));
        }
        if !(self.cost_tolerance >= 0.0 && self.cost_tolerance.is_finite()) {
            return Err(Error::config("planner.cost_tolerance must be non-negative"));
        }
        self.points_per_step()?;
        self.tie_break.validate()?;
        if let Some(stats) = self.nominal_lane_stats {
            stats.validate()?;
        }
        Ok(())
    }

    /// Ratio between risk step spacing and trajectory point spacing; must
    /// be a positive integer so every risk step lands on a trajectory point.
    pub fn points_per_step(&self) -> Result<usize> {
        let ratio = self.step_period / self.point_period;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 {
            return Err(Error::config("planner.step_period must be an integer multiple of planner.point_period"));
        }
        Ok(rounded as usize)
    }

    /// Number of risk time steps covered by the predicted trajectories.
    pub fn risk_steps(&self) -> usize {
        self.n_time / self.points_per_step().unwrap_or(1)
    }

    pub fn validate_for_road(&self, road: &RoadGeometry) -> Result<()> {
        self.validate()?;
        if self.n_horiz as f64 * self.column_spacing > road.length {
            return Err(Error::config("planner horizon (n_horiz * column_spacing) exceeds road length"));
        }
        Ok(())
    }
}

/// Settings for the built-in physics predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Registered predictor name.
    pub name: String,
    pub decel: f64,
    pub lane_change_duration: f64,
    pub temperature: f64,
    /// Length of the history window kept per vehicle, s.
    pub lookback: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self { name: "physics".to_string(), decel: 2.0, lane_change_duration: 4.0, temperature: 1.0, lookback: 3.0 }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decel >= 0.0 && self.lane_change_duration > 0.0 && self.temperature > 0.0 && self.lookback > 0.0) {
            return Err(Error::config(
                "prediction: decel >= 0 and lane_change_duration, temperature, lookback > 0 required",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub wheelbase: f64,
    /// Minimum pure-pursuit lookahead distance, m.
    pub lookahead: f64,
    /// Lookahead grows to this many seconds of travel at speed, s.
    pub lookahead_time: f64,
    /// Proportional gain from speed error to acceleration, 1/s.
    pub speed_gain: f64,
    /// The speed target is read this far ahead on the reference, s.
    pub speed_preview: f64,
    pub steer_max: f64,
    /// Hard braking limit used by the car-following governor, m/s².
    pub max_brake: f64,
    /// Desired time gap to a lead vehicle, s.
    pub time_headway: f64,
    /// Standstill gap to a lead vehicle, m.
    pub min_gap: f64,
    /// Replan every `replan_period`; when false only the initial plan is used.
    pub replan: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            wheelbase: 2.7,
            lookahead: 10.0,
            lookahead_time: 1.0,
            speed_gain: 1.0,
            speed_preview: 1.0,
            steer_max: 0.5,
            max_brake: 6.0,
            time_headway: 1.2,
            min_gap: 2.0,
            replan: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sim.dt", self.dt),
            ("sim.wheelbase", self.wheelbase),
            ("sim.lookahead", self.lookahead),
            ("sim.speed_gain", self.speed_gain),
            ("sim.steer_max", self.steer_max),
            ("sim.max_brake", self.max_brake),
            ("sim.time_headway", self.time_headway),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.min_gap >= 0.0) {
            return Err(Error::config("sim.min_gap must be non-negative"));
        }
        if !(self.lookahead_time >= 0.0 && self.lookahead_time.is_finite()) {
            return Err(Error::config("sim.lookahead_time must be non-negative"));
        }
        if !(self.speed_preview >= 0.0 && self.speed_preview.is_finite()) {
            return Err(Error::config("sim.speed_preview must be non-negative"));
        }
        Ok(())
    }

    /// Number of simulation ticks per replan; the replan period must be an
    /// integer multiple of `dt`.
    pub fn ticks_per_replan(&self, planner: &PlannerConfig) -> Result<usize> {
        let ratio = planner.replan_period / self.dt;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-6 {
            return Err(Error::config("planner.replan_period must be an integer multiple of sim.dt"));
        }
        Ok(rounded as usize)
    }
}

/// Everything a planned driver needs apart from its own state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub planner: PlannerConfig,
    pub risk: RiskParams,
    pub prediction: PredictorConfig,
    pub sim: SimConfig,
    pub styles: StylePresets,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        self.risk.validate()?;
        self.prediction.validate()?;
        self.sim.validate()?;
        self.styles.validate()?;
        self.sim.ticks_per_replan(&self.planner)?;
        Ok(())
    }
}
