//! Risk-aware highway driver modelling.
//!
//! The crate predicts multimodal futures for surrounding vehicles
//! ([`prediction`]), turns them into a probabilistic risk field
//! ([`risk`]), plans a lowest-risk lane sequence over a lattice
//! ([`planner`]) with a learned lane preference ([`lane_pref`]), and runs
//! closed-loop highway scenarios ([`sim`]). [`data`] ingests recorded
//! trajectories, learns lane-preference tables and scores the model against
//! recorded lane changes.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod geometry;
pub mod lane_pref;
pub mod planner;
pub mod prediction;
pub mod render;
pub mod risk;
pub mod road;
pub mod scenario;
pub mod sim;

pub use config::{
    style_preset, DrivingStyle, EgoConfig, ModelConfig, PlannerConfig, PredictorConfig, RiskParams, SimConfig,
    StyleParams, StylePresets, TimeMapping, VelocitySkew,
};
pub use error::{Error, Result};
pub use geometry::Vec2;
pub use lane_pref::{LanePreference, LanePreferenceTable, LaneStats};
pub use planner::{build_grid, plan, plan_with_tolerance, LaneAction, PlannedPath, PlanningGrid, TieBreak};
pub use prediction::{PredictedTrajectorySet, TrajectoryPredictor, VehicleHistory};
pub use road::{AgentId, AgentState, ControlInput, Lane, RoadGeometry};
pub use scenario::Scenario;
