//! Recorded-trajectory pipeline: CSV ingestion, smoothing, lane
//! re-extraction, lane-change mining, style classification, lane-preference
//! learning and closed-loop validation against recorded lane changes.

mod dataset;
mod events;
mod learn;
mod validate;

pub use dataset::{
    load_trajectories, parse_trajectories, smooth, split_by_parity, TrajectoryDataset, Units, VehicleSeries,
    FRAME_PERIOD,
};
pub use events::{
    classify_driver_style, extract_lane_changes, LaneChangeEvent, DEBOUNCE_S, WINDOW_AFTER_S, WINDOW_BEFORE_S,
};
pub use learn::{learn_lane_preference, LearnedPreference, BIN_EDGES};
pub use validate::{
    validate, DesiredSpeedRule, EgoModel, EventOutcome, StyleMetrics, ValidationOptions, ValidationReport,
};
