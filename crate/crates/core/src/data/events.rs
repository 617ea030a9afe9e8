use serde::{Deserialize, Serialize};

use super::dataset::{TrajectoryDataset, VehicleSeries, FRAME_PERIOD};
use crate::config::DrivingStyle;
use crate::road::{AgentId, Lane, RoadGeometry};

/// A new lane must be held this long to count as a lane change, s.
pub const DEBOUNCE_S: f64 = 1.0;
pub const WINDOW_BEFORE_S: f64 = 2.0;
pub const WINDOW_AFTER_S: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub vehicle: AgentId,
    /// First tick in the new lane.
    pub t_change: f64,
    pub from_lane: Lane,
    pub to_lane: Lane,
    pub window_start: f64,
    pub window_end: f64,
    /// Peak |dvx/dt| and |dvy/dt| inside the window, m/s².
    pub peak_lat_accel: f64,
    pub peak_lon_accel: f64,
}

fn accel(v: &[f64], i: usize) -> f64 {
    let n = v.len();
    if n < 2 {
        0.0
    } else if i == 0 {
        (v[1] - v[0]) / FRAME_PERIOD
    } else if i == n - 1 {
        (v[n - 1] - v[n - 2]) / FRAME_PERIOD
    } else {
        (v[i + 1] - v[i - 1]) / (2.0 * FRAME_PERIOD)
    }
}

fn vehicle_events(v: &VehicleSeries, road: &RoadGeometry, out: &mut Vec<LaneChangeEvent>) {
    let lanes: Vec<Lane> =
        if v.lane.len() == v.len() { v.lane.clone() } else { v.x.iter().map(|&x| road.lane_of(x)).collect() };
    let hold = (DEBOUNCE_S / FRAME_PERIOD).round() as usize;
    let Some(&first) = lanes.first() else { return };
    let mut stable = first;
    let mut i = 1;
    while i < lanes.len() {
        let lane = lanes[i];
        if lane == stable {
            i += 1;
            continue;
        }
        if i + hold >= lanes.len() {
            // the record ends before the change can be confirmed
            break;
        }
        if lanes[i..=i + hold].iter().any(|&l| l != lane) {
            i += 1;
            continue;
        }
        let (from, to) = (stable, lane);
        stable = lane;
        let t = v.t[i];
        let (start, end) = (t - WINDOW_BEFORE_S, t + WINDOW_AFTER_S);
        let eps = 1e-6;
        if from.abs_diff(to) == 1 && start >= v.start() - eps && end <= v.end() + eps {
            let in_window = (0..v.len()).filter(|&k| v.t[k] >= start - eps && v.t[k] <= end + eps);
            let (mut lat, mut lon) = (0.0f64, 0.0f64);
            for k in in_window {
                lat = lat.max(accel(&v.vx, k).abs());
                lon = lon.max(accel(&v.vy, k).abs());
            }
            out.push(LaneChangeEvent {
                vehicle: v.id,
                t_change: t,
                from_lane: from,
                to_lane: to,
                window_start: start,
                window_end: end,
                peak_lat_accel: lat,
                peak_lon_accel: lon,
            });
        }
        i += hold;
    }
}

/// Lane changes of every vehicle, ordered by vehicle then time. A change
/// counts once the new lane has been held for [`DEBOUNCE_S`]; changes by
/// more than one lane or whose window does not fit in the record are
/// dropped.
pub fn extract_lane_changes(dataset: &TrajectoryDataset, road: &RoadGeometry) -> Vec<LaneChangeEvent> {
    let mut events = Vec::new();
    for v in &dataset.vehicles {
        vehicle_events(v, road, &mut events);
    }
    events
}

/// Fraction of `values` strictly below each value.
fn percentile_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    values.iter().map(|v| sorted.partition_point(|s| s < v) as f64 / (n - 1) as f64).collect()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Styles by quartile of the event's larger percentile rank of peak lateral
/// and longitudinal acceleration: below the first quartile is conservative,
/// above the third aggressive. With fewer than four events everything is
/// normal.
pub fn classify_driver_style(events: &[LaneChangeEvent]) -> Vec<DrivingStyle> {
    if events.len() < 4 {
        if !events.is_empty() {
            log::warn!("{} lane changes are too few for quartiles; all classified normal", events.len());
        }
        return vec![DrivingStyle::Normal; events.len()];
    }
    let lat: Vec<f64> = events.iter().map(|e| e.peak_lat_accel).collect();
    let lon: Vec<f64> = events.iter().map(|e| e.peak_lon_accel).collect();
    let scores: Vec<f64> = percentile_ranks(&lat).iter().zip(percentile_ranks(&lon)).map(|(a, b)| a.max(b)).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    scores
        .iter()
        .map(|&s| {
            if s < q1 {
                DrivingStyle::Conservative
            } else if s > q3 {
                DrivingStyle::Aggressive
            } else {
                DrivingStyle::Normal
            }
        })
        .collect()
}
