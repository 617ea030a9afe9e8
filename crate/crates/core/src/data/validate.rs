use serde::{Deserialize, Serialize};
use std::fmt::Write;

use super::dataset::{TrajectoryDataset, VehicleSeries};
use super::events::{classify_driver_style, LaneChangeEvent, WINDOW_BEFORE_S};
use crate::config::{DrivingStyle, ModelConfig};
use crate::error::Result;
use crate::lane_pref::LanePreference;
use crate::prediction::PredictorRegistry;
use crate::road::{AgentId, Lane, RoadGeometry};
use crate::scenario::{AgentSpec, Behavior, EgoSpec, ReplaySample, Scenario};
use crate::sim::Simulation;

/// Length of each validation run, s. Runs start [`WINDOW_BEFORE_S`] before
/// the recorded change.
pub const RUN_S: f64 = 4.0;

/// How the replacement vehicle's desired speed is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesiredSpeedRule {
    /// The recorded speed at the start of the run.
    #[default]
    AtStart,
    Fixed(f64),
}

/// What drives the replaced vehicle.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum EgoModel {
    /// Replays the vehicle's own record.
    Identity,
    /// The planner in closed loop with every other vehicle replaying.
    Planner { config: ModelConfig, preference: Option<LanePreference> },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub desired_speed: DesiredSpeedRule,
    /// Style used for every event instead of the quartile classification.
    pub style: Option<DrivingStyle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub vehicle: AgentId,
    pub t_change: f64,
    pub from_lane: Lane,
    pub to_lane: Lane,
    pub style: DrivingStyle,
    /// The model entered the recorded target lane during the run.
    pub correct: bool,
    pub rmse_lat: f64,
    pub rmse_lon: f64,
    pub final_lat_error: f64,
    pub final_lon_error: f64,
    #[serde(skip)]
    sq_lat: f64,
    #[serde(skip)]
    sq_lon: f64,
    #[serde(skip)]
    samples: usize,
}

/// Accuracy and trajectory errors over a group of events. Every field but
/// the counts is `None` for an empty group.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StyleMetrics {
    pub events: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
    pub rmse_lat_avg: Option<f64>,
    pub rmse_lat_final: Option<f64>,
    pub rmse_lon_avg: Option<f64>,
    pub rmse_lon_final: Option<f64>,
}

impl StyleMetrics {
    fn from_outcomes<'a>(outcomes: impl Iterator<Item = &'a EventOutcome>) -> Self {
        let (mut events, mut correct, mut samples) = (0usize, 0usize, 0usize);
        let (mut sq_lat, mut sq_lon, mut fin_lat, mut fin_lon) = (0.0, 0.0, 0.0, 0.0);
        for o in outcomes {
            events += 1;
            correct += o.correct as usize;
            samples += o.samples;
            sq_lat += o.sq_lat;
            sq_lon += o.sq_lon;
            fin_lat += o.final_lat_error.powi(2);
            fin_lon += o.final_lon_error.powi(2);
        }
        if events == 0 {
            return Self::default();
        }
        let e = events as f64;
        let s = samples.max(1) as f64;
        Self {
            events,
            correct,
            accuracy: Some(correct as f64 / e),
            rmse_lat_avg: Some((sq_lat / s).sqrt()),
            rmse_lat_final: Some((fin_lat / e).sqrt()),
            rmse_lon_avg: Some((sq_lon / s).sqrt()),
            rmse_lon_final: Some((fin_lon / e).sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub conservative: StyleMetrics,
    pub normal: StyleMetrics,
    pub aggressive: StyleMetrics,
    pub total: StyleMetrics,
    /// Events whose run leaves the recorded data.
    pub skipped: usize,
    pub events: Vec<EventOutcome>,
}

impl ValidationReport {
    pub fn by_style(&self, style: DrivingStyle) -> &StyleMetrics {
        match style {
            DrivingStyle::Conservative => &self.conservative,
            DrivingStyle::Normal => &self.normal,
            DrivingStyle::Aggressive => &self.aggressive,
        }
    }

    /// Per-event detail, one row per scored event.
    pub fn events_csv(&self) -> String {
        let mut s = String::from(
            "vehicle_id,t_change_s,from_lane,to_lane,style,correct,rmse_lat_m,rmse_lon_m,final_lat_m,final_lon_m\n",
        );
        for e in &self.events {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                e.vehicle,
                e.t_change,
                e.from_lane,
                e.to_lane,
                e.style,
                e.correct as u8,
                e.rmse_lat,
                e.rmse_lon,
                e.final_lat_error,
                e.final_lon_error
            );
        }
        s
    }

    /// Plain-text table with one row per style and a total row.
    pub fn table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let mut s = format!(
            "{:<13}{:>7}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
            "style", "events", "accuracy", "lat_avg", "lat_final", "lon_avg", "lon_final"
        );
        let rows = [
            ("conservative", &self.conservative),
            ("normal", &self.normal),
            ("aggressive", &self.aggressive),
            ("total", &self.total),
        ];
        for (name, m) in rows {
            let _ = writeln!(
                s,
                "{:<13}{:>7}{:>10}{:>10}{:>10}{:>10}{:>10}",
                name,
                m.events,
                fmt(m.accuracy),
                fmt(m.rmse_lat_avg),
                fmt(m.rmse_lat_final),
                fmt(m.rmse_lon_avg),
                fmt(m.rmse_lon_final)
            );
        }
        s
    }
}

/// Sampled model trajectory: `(t, x, y, lane)`.
type Track = Vec<(f64, f64, f64, Lane)>;

fn replay_samples(v: &VehicleSeries, from: f64, to: f64) -> Vec<ReplaySample> {
    (0..v.len())
        .filter(|&i| v.t[i] >= from - 1e-6 && v.t[i] <= to + 1e-6)
        .map(|i| ReplaySample { t_s: v.t[i], x_m: v.x[i], y_m: v.y[i], speed_mps: v.speed[i] })
        .collect()
}

fn event_scenario(
    ev: &LaneChangeEvent,
    ego: &VehicleSeries,
    i0: usize,
    style: DrivingStyle,
    dataset: &TrajectoryDataset,
    road: &RoadGeometry,
    options: &ValidationOptions,
) -> Scenario {
    let t0 = ego.t[i0];
    let state = ego.state(i0);
    let desired = match options.desired_speed {
        DesiredSpeedRule::AtStart => state.speed,
        DesiredSpeedRule::Fixed(v) => v,
    };
    let agents = dataset
        .vehicles
        .iter()
        .filter(|o| o.id != ev.vehicle)
        .filter_map(|o| {
            let samples = replay_samples(o, t0, t0 + RUN_S);
            let first = *samples.first()?;
            Some(AgentSpec {
                id: o.id.0,
                x_m: first.x_m,
                y_m: first.y_m,
                speed_mps: first.speed_mps,
                heading_rad: 0.0,
                length_m: o.length,
                width_m: o.width,
                behavior: Behavior::Replay { samples },
            })
        })
        .collect();
    Scenario {
        road: *road,
        agents,
        ego: EgoSpec {
            id: ev.vehicle.0,
            x_m: state.position.x,
            y_m: state.position.y,
            speed_mps: state.speed,
            heading_rad: state.heading,
            length_m: state.length,
            width_m: state.width,
            risk_threshold: None,
            desired_speed_mps: desired,
            style,
        },
        duration_s: RUN_S,
        seed: 0,
        start_time_s: t0,
    }
}

fn closest(track: &Track, t: f64) -> Option<&(f64, f64, f64, Lane)> {
    let i = track.partition_point(|p| p.0 < t - 1e-6);
    track.get(i).filter(|p| (p.0 - t).abs() <= 1e-6)
}

/// Replaces the vehicle of each event with `model` from 2 s before the
/// change for 4 s and compares it with the record. An event is correct
/// when the model enters the recorded target lane during the run. Unless
/// overridden in `options`, styles come from [`classify_driver_style`] over
/// all `events`; the planner uses the matching preset.
pub fn validate(
    events: &[LaneChangeEvent],
    dataset: &TrajectoryDataset,
    road: &RoadGeometry,
    model: &EgoModel,
    options: &ValidationOptions,
) -> Result<ValidationReport> {
    road.validate()?;
    let styles = match options.style {
        Some(style) => vec![style; events.len()],
        None => classify_driver_style(events),
    };
    let registry = match model {
        EgoModel::Planner { config, .. } => {
            config.validate()?;
            Some(PredictorRegistry::with_builtin(&config.prediction))
        }
        EgoModel::Identity => None,
    };
    let mut outcomes = Vec::new();
    let mut skipped = 0;
    for (ev, &style) in events.iter().zip(&styles) {
        let Some(ego) = dataset.vehicle(ev.vehicle) else {
            skipped += 1;
            continue;
        };
        let t0 = ev.t_change - WINDOW_BEFORE_S;
        let (Some(i0), Some(i_end)) = (ego.index_at(t0), ego.index_at(t0 + RUN_S)) else {
            skipped += 1;
            continue;
        };
        let track: Track = match (model, &registry) {
            (EgoModel::Planner { config, preference }, Some(registry)) => {
                let scenario = event_scenario(ev, ego, i0, style, dataset, road, options);
                let predictor = registry.get(&config.prediction.name)?;
                let trace = Simulation::new(&scenario, config, preference.as_ref(), predictor)?.run()?;
                trace.ticks.iter().map(|k| (k.t, k.ego.x, k.ego.y, k.ego.lane)).collect()
            }
            _ => (i0..=i_end).map(|i| (ego.t[i], ego.x[i], ego.y[i], road.lane_of(ego.x[i]))).collect(),
        };
        let (mut sq_lat, mut sq_lon, mut samples) = (0.0, 0.0, 0usize);
        let mut last = (0.0, 0.0);
        for i in i0..=i_end {
            let Some(&(_, x, y, _)) = closest(&track, ego.t[i]) else { continue };
            let (ex, ey) = (x - ego.x[i], y - ego.y[i]);
            sq_lat += ex * ex;
            sq_lon += ey * ey;
            samples += 1;
            last = (ex, ey);
        }
        let n = samples.max(1) as f64;
        outcomes.push(EventOutcome {
            vehicle: ev.vehicle,
            t_change: ev.t_change,
            from_lane: ev.from_lane,
            to_lane: ev.to_lane,
            style,
            correct: track.iter().any(|p| p.3 == ev.to_lane),
            rmse_lat: (sq_lat / n).sqrt(),
            rmse_lon: (sq_lon / n).sqrt(),
            final_lat_error: last.0.abs(),
            final_lon_error: last.1.abs(),
            sq_lat,
            sq_lon,
            samples,
        });
    }
    let of = |s: DrivingStyle| StyleMetrics::from_outcomes(outcomes.iter().filter(move |o| o.style == s));
    Ok(ValidationReport {
        conservative: of(DrivingStyle::Conservative),
        normal: of(DrivingStyle::Normal),
        aggressive: of(DrivingStyle::Aggressive),
        total: StyleMetrics::from_outcomes(outcomes.iter()),
        skipped,
        events: outcomes,
    })
}
