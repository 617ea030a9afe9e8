//! Forward-looking probabilistic risk cost.
//!
//! Each vehicle contributes a rectangular higher-order Gaussian centred on
//! its (predicted) position, stretched by its speed and skewed along its
//! velocity by a sigmoid. Predicted trajectories contribute in proportion to
//! their probability, so the field at one time step is bounded by the number
//! of vehicles.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::config::RiskParams;
use crate::error::{ensure_finite, Error, Result};
use crate::geometry::Vec2;
use crate::prediction::PredictedTrajectorySet;

/// Risk at `q` from one vehicle at `position` moving with `velocity`.
pub fn single_agent_risk(
    q: Vec2,
    position: Vec2,
    velocity: Vec2,
    length: f64,
    width: f64,
    params: &RiskParams,
) -> Result<f64> {
    if !(q.is_finite() && position.is_finite() && velocity.is_finite()) {
        return Err(Error::NonFinite("risk input"));
    }
    ensure_finite(length, "vehicle length")?;
    ensure_finite(width, "vehicle width")?;
    if !(length > 0.0 && width > 0.0) {
        return Err(Error::invalid("vehicle footprint must be positive"));
    }
    Ok(risk_kernel(q, position, velocity, length, width, params))
}

#[inline]
pub(crate) fn risk_kernel(
    q: Vec2,
    position: Vec2,
    velocity: Vec2,
    length: f64,
    width: f64,
    params: &RiskParams,
) -> f64 {
    let speed = velocity.norm();
    let sigma_x = width / 2.0 + params.lateral_speed_gain * speed;
    let sigma_y = length / 2.0 + params.longitudinal_speed_gain * speed;
    let d = q - position;
    let ex = (d.x * d.x / (sigma_x * sigma_x)).powf(params.beta);
    let ey = (d.y * d.y / (sigma_y * sigma_y)).powf(params.beta);
    let gauss = (-ex - ey).exp();
    if gauss == 0.0 {
        return 0.0;
    }
    let skew = params.velocity_skew.sign() * params.alpha * velocity.dot(d);
    gauss / (1.0 + skew.exp())
}

fn check_step(predictions: &[PredictedTrajectorySet], step: usize) -> Result<()> {
    for set in predictions {
        for tr in &set.trajectories {
            if step == 0 || step > tr.points.len() {
                return Err(Error::StepOutOfRange { step, max: tr.points.len() });
            }
        }
    }
    Ok(())
}

/// Probability-weighted risk at `q` from every predicted trajectory at
/// trajectory point `step` (1-based).
pub fn multimodal_risk(
    q: Vec2,
    predictions: &[PredictedTrajectorySet],
    step: usize,
    params: &RiskParams,
) -> Result<f64> {
    if !q.is_finite() {
        return Err(Error::NonFinite("risk query point"));
    }
    check_step(predictions, step)?;
    Ok(multimodal_kernel(q, predictions, step, params))
}

pub(crate) fn multimodal_kernel(
    q: Vec2,
    predictions: &[PredictedTrajectorySet],
    step: usize,
    params: &RiskParams,
) -> f64 {
    let mut total = 0.0;
    for set in predictions {
        for tr in &set.trajectories {
            if tr.probability == 0.0 {
                continue;
            }
            let p = &tr.points[step - 1];
            total += tr.probability * risk_kernel(q, p.position, p.velocity, set.length, set.width, params);
        }
    }
    total
}

/// Regular sampling grid: `nx` columns across the road starting at
/// `origin.x`, `ny` rows along it starting at `origin.y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec2,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point of cell `(ix, iy)`.
    pub fn point(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(self.origin.x + ix as f64 * self.dx, self.origin.y + iy as f64 * self.dy)
    }

    /// Points in storage order: row by row along `y`, `x` fastest.
    pub fn points(&self) -> impl Iterator<Item = Vec2> + '_ {
        (0..self.ny).flat_map(move |iy| (0..self.nx).map(move |ix| self.point(ix, iy)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskField {
    pub step: usize,
    /// Seconds after the prediction time.
    pub t: f64,
    pub grid: GridSpec,
    /// `ny * nx` values, row-major with `x` fastest.
    pub values: Vec<f64>,
}

impl RiskField {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.nx + ix]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// CSV with header `i,t_s,x_m,y_m,risk`, one row per grid point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,t_s,x_m,y_m,risk\n");
        self.append_csv_rows(&mut out);
        out
    }

    pub fn append_csv_rows(&self, out: &mut String) {
        for (q, v) in self.grid.points().zip(&self.values) {
            let _ = writeln!(out, "{},{},{},{},{}", self.step, self.t, q.x, q.y, v);
        }
    }
}

/// Samples the risk field at trajectory point `step` over `grid`.
pub fn sample_field(
    predictions: &[PredictedTrajectorySet],
    step: usize,
    point_period: f64,
    grid: &GridSpec,
    params: &RiskParams,
) -> Result<RiskField> {
    if grid.is_empty() {
        return Err(Error::invalid("risk grid has no cells"));
    }
    if !(grid.origin.is_finite() && grid.dx.is_finite() && grid.dy.is_finite()) {
        return Err(Error::NonFinite("risk grid"));
    }
    check_step(predictions, step)?;
    let values = grid.points().map(|q| multimodal_kernel(q, predictions, step, params)).collect();
    Ok(RiskField { step, t: step as f64 * point_period, grid: *grid, values })
}

/// Admissible region of a field under a planning threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub threshold: f64,
    pub mask: Vec<bool>,
}

impl LevelSet {
    pub fn admissible_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Points whose risk is at or below `threshold`.
pub fn level_set(field: &RiskField, threshold: f64) -> LevelSet {
    LevelSet { threshold, mask: field.values.iter().map(|&v| v <= threshold).collect() }
}
