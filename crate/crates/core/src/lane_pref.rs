//! Learned lane preference: how much ambient risk a driver experiences in
//! each lane as a function of speed relative to that lane's traffic.
//!
//! The table stores three knots per lane, at one standard deviation slower
//! than the lane mean, at the mean, and one standard deviation faster. A
//! quadratic through the three knots gives a continuous lookup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road::Lane;

/// Relative speeds beyond this many standard deviations are clamped.
pub const Z_LIMIT: f64 = 1.5;

/// Mean and standard deviation of vehicle speed in one lane, m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneStats {
    pub mean: f64,
    pub sigma: f64,
}

impl LaneStats {
    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("lane speed statistics need a finite mean and positive sigma"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Values shipped with the library.
    Builtin,
    /// Values produced by the learning pipeline.
    Learned,
}

/// Risk knots of one lane. `None` marks a bin without data.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskKnots {
    pub minus_sigma: Option<f64>,
    pub mean: Option<f64>,
    pub plus_sigma: Option<f64>,
}

impl RiskKnots {
    pub fn new(minus_sigma: f64, mean: f64, plus_sigma: f64) -> Self {
        Self { minus_sigma: Some(minus_sigma), mean: Some(mean), plus_sigma: Some(plus_sigma) }
    }

    pub fn values(&self) -> [Option<f64>; 3] {
        [self.minus_sigma, self.mean, self.plus_sigma]
    }

    pub fn is_complete(&self) -> bool {
        self.values().iter().all(Option::is_some)
    }

    pub fn is_empty(&self) -> bool {
        self.values().iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneRow {
    pub lane: Lane,
    pub risk_at: RiskKnots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanePreferenceTable {
    pub lanes: Vec<LaneRow>,
    pub provenance: Provenance,
}

impl LanePreferenceTable {
    /// Five-lane reference table, lane 1 slowest.
    pub fn builtin() -> Self {
        let rows = [
            (0.4224, 0.4017, 0.4123),
            (0.5030, 0.4868, 0.4962),
            (0.5169, 0.4862, 0.5070),
            (0.4994, 0.4677, 0.4891),
            (0.4460, 0.4386, 0.4421),
        ];
        Self {
            lanes: rows
                .iter()
                .enumerate()
                .map(|(i, &(m, c, p))| LaneRow { lane: i + 1, risk_at: RiskKnots::new(m, c, p) })
                .collect(),
            provenance: Provenance::Builtin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lanes.is_empty() {
            return Err(Error::invalid("lane preference table has no lanes"));
        }
        for (i, row) in self.lanes.iter().enumerate() {
            if row.lane != i + 1 {
                return Err(Error::invalid("lane preference rows must be numbered 1..n in order"));
            }
            for v in row.risk_at.values().into_iter().flatten() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("lane {}: risk value {v} outside [0, 1]", row.lane)));
                }
            }
        }
        if self.lanes.iter().all(|r| r.risk_at.is_empty()) {
            return Err(Error::invalid("lane preference table has no values"));
        }
        Ok(())
    }

    /// Lanes whose row has at least one missing knot.
    pub fn incomplete_lanes(&self) -> Vec<Lane> {
        self.lanes.iter().filter(|r| !r.risk_at.is_complete()).map(|r| r.lane).collect()
    }
}

/// `a z² + b z + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    /// Unique quadratic through `(-1, minus)`, `(0, mean)`, `(1, plus)`.
    pub fn through_knots(minus: f64, mean: f64, plus: f64) -> Self {
        Self { a: (plus + minus) / 2.0 - mean, b: (plus - minus) / 2.0, c: mean }
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.a * z + self.b) * z + self.c
    }

    /// Location of the extremum, if the curve is not a line.
    pub fn vertex(&self) -> Option<f64> {
        (self.a != 0.0).then(|| -self.b / (2.0 * self.a))
    }
}

/// Fitted lookup built from a [`LanePreferenceTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct LanePreference {
    curves: Vec<Quadratic>,
}

impl LanePreference {
    /// Fits one quadratic per lane. Missing knots are replaced by the lane's
    /// mean value (or the mean of the knots present); lanes with no data
    /// reuse the nearest lane that has some.
    pub fn from_table(table: &LanePreferenceTable) -> Result<Self> {
        table.validate()?;
        let filled: Vec<Option<[f64; 3]>> = table
            .lanes
            .iter()
            .map(|row| {
                let vals = row.risk_at.values();
                let present: Vec<f64> = vals.iter().flatten().copied().collect();
                if present.is_empty() {
                    return None;
                }
                if present.len() < 3 {
                    log::warn!("lane {}: missing lane-preference knots, using lane mean", row.lane);
                }
                let fallback = row.risk_at.mean.unwrap_or(present.iter().sum::<f64>() / present.len() as f64);
                Some(vals.map(|v| v.unwrap_or(fallback)))
            })
            .collect();
        let curves = (0..filled.len())
            .map(|i| {
                let nearest = (0..filled.len())
                    .filter(|&j| filled[j].is_some())
                    .min_by_key(|&j| (i.abs_diff(j), j))
                    .expect("validated table has at least one populated lane");
                if nearest != i {
                    log::warn!("lane {}: no lane-preference data, reusing lane {}", i + 1, nearest + 1);
                }
                let [m, c, p] = filled[nearest].unwrap();
                Quadratic::through_knots(m, c, p)
            })
            .collect();
        Ok(Self { curves })
    }

    pub fn builtin() -> Self {
        Self::from_table(&LanePreferenceTable::builtin()).expect("builtin table is valid")
    }

    pub fn num_rows(&self) -> usize {
        self.curves.len()
    }

    pub fn curve(&self, row: Lane) -> Option<&Quadratic> {
        row.checked_sub(1).and_then(|i| self.curves.get(i))
    }

    /// Table row used for `lane` on a road with `num_lanes` lanes: the lane's
    /// fractional position across the road scaled onto the table rows.
    pub fn row_for(&self, lane: Lane, num_lanes: usize) -> Lane {
        let rows = self.curves.len();
        if num_lanes == rows {
            return lane.clamp(1, rows);
        }
        let scaled = (lane as f64 - 0.5) * rows as f64 / num_lanes as f64 + 0.5;
        (scaled.round() as usize).clamp(1, rows)
    }
}

/// One evaluation of the lane-preference function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneRiskQuery {
    /// Table row (see [`LanePreference::row_for`]).
    pub lane: Lane,
    pub mean_speed: f64,
    pub speed_sigma: f64,
    pub speed: f64,
}

impl LaneRiskQuery {
    pub fn new(lane: Lane, stats: LaneStats, speed: f64) -> Self {
        Self { lane, mean_speed: stats.mean, speed_sigma: stats.sigma, speed }
    }

    /// Relative speed in standard deviations, clamped to the fitted range.
    pub fn z(&self) -> Result<f64> {
        if !(self.speed_sigma > 0.0) {
            return Err(Error::invalid("lane speed sigma must be positive"));
        }
        let z = (self.speed - self.mean_speed) / self.speed_sigma;
        if z.is_nan() {
            return Err(Error::NonFinite("lane risk query"));
        }
        Ok(z.clamp(-Z_LIMIT, Z_LIMIT))
    }
}

/// Ambient lane risk in [0, 1].
pub fn lane_risk_lookup(query: &LaneRiskQuery, table: &LanePreference) -> Result<f64> {
    let z = query.z()?;
    let curve = table
        .curve(query.lane)
        .ok_or_else(|| Error::invalid(format!("lane {} not in lane preference table", query.lane)))?;
    Ok(curve.eval(z).clamp(0.0, 1.0))
}

/// Change in lane risk from `from` to `to`.
pub fn delta_lane_risk(from: &LaneRiskQuery, to: &LaneRiskQuery, table: &LanePreference) -> Result<f64> {
    Ok(lane_risk_lookup(to, table)? - lane_risk_lookup(from, table)?)
}
