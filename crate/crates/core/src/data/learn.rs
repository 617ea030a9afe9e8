use serde::{Deserialize, Serialize};

use super::dataset::TrajectoryDataset;
use crate::config::RiskParams;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::lane_pref::{LanePreferenceTable, LaneRow, LaneStats, Provenance, RiskKnots, Z_LIMIT};
use crate::risk::single_agent_risk;
use crate::road::RoadGeometry;

/// Bin edges in standardized speed; bins are centred on −1, 0 and +1.
pub const BIN_EDGES: [f64; 4] = [-Z_LIMIT, -0.5, 0.5, Z_LIMIT];

/// Result of learning a lane-preference table from recorded traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedPreference {
    /// Normalized table (values divided by the largest bin mean).
    pub table: LanePreferenceTable,
    /// Mean risk per lane and bin before normalization; `None` for empty bins.
    pub raw: Vec<[Option<f64>; 3]>,
    /// Vehicle-ticks aggregated into each bin.
    pub counts: Vec<[u64; 3]>,
    /// Speed statistics per lane over the whole dataset.
    pub lane_stats: Vec<Option<LaneStats>>,
    /// Divisor applied to `raw`.
    pub scale: f64,
}

fn bin_of(z: f64) -> Option<usize> {
    if !(z.abs() <= Z_LIMIT) {
        None
    } else if z < BIN_EDGES[1] {
        Some(0)
    } else if z <= BIN_EDGES[2] {
        Some(1)
    } else {
        Some(2)
    }
}

/// Learns a lane-preference table: for every vehicle-tick the risk at the
/// vehicle's position from all other vehicles in the same frame is binned
/// by the vehicle's standardized speed within its lane, keeping
/// `|z| ≤ 1.5`. Lanes must already be assigned. Lanes whose speed deviation
/// is zero put every tick at `z = 0`.
pub fn learn_lane_preference(
    dataset: &TrajectoryDataset,
    road: &RoadGeometry,
    params: &RiskParams,
) -> Result<LearnedPreference> {
    road.validate()?;
    params.validate()?;
    let n = road.num_lanes;
    if dataset.vehicles.iter().any(|v| v.lane.len() != v.len()) {
        return Err(Error::invalid("lanes must be assigned before learning"));
    }

    let mut sum = vec![0.0f64; n];
    let mut sq = vec![0.0f64; n];
    let mut cnt = vec![0u64; n];
    for v in &dataset.vehicles {
        for (&lane, &u) in v.lane.iter().zip(&v.speed) {
            sum[lane - 1] += u;
            sq[lane - 1] += u * u;
            cnt[lane - 1] += 1;
        }
    }
    let lane_stats: Vec<Option<LaneStats>> = (0..n)
        .map(|l| {
            (cnt[l] > 0).then(|| {
                let k = cnt[l] as f64;
                let mean = sum[l] / k;
                LaneStats { mean, sigma: (sq[l] / k - mean * mean).max(0.0).sqrt() }
            })
        })
        .collect();

    let mut bin_sum = vec![[0.0f64; 3]; n];
    let mut counts = vec![[0u64; 3]; n];
    for (_, present) in dataset.by_frame() {
        for &(vi, si) in &present {
            let v = &dataset.vehicles[vi];
            let lane = v.lane[si];
            let stats = lane_stats[lane - 1].expect("lane has samples");
            let z = if stats.sigma > 0.0 { (v.speed[si] - stats.mean) / stats.sigma } else { 0.0 };
            let Some(bin) = bin_of(z) else { continue };
            let q = Vec2::new(v.x[si], v.y[si]);
            let mut risk = 0.0;
            for &(oj, sj) in &present {
                if oj == vi {
                    continue;
                }
                let o = &dataset.vehicles[oj];
                let p = Vec2::new(o.x[sj], o.y[sj]);
                let vel = Vec2::new(o.vx[sj], o.vy[sj]);
                risk += single_agent_risk(q, p, vel, o.length, o.width, params)?;
            }
            bin_sum[lane - 1][bin] += risk;
            counts[lane - 1][bin] += 1;
        }
    }

    let raw: Vec<[Option<f64>; 3]> = (0..n)
        .map(|l| std::array::from_fn(|b| (counts[l][b] > 0).then(|| bin_sum[l][b] / counts[l][b] as f64)))
        .collect();
    let max = raw.iter().flatten().flatten().copied().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { max } else { 1.0 };
    let lanes = raw
        .iter()
        .enumerate()
        .map(|(l, r)| {
            if r.iter().all(Option::is_none) {
                log::warn!("lane {} has no retained samples", l + 1);
            }
            LaneRow {
                lane: l + 1,
                risk_at: RiskKnots {
                    minus_sigma: r[0].map(|v| v / scale),
                    mean: r[1].map(|v| v / scale),
                    plus_sigma: r[2].map(|v| v / scale),
                },
            }
        })
        .collect();
    Ok(LearnedPreference {
        table: LanePreferenceTable { lanes, provenance: Provenance::Learned },
        raw,
        counts,
        lane_stats,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins() {
        assert_eq!(bin_of(-1.5), Some(0));
        assert_eq!(bin_of(-0.5), Some(1));
        assert_eq!(bin_of(0.5), Some(1));
        assert_eq!(bin_of(0.51), Some(2));
        assert_eq!(bin_of(1.51), None);
        assert_eq!(bin_of(f64::NAN), None);
    }
}
