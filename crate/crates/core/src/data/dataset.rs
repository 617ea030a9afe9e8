use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::road::{AgentId, AgentState, Lane, RoadGeometry};

/// Seconds between recorded frames (10 Hz).
pub const FRAME_PERIOD: f64 = 0.1;

const FEET: f64 = 0.3048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Meters,
    Feet,
}

impl Units {
    fn scale(self) -> f64 {
        match self {
            Units::Meters => 1.0,
            Units::Feet => FEET,
        }
    }
}

impl FromStr for Units {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meters" | "m" => Ok(Units::Meters),
            "feet" | "ft" => Ok(Units::Feet),
            other => Err(Error::invalid(format!("unknown unit system `{other}` (expected meters or feet)"))),
        }
    }
}

/// One vehicle's record, columns indexed by sample. Positions and speeds
/// are in meters and m/s regardless of the source units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSeries {
    pub id: AgentId,
    pub length: f64,
    pub width: f64,
    pub frame: Vec<i64>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub speed: Vec<f64>,
    /// Lane from `lane_of` on the current `x`.
    pub lane: Vec<Lane>,
    /// Lane column from the source file, if present.
    pub recorded_lane: Option<Vec<i64>>,
    /// The source file provided speeds.
    pub speed_recorded: bool,
}

impl VehicleSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// Index of the sample at time `t`, if it falls on a recorded frame.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start()) / FRAME_PERIOD).round();
        if k < 0.0 || (self.start() + k * FRAME_PERIOD - t).abs() > 1e-6 {
            return None;
        }
        let k = k as usize;
        (k < self.len()).then_some(k)
    }

    pub fn state(&self, i: usize) -> AgentState {
        let v = Vec2::new(self.vx[i], self.vy[i]);
        AgentState {
            id: self.id,
            position: Vec2::new(self.x[i], self.y[i]),
            speed: self.speed[i],
            heading: if v.norm() > 1e-9 { v.heading() } else { 0.0 },
            length: self.length,
            width: self.width,
        }
    }

    fn derive_velocity(&mut self) {
        let n = self.len();
        let diff = |v: &[f64], i: usize| -> f64 {
            if n < 2 {
                0.0
            } else if i == 0 {
                (v[1] - v[0]) / FRAME_PERIOD
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / FRAME_PERIOD
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * FRAME_PERIOD)
            }
        };
        self.vx = (0..n).map(|i| diff(&self.x, i)).collect();
        self.vy = (0..n).map(|i| diff(&self.y, i)).collect();
        if !self.speed_recorded {
            self.speed = self.vx.iter().zip(&self.vy).map(|(a, b)| a.hypot(*b)).collect();
        }
    }

    fn assign_lanes(&mut self, road: &RoadGeometry) {
        self.lane = self.x.iter().map(|&x| road.lane_of(x)).collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub source: String,
    /// Units of the source file; stored values are always metric.
    pub units: Units,
    /// Sorted by id.
    pub vehicles: Vec<VehicleSeries>,
}

impl TrajectoryDataset {
    pub fn vehicle(&self, id: AgentId) -> Option<&VehicleSeries> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok().map(|i| &self.vehicles[i])
    }

    /// `(vehicle index, sample index)` of every vehicle present in each
    /// frame, frames ascending and vehicles by id.
    pub fn by_frame(&self) -> BTreeMap<i64, Vec<(usize, usize)>> {
        let mut frames: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
        for (vi, v) in self.vehicles.iter().enumerate() {
            for (si, &f) in v.frame.iter().enumerate() {
                frames.entry(f).or_default().push((vi, si));
            }
        }
        frames
    }

    /// Recomputes lanes from the current lateral positions.
    pub fn assign_lanes(&mut self, road: &RoadGeometry) {
        for v in &mut self.vehicles {
            v.assign_lanes(road);
        }
    }

    pub fn num_samples(&self) -> usize {
        self.vehicles.iter().map(|v| v.len()).sum()
    }
}

struct Columns {
    id: usize,
    frame: usize,
    x: usize,
    y: usize,
    speed: Option<usize>,
    lane: Option<usize>,
    length: Option<usize>,
    width: Option<usize>,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
        let require = |name: &str| {
            find(name).ok_or_else(|| Error::invalid(format!("trajectory header is missing column `{name}`")))
        };
        Ok(Self {
            id: require("vehicle_id")?,
            frame: require("frame")?,
            x: require("x")?,
            y: require("y")?,
            speed: find("speed"),
            lane: find("lane"),
            length: find("length"),
            width: find("width"),
        })
    }
}

#[derive(Default)]
struct RawSeries {
    frame: Vec<i64>,
    x: Vec<f64>,
    y: Vec<f64>,
    speed: Vec<f64>,
    lane: Vec<i64>,
    length: Option<f64>,
    width: Option<f64>,
}

/// Reads a trajectory CSV with header `vehicle_id,frame,x,y` and optional
/// `speed`, `lane`, `length` and `width` columns (any order, extra columns
/// ignored). Frames are 10 Hz; `t = frame / 10`.
pub fn load_trajectories(path: &Path, units: Units) -> Result<TrajectoryDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut ds = parse_trajectories(&text, units)?;
    ds.source = path.display().to_string();
    Ok(ds)
}

pub fn parse_trajectories(text: &str, units: Units) -> Result<TrajectoryDataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let cols = Columns::from_header(reader.headers()?)?;
    let scale = units.scale();
    let mut raw: BTreeMap<u64, RawSeries> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(Error::Parse { line, message: e.to_string() }),
        }
        let field = |i: usize, name: &str| -> Result<&str> {
            record
                .get(i)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Parse { line, message: format!("missing {name}") })
        };
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = field(i, name)?;
            let v: f64 =
                s.parse().map_err(|_| Error::Parse { line, message: format!("{name} `{s}` is not a number") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("{name} is not finite") });
            }
            Ok(v)
        };
        let int = |i: usize, name: &str| -> Result<i64> {
            let s = field(i, name)?;
            s.parse().map_err(|_| Error::Parse { line, message: format!("{name} `{s}` is not an integer") })
        };
        let id = int(cols.id, "vehicle_id")?;
        let id =
            u64::try_from(id).map_err(|_| Error::Parse { line, message: "vehicle_id must be non-negative".into() })?;
        let frame = int(cols.frame, "frame")?;
        let series = raw.entry(id).or_default();
        if let Some(&prev) = series.frame.last() {
            if frame <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!("vehicle {id}: frame {frame} does not follow {prev}"),
                });
            }
            if frame != prev + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("vehicle {id}: frames {prev} to {frame} leave a gap"),
                });
            }
        }
        series.frame.push(frame);
        series.x.push(num(cols.x, "x")? * scale);
        series.y.push(num(cols.y, "y")? * scale);
        if let Some(c) = cols.speed {
            series.speed.push(num(c, "speed")? * scale);
        }
        if let Some(c) = cols.lane {
            series.lane.push(int(c, "lane")?);
        }
        if let Some(c) = cols.length {
            series.length = Some(num(c, "length")? * scale);
        }
        if let Some(c) = cols.width {
            series.width = Some(num(c, "width")? * scale);
        }
    }
    if raw.is_empty() {
        return Err(Error::invalid("no records"));
    }
    let vehicles = raw
        .into_iter()
        .map(|(id, r)| {
            let n = r.frame.len();
            let mut v = VehicleSeries {
                id: AgentId(id),
                length: r.length.unwrap_or(AgentState::DEFAULT_LENGTH),
                width: r.width.unwrap_or(AgentState::DEFAULT_WIDTH),
                t: r.frame.iter().map(|&f| f as f64 * FRAME_PERIOD).collect(),
                frame: r.frame,
                x: r.x,
                y: r.y,
                vx: Vec::new(),
                vy: Vec::new(),
                speed_recorded: cols.speed.is_some(),
                speed: r.speed,
                lane: Vec::new(),
                recorded_lane: cols.lane.map(|_| r.lane),
            };
            if !v.speed_recorded {
                v.speed = vec![0.0; n];
            }
            v.derive_velocity();
            v
        })
        .collect();
    Ok(TrajectoryDataset { source: String::from("<memory>"), units, vehicles })
}

/// Symmetric moving average of `x` and `y` over `window_s` seconds. Near
/// the ends of a record the window shrinks symmetrically, so affine signals
/// pass through unchanged. Velocities are re-derived by central differences
/// of the smoothed positions. Records shorter than the window are left as
/// they are.
pub fn smooth(dataset: &TrajectoryDataset, window_s: f64) -> Result<TrajectoryDataset> {
    let samples = (window_s / FRAME_PERIOD).round() as usize;
    if !(window_s.is_finite()) || samples < 3 {
        return Err(Error::invalid("smoothing window must span at least 3 samples"));
    }
    let half = samples / 2;
    let mut out = dataset.clone();
    for v in &mut out.vehicles {
        let n = v.len();
        if n < 2 * half + 1 {
            log::warn!("vehicle {}: record of {n} samples is shorter than the smoothing window", v.id);
            continue;
        }
        let avg = |s: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let h = half.min(i).min(n - 1 - i);
                    s[i - h..=i + h].iter().sum::<f64>() / (2 * h + 1) as f64
                })
                .collect()
        };
        v.x = avg(&v.x);
        v.y = avg(&v.y);
        v.derive_velocity();
    }
    Ok(out)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits vehicles in two halves by the parity of a hash of their id:
/// `(training, validation)`.
pub fn split_by_parity(dataset: &TrajectoryDataset) -> (TrajectoryDataset, TrajectoryDataset) {
    let (train, val): (Vec<_>, Vec<_>) = dataset.vehicles.iter().cloned().partition(|v| splitmix64(v.id.0) & 1 == 0);
    let with = |vehicles| TrajectoryDataset { source: dataset.source.clone(), units: dataset.units, vehicles };
    (with(train), with(val))
}
