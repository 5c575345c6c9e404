//! Trajectory domain types, CSV ingestion and the geometric primitives the
//! similarity measures are built on.
//!
//! Coordinates are image pixels: `x` grows to the right, `y` grows downward
//! and `y = 0` is the top edge of the frame.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: non-finite coordinate for vehicle {vehicle_id}")]
    NonFinite { line: u64, vehicle_id: String },
    #[error("line {line}: duplicate frame {frame} for vehicle {vehicle_id}")]
    DuplicateFrame {
        line: u64,
        vehicle_id: String,
        frame: u64,
    },
    #[error("trajectory {0} has no points")]
    Empty(String),
    #[error("trajectory {vehicle_id}: frames must be strictly increasing ({previous} then {next})")]
    NonIncreasing {
        vehicle_id: String,
        previous: u64,
        next: u64,
    },
    #[error("trajectory {0} contains a non-finite coordinate")]
    NonFinitePoint(String),
    #[error("duplicate vehicle id {0} in dataset")]
    DuplicateVehicle(String),
    #[error("trajectory {0} needs at least two points to define a direction")]
    Degenerate(String),
    #[error("csv output failed: {0}")]
    Write(String),
}

/// Plain 2-D vector / point in pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn is_zero(self) -> bool {
        self.x == 0.0 && self.y == 0.0
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;

    fn sub(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x - other.x, self.y - other.y)
    }
}

/// Squared Euclidean distance between two positions.
#[inline]
pub fn dist_sq(a: Vec2, b: Vec2) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy
}

#[inline]
pub fn dist(a: Vec2, b: Vec2) -> f64 {
    dist_sq(a, b).sqrt()
}

/// One detection of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
}

impl TrackPoint {
    pub fn new(frame: u64, x: f64, y: f64) -> Self {
        TrackPoint { frame, x, y }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Movement type of a vehicle at an approach.
///
/// `Cluster(k)` names a movement group that the automatic naming could not
/// map onto left/through/right. `Unknown` is only ever produced by
/// classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MovementLabel {
    Left,
    Through,
    Right,
    Cluster(u32),
    Unknown,
}

impl fmt::Display for MovementLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MovementLabel::Left => f.write_str("Left"),
            MovementLabel::Through => f.write_str("Through"),
            MovementLabel::Right => f.write_str("Right"),
            MovementLabel::Cluster(k) => write!(f, "Cluster{k}"),
            MovementLabel::Unknown => f.write_str("Unknown"),
        }
    }
}

#[derive(Debug, Error)]
#[error("unrecognised movement label {0:?}")]
pub struct ParseLabelError(pub String);

impl FromStr for MovementLabel {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        match lower.as_str() {
            "left" | "l" => return Ok(MovementLabel::Left),
            "through" | "t" | "straight" => return Ok(MovementLabel::Through),
            "right" | "r" => return Ok(MovementLabel::Right),
            "unknown" => return Ok(MovementLabel::Unknown),
            _ => {}
        }
        lower
            .strip_prefix("cluster")
            .map(|rest| rest.trim_start_matches(['-', '_', ' ']))
            .and_then(|n| n.parse::<u32>().ok())
            .map(MovementLabel::Cluster)
            .ok_or_else(|| ParseLabelError(t.to_string()))
    }
}

impl Serialize for MovementLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MovementLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered detections of one vehicle. Always non-empty, frames strictly
/// increasing, coordinates finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    vehicle_id: String,
    points: Vec<TrackPoint>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    vehicle_id: String,
    points: Vec<TrackPoint>,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = TrajectoryError;

    fn try_from(raw: RawTrajectory) -> Result<Self, Self::Error> {
        Trajectory::new(raw.vehicle_id, raw.points)
    }
}

impl Trajectory {
    pub fn new(
        vehicle_id: impl Into<String>,
        points: Vec<TrackPoint>,
    ) -> Result<Self, TrajectoryError> {
        let vehicle_id = vehicle_id.into();
        if points.is_empty() {
            return Err(TrajectoryError::Empty(vehicle_id));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(TrajectoryError::NonFinitePoint(vehicle_id));
        }
        for w in points.windows(2) {
            if w[1].frame <= w[0].frame {
                return Err(TrajectoryError::NonIncreasing {
                    vehicle_id,
                    previous: w[0].frame,
                    next: w[1].frame,
                });
            }
        }
        Ok(Trajectory { vehicle_id, points })
    }

    /// Builds a trajectory from bare positions, numbering frames from 0.
    pub fn from_xy(vehicle_id: impl Into<String>, xy: &[(f64, f64)]) -> Result<Self, TrajectoryError> {
        let points = xy
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| TrackPoint::new(i as u64, x, y))
            .collect();
        Trajectory::new(vehicle_id, points)
    }

    pub fn vehicle_id(&self) -> &str {
        &self.vehicle_id
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> Vec2 {
        self.points[0].pos()
    }

    pub fn end(&self) -> Vec2 {
        self.points[self.points.len() - 1].pos()
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = Vec2> + '_ {
        self.points.iter().map(TrackPoint::pos)
    }

    /// Keeps only the points with `y >= y_min`; `None` if nothing survives.
    pub fn retain_below(&self, y_min: f64) -> Option<Trajectory> {
        let points: Vec<TrackPoint> = self.points.iter().copied().filter(|p| p.y >= y_min).collect();
        if points.is_empty() {
            None
        } else {
            Some(Trajectory {
                vehicle_id: self.vehicle_id.clone(),
                points,
            })
        }
    }

    /// Keeps the first `n` points (at least one).
    pub fn prefix(&self, n: usize) -> Trajectory {
        let n = n.clamp(1, self.points.len());
        Trajectory {
            vehicle_id: self.vehicle_id.clone(),
            points: self.points[..n].to_vec(),
        }
    }

    pub fn with_id(&self, vehicle_id: impl Into<String>) -> Trajectory {
        Trajectory {
            vehicle_id: vehicle_id.into(),
            points: self.points.clone(),
        }
    }
}

/// Straight-line distance between the first and last point. This is the
/// trajectory length used to rank trajectories, not the arc length.
pub fn net_length(t: &Trajectory) -> f64 {
    dist(t.start(), t.end())
}

/// Vector from the first to the last point.
pub fn net_vector(t: &Trajectory) -> Result<Vec2, TrajectoryError> {
    if t.len() < 2 {
        return Err(TrajectoryError::Degenerate(t.vehicle_id.clone()));
    }
    Ok(t.end() - t.start())
}

/// All trajectories observed at one inbound approach.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApproachDataset {
    pub approach_id: String,
    trajectories: Vec<Trajectory>,
}

impl ApproachDataset {
    pub fn new(
        approach_id: impl Into<String>,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, TrajectoryError> {
        let mut seen = std::collections::HashSet::new();
        for t in &trajectories {
            if !seen.insert(t.vehicle_id()) {
                return Err(TrajectoryError::DuplicateVehicle(t.vehicle_id().to_string()));
            }
        }
        Ok(ApproachDataset {
            approach_id: approach_id.into(),
            trajectories,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, vehicle_id: &str) -> Option<&Trajectory> {
        self.trajectories.iter().find(|t| t.vehicle_id() == vehicle_id)
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    vehicle_id: String,
    frame: u64,
    x: f64,
    y: f64,
}

/// Loads a `vehicle_id,frame,x,y` CSV file. The approach id is the file stem.
pub fn load_trajectories(path: impl AsRef<Path>) -> Result<ApproachDataset, TrajectoryError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let approach_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_trajectories(file, approach_id)
}

/// Parses trajectory CSV from any reader. Rows may arrive in any order;
/// they are grouped by vehicle id (lexicographic order) and sorted by frame.
pub fn read_trajectories<R: Read>(
    reader: R,
    approach_id: impl Into<String>,
) -> Result<ApproachDataset, TrajectoryError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse_err = |e: csv::Error| TrajectoryError::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let mut groups: BTreeMap<String, Vec<(TrackPoint, u64)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(parse_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: CsvRow = record
            .deserialize(Some(&headers))
            .map_err(|e| TrajectoryError::Parse {
                line,
                message: e.to_string(),
            })?;
        if !row.x.is_finite() || !row.y.is_finite() {
            return Err(TrajectoryError::NonFinite {
                line,
                vehicle_id: row.vehicle_id,
            });
        }
        groups
            .entry(row.vehicle_id)
            .or_default()
            .push((TrackPoint::new(row.frame, row.x, row.y), line));
    }
    let mut trajectories = Vec::with_capacity(groups.len());
    for (vehicle_id, mut pts) in groups {
        pts.sort_by_key(|(p, line)| (p.frame, *line));
        for w in pts.windows(2) {
            if w[0].0.frame == w[1].0.frame {
                return Err(TrajectoryError::DuplicateFrame {
                    line: w[1].1,
                    vehicle_id,
                    frame: w[1].0.frame,
                });
            }
        }
        let points = pts.into_iter().map(|(p, _)| p).collect();
        trajectories.push(Trajectory::new(vehicle_id, points)?);
    }
    ApproachDataset::new(approach_id, trajectories)
}

/// Writes the dataset back out as trajectory CSV, one row per detection,
/// vehicles in dataset order. Floats use the shortest round-trip form.
pub fn write_trajectories<W: Write>(dataset: &ApproachDataset, writer: W) -> Result<(), TrajectoryError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| TrajectoryError::Write(e.to_string());
    w.write_record(["vehicle_id", "frame", "x", "y"]).map_err(err)?;
    for t in dataset.trajectories() {
        for p in t.points() {
            w.write_record([
                t.vehicle_id().to_string(),
                p.frame.to_string(),
                p.x.to_string(),
                p.y.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| TrajectoryError::Write(e.to_string()))?;
    Ok(())
}
