//! Seeded synthetic approach scenes with ground-truth movement labels.
//!
//! Vehicles travel down the image (+y). Lanes are laid out left to right as
//! right-turn lanes, through lanes, then left-turn lanes, `lane_spacing`
//! apart and centred in the frame. Through paths are straight; turns are a
//! straight lead-in, a quarter circle (right turns bend toward -x, left
//! turns toward +x) and a straight exit.
//!
//! Randomness comes from [`SceneRng`], so a seed gives the same scene on
//! every platform.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{LineBasedSpec, LinePair, VirtualLine};
use crate::trajectory::{ApproachDataset, MovementLabel, TrackPoint, Trajectory, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("scene has no vehicles")]
    NoVehicles,
    #[error("invalid scene: {0}")]
    Invalid(String),
}

/// ChaCha8 stream seeded from a `u64`. Its output is fixed across `rand_chacha`
/// releases, so scenes stay reproducible.
#[derive(Debug, Clone)]
pub struct SceneRng(ChaCha8Rng);

impl SceneRng {
    pub fn new(seed: u64) -> Self {
        SceneRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.0.random()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n); `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        v.shuffle(&mut self.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementSpec {
    pub label: MovementLabel,
    pub lanes: usize,
    /// Vehicles generated in each lane.
    pub per_lane: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnGeometry {
    /// Straight distance below the stop zone before the arc begins.
    pub lead_in: f64,
    pub radius: f64,
    pub exit_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGeometry {
    pub lane_spacing: f64,
    /// y where every track starts.
    pub approach_y: f64,
    /// Nominal stop zone y.
    pub stop_y: f64,
    /// Stop positions are uniform in `stop_y ± stop_jitter`.
    pub stop_jitter: f64,
    /// Extra frames a stopping vehicle stays put, inclusive range.
    pub dwell_frames: (u32, u32),
    /// Per-frame travel in pixels, uniform range.
    pub speed: (f64, f64),
    /// y where through paths end.
    pub through_end_y: f64,
    /// Start each track at a random offset along its path; when false every
    /// track starts exactly at `approach_y`.
    pub random_phase: bool,
    pub right_turn: TurnGeometry,
    pub left_turn: TurnGeometry,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        SceneGeometry {
            lane_spacing: 40.0,
            approach_y: 150.0,
            stop_y: 300.0,
            stop_jitter: 6.0,
            dwell_frames: (2, 6),
            speed: (6.0, 10.0),
            through_end_y: 600.0,
            random_phase: true,
            right_turn: TurnGeometry {
                lead_in: 40.0,
                radius: 60.0,
                exit_length: 150.0,
            },
            left_turn: TurnGeometry {
                lead_in: 100.0,
                radius: 120.0,
                exit_length: 150.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub frame_size: (f64, f64),
    pub movements: Vec<MovementSpec>,
    pub noise_sigma: f64,
    /// Share of vehicles whose tail is cut off.
    pub truncation_fraction: f64,
    /// Fraction of a truncated track's points removed from its tail.
    pub truncation_range: (f64, f64),
    /// Share of vehicles that dwell in the stop zone.
    pub stop_fraction: f64,
    pub id_prefix: String,
    pub geometry: SceneGeometry,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 1,
            frame_size: (800.0, 700.0),
            movements: vec![
                MovementSpec {
                    label: MovementLabel::Left,
                    lanes: 1,
                    per_lane: 20,
                },
                MovementSpec {
                    label: MovementLabel::Through,
                    lanes: 1,
                    per_lane: 20,
                },
                MovementSpec {
                    label: MovementLabel::Right,
                    lanes: 1,
                    per_lane: 20,
                },
            ],
            noise_sigma: 2.0,
            truncation_fraction: 0.2,
            truncation_range: (0.25, 0.5),
            stop_fraction: 0.4,
            id_prefix: "v".into(),
            geometry: SceneGeometry::default(),
        }
    }
}

/// Noise-free centreline of one lane.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneTemplate {
    pub label: MovementLabel,
    pub lane: usize,
    pub x: f64,
    pub turn: Option<(TurnGeometry, f64)>,
    pub approach_y: f64,
    pub straight_end_y: f64,
}

impl LaneTemplate {
    pub fn length(&self) -> f64 {
        let straight = self.straight_end_y - self.approach_y;
        match self.turn {
            None => straight,
            Some((g, _)) => straight + FRAC_PI_2 * g.radius + g.exit_length,
        }
    }

    /// Point at arc length `s`, clamped to the template.
    pub fn at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let straight = self.straight_end_y - self.approach_y;
        if s <= straight {
            return Vec2::new(self.x, self.approach_y + s);
        }
        let (g, side) = self.turn.expect("past the straight part only on turns");
        let arc = FRAC_PI_2 * g.radius;
        let cx = self.x + side * g.radius;
        let cy = self.straight_end_y;
        if s <= straight + arc {
            let phi = (s - straight) / g.radius;
            return Vec2::new(cx - side * g.radius * phi.cos(), cy + g.radius * phi.sin());
        }
        Vec2::new(cx + side * (s - straight - arc), cy + g.radius)
    }

    pub fn end(&self) -> Vec2 {
        self.at(self.length())
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        let g = &self.geometry;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.truncation_fraction) {
            return bad("truncation_fraction must lie in [0, 1)");
        }
        let (lo, hi) = self.truncation_range;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return bad("truncation_range must satisfy 0 <= min <= max < 1");
        }
        if !(0.0..=1.0).contains(&self.stop_fraction) {
            return bad("stop_fraction must lie in [0, 1]");
        }
        if !(g.speed.0 > 0.0 && g.speed.0 <= g.speed.1) {
            return bad("speed range must be positive and ordered");
        }
        if g.dwell_frames.0 < 2 || g.dwell_frames.0 > g.dwell_frames.1 {
            return bad("dwell_frames must be ordered and at least 2");
        }
        if !(g.lane_spacing > 0.0 && g.stop_jitter >= 0.0) {
            return bad("lane_spacing must be positive and stop_jitter >= 0");
        }
        if !(g.approach_y < g.stop_y - g.stop_jitter && g.stop_y + g.stop_jitter < g.through_end_y) {
            return bad("stop zone must lie between approach_y and through_end_y");
        }
        for t in [g.left_turn, g.right_turn] {
            if !(t.lead_in >= 0.0 && t.radius > 0.0 && t.exit_length >= 0.0) {
                return bad("turn geometry must be non-negative with positive radius");
            }
            if t.lead_in < g.stop_jitter {
                return bad("turn lead_in must clear the stop zone");
            }
        }
        for m in &self.movements {
            if !matches!(m.label, MovementLabel::Left | MovementLabel::Through | MovementLabel::Right) {
                return bad("scene movements must be Left, Through or Right");
            }
        }
        let labels: BTreeSet<MovementLabel> = self.movements.iter().map(|m| m.label).collect();
        if labels.len() != self.movements.len() {
            return bad("each movement may appear once");
        }
        if self.vehicle_count() == 0 {
            return Err(SynthError::NoVehicles);
        }
        Ok(())
    }

    pub fn vehicle_count(&self) -> usize {
        self.movements.iter().map(|m| m.lanes * m.per_lane).sum()
    }

    fn lanes_of(&self, label: MovementLabel) -> usize {
        self.movements.iter().filter(|m| m.label == label).map(|m| m.lanes).sum()
    }

    /// Lane centrelines in left-to-right order.
    pub fn templates(&self) -> Vec<LaneTemplate> {
        let g = &self.geometry;
        let order = [MovementLabel::Right, MovementLabel::Through, MovementLabel::Left];
        let total: usize = order.iter().map(|l| self.lanes_of(*l)).sum();
        let x0 = self.frame_size.0 / 2.0 - (total.saturating_sub(1)) as f64 * g.lane_spacing / 2.0;
        let mut out = Vec::with_capacity(total);
        for label in order {
            for lane in 0..self.lanes_of(label) {
                let x = x0 + out.len() as f64 * g.lane_spacing;
                let (turn, straight_end_y) = match label {
                    MovementLabel::Right => (Some((g.right_turn, -1.0)), g.stop_y + g.right_turn.lead_in),
                    MovementLabel::Left => (Some((g.left_turn, 1.0)), g.stop_y + g.left_turn.lead_in),
                    _ => (None, g.through_end_y),
                };
                out.push(LaneTemplate {
                    label,
                    lane,
                    x,
                    turn,
                    approach_y: g.approach_y,
                    straight_end_y,
                });
            }
        }
        out
    }

    /// Entry/exit line pairs for the line-based classifier. Entry lines sit
    /// 20 px below the approach start; exit lines 20 px before the end of the
    /// paths, so only tracks that run to completion cross them.
    pub fn reference_lines(&self) -> Option<LineBasedSpec> {
        let templates = self.templates();
        let half = self.geometry.lane_spacing / 2.0;
        let margin = 20.0;
        let mut pairs = Vec::new();
        for label in [MovementLabel::Left, MovementLabel::Through, MovementLabel::Right] {
            let lanes: Vec<&LaneTemplate> = templates.iter().filter(|t| t.label == label).collect();
            if lanes.is_empty() {
                continue;
            }
            let xmin = lanes.iter().map(|t| t.x).fold(f64::INFINITY, f64::min);
            let xmax = lanes.iter().map(|t| t.x).fold(f64::NEG_INFINITY, f64::max);
            let ey = self.geometry.approach_y + margin;
            let entry = VirtualLine::new(Vec2::new(xmin - half, ey), Vec2::new(xmax + half, ey)).ok()?;
            let exit = match lanes[0].turn {
                None => {
                    let y = self.geometry.through_end_y - margin;
                    VirtualLine::new(Vec2::new(xmin - half, y), Vec2::new(xmax + half, y)).ok()?
                }
                Some((_, side)) => {
                    let ends: Vec<Vec2> = lanes.iter().map(|t| t.end()).collect();
                    let x = if side > 0.0 {
                        ends.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - margin
                    } else {
                        ends.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + margin
                    };
                    let ymin = ends.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
                    let ymax = ends.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
                    VirtualLine::new(Vec2::new(x, ymin - half), Vec2::new(x, ymax + half)).ok()?
                }
            };
            pairs.push(LinePair { label, entry, exit });
        }
        LineBasedSpec::new(pairs).ok()
    }
}

/// A generated scene and what is known about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dataset: ApproachDataset,
    pub truth: BTreeMap<String, MovementLabel>,
    /// Lane index (left-to-right) of each vehicle.
    pub lane: BTreeMap<String, usize>,
    pub truncated: BTreeSet<String>,
    /// Noisy y of every vehicle's dwell position.
    pub stop_ys: Vec<f64>,
}

fn pick(rng: &mut SceneRng, n: usize, fraction: f64) -> Vec<bool> {
    let k = (fraction * n as f64).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < k.min(n)).collect();
    rng.shuffle(&mut flags);
    flags
}

pub fn generate(spec: &SceneSpec) -> Result<Scene, SynthError> {
    spec.validate()?;
    let g = &spec.geometry;
    let mut rng = SceneRng::new(spec.seed);
    let templates = spec.templates();

    let mut slots: Vec<usize> = Vec::new();
    for (ti, t) in templates.iter().enumerate() {
        let per_lane = spec
            .movements
            .iter()
            .find(|m| m.label == t.label)
            .map_or(0, |m| m.per_lane);
        slots.extend(std::iter::repeat_n(ti, per_lane));
    }
    rng.shuffle(&mut slots);
    let n = slots.len();
    let stops = pick(&mut rng, n, spec.stop_fraction);
    let cuts = pick(&mut rng, n, spec.truncation_fraction);
    let width = n.to_string().len().max(4);

    let mut scene = Scene {
        dataset: ApproachDataset::default(),
        truth: BTreeMap::new(),
        lane: BTreeMap::new(),
        truncated: BTreeSet::new(),
        stop_ys: Vec::new(),
    };
    let mut trajectories = Vec::with_capacity(n);
    for (i, &ti) in slots.iter().enumerate() {
        let t = &templates[ti];
        let id = format!("{}{:0width$}", spec.id_prefix, i);
        let speed = rng.range(g.speed.0, g.speed.1);
        let length = t.length();
        let stop_s = stops[i].then(|| rng.range(g.stop_y - g.stop_jitter, g.stop_y + g.stop_jitter) - t.approach_y);
        let dwell = g.dwell_frames.0 + rng.below((g.dwell_frames.1 - g.dwell_frames.0 + 1) as usize) as u32;

        let phase = rng.range(0.0, speed);
        let mut arc = vec![if g.random_phase { phase } else { 0.0 }];
        let mut stop_index = None;
        loop {
            let s = *arc.last().expect("non-empty") + speed;
            if let Some(ss) = stop_s {
                if stop_index.is_none() && s > ss {
                    stop_index = Some(arc.len());
                    arc.push(ss);
                }
            }
            if s > length {
                break;
            }
            arc.push(s);
        }

        let mut points = Vec::with_capacity(arc.len() + dwell as usize);
        let mut frame = (i as u64) * 7;
        for (k, s) in arc.iter().enumerate() {
            let p = t.at(*s);
            let x = p.x + spec.noise_sigma * rng.normal();
            let y = p.y + spec.noise_sigma * rng.normal();
            let repeats = if stop_index == Some(k) {
                scene.stop_ys.push(y);
                1 + dwell
            } else {
                1
            };
            for _ in 0..repeats {
                points.push(TrackPoint::new(frame, x, y));
                frame += 1;
            }
        }
        if cuts[i] {
            let r = rng.range(spec.truncation_range.0, spec.truncation_range.1);
            let keep = points.len() - (r * points.len() as f64).round() as usize;
            points.truncate(keep.max(2));
            scene.truncated.insert(id.clone());
        }
        scene.truth.insert(id.clone(), t.label);
        scene.lane.insert(id.clone(), ti);
        trajectories.push(Trajectory::new(id, points).map_err(|e| SynthError::Invalid(e.to_string()))?);
    }
    scene.dataset = ApproachDataset::new(format!("scene{}", spec.seed), trajectories)
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    Ok(scene)
}
