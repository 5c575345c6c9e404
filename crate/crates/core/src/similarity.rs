//! Composite trajectory dissimilarity.
//!
//! Four ingredients, all in image space:
//!
//! * `D_S`: distance similarity, the *smaller* of the two directed Hausdorff
//!   distances, so a fragment lying on a longer track scores 0;
//! * `T_s`: angle between the shorter trajectory's net vector and the
//!   matching stretch of the longer trajectory;
//! * `D_R`: rear distance between the two end points;
//! * `P_E`: proximity factor `(T_s / divisor) * (D_R - D_S)`, zeroed when
//!   `D_R < D_S` and the angle exceeds the threshold.
//!
//! The composite is `S = w1*D_S + w2*T_s + w3*P_E`; lower means more similar.
//! `S` can be negative when `P_E` is.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{dist, dist_sq, net_length, Trajectory, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("degenerate direction vector comparing {first} with {second}")]
    Degenerate { first: String, second: String },
    #[error("invalid similarity config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityConfig {
    /// Weight on the distance similarity `D_S`.
    pub w1: f64,
    /// Weight on the angle similarity `T_s`.
    pub w2: f64,
    /// Weight on the proximity factor `P_E`.
    pub w3: f64,
    /// Above this angle (degrees) a negative proximity factor is suppressed.
    pub angle_threshold_deg: f64,
    /// Degrees-to-pixels scale inside the proximity factor.
    pub degree_divisor: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            angle_threshold_deg: 15.0,
            degree_divisor: 3.6,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        let bad = |m: &str| Err(SimilarityError::InvalidConfig(m.to_string()));
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3)] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.angle_threshold_deg > 0.0 && self.angle_threshold_deg <= 180.0) {
            return bad("angle_threshold_deg must lie in (0, 180]");
        }
        if !(self.degree_divisor.is_finite() && self.degree_divisor > 0.0) {
            return bad("degree_divisor must be > 0");
        }
        Ok(())
    }
}

/// Largest nearest-neighbour distance from `p` to `q`.
///
/// Early-exit scan: once a point of `p` is found closer to `q` than the
/// running maximum it cannot change the result.
pub fn directed_hausdorff(p: &Trajectory, q: &Trajectory) -> f64 {
    let qs: Vec<Vec2> = q.positions().collect();
    let mut cmax = 0.0_f64;
    for a in p.positions() {
        let mut cmin = f64::INFINITY;
        let mut dominated = false;
        for &b in &qs {
            let d = dist_sq(a, b);
            if d < cmax {
                dominated = true;
                break;
            }
            if d < cmin {
                cmin = d;
            }
        }
        if !dominated && cmin > cmax {
            cmax = cmin;
        }
    }
    cmax.sqrt()
}

/// `D_S`: the smaller of the two directed Hausdorff distances.
pub fn distance_similarity(i: &Trajectory, j: &Trajectory) -> f64 {
    directed_hausdorff(i, j).min(directed_hausdorff(j, i))
}

/// Index of the point of `t` nearest to `target`; lowest index wins ties.
fn nearest_index(t: &Trajectory, target: Vec2) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, p) in t.positions().enumerate() {
        let d = dist_sq(p, target);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Vector along `j` from its point nearest `i`'s start to its point nearest
/// `i`'s end.
pub fn matched_segment_vector(i: &Trajectory, j: &Trajectory) -> Vec2 {
    let a = nearest_index(j, i.start());
    let b = nearest_index(j, i.end());
    let pts = j.points();
    pts[b].pos() - pts[a].pos()
}

/// Unsigned angle between two vectors in degrees, in `[0, 180]`.
pub fn vector_angle_deg(u: Vec2, v: Vec2) -> f64 {
    u.cross(v).abs().atan2(u.dot(v)).to_degrees()
}

fn own_vector(t: &Trajectory) -> Vec2 {
    // single-point tracks have no direction; treat as zero
    t.end() - t.start()
}

/// `A_d(i, j)`: angle between `i`'s net vector and the matched segment of `j`.
pub fn angle_difference(i: &Trajectory, j: &Trajectory) -> Result<f64, SimilarityError> {
    let vi = own_vector(i);
    let vji = matched_segment_vector(i, j);
    if i.len() < 2 || vi.is_zero() || vji.is_zero() {
        return Err(SimilarityError::Degenerate {
            first: i.vehicle_id().to_string(),
            second: j.vehicle_id().to_string(),
        });
    }
    Ok(vector_angle_deg(vi, vji))
}

fn cmp_points(a: &Trajectory, b: &Trajectory) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.points()
            .iter()
            .zip(b.points())
            .map(|(p, q)| {
                p.frame
                    .cmp(&q.frame)
                    .then(p.x.total_cmp(&q.x))
                    .then(p.y.total_cmp(&q.y))
            })
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Orders a pair so the first element is the one whose net vector enters the
/// angle: shorter net length first; equal lengths fall back to vehicle id and
/// then to the point data, which makes `T_s` symmetric.
fn shorter_first<'a>(i: &'a Trajectory, j: &'a Trajectory) -> (&'a Trajectory, &'a Trajectory) {
    let ord = net_length(i)
        .total_cmp(&net_length(j))
        .then_with(|| i.vehicle_id().cmp(j.vehicle_id()))
        .then_with(|| cmp_points(i, j));
    if ord == Ordering::Greater {
        (j, i)
    } else {
        (i, j)
    }
}

/// `T_s(i, j)` without degeneracy handling.
pub fn angle_similarity(i: &Trajectory, j: &Trajectory) -> Result<f64, SimilarityError> {
    let (a, b) = shorter_first(i, j);
    angle_difference(a, b)
}

/// Which fallback replaced an undefined angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleFallback {
    /// Both vectors were zero-length; the angle is taken as 0.
    BothDegenerate,
    /// One vector was zero-length; the angle is taken as the threshold.
    OneDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleOutcome {
    pub degrees: f64,
    pub fallback: Option<AngleFallback>,
}

/// `T_s(i, j)` with the degenerate-vector fallbacks applied.
pub fn angle_similarity_or_fallback(
    i: &Trajectory,
    j: &Trajectory,
    cfg: &SimilarityConfig,
) -> AngleOutcome {
    let (a, b) = shorter_first(i, j);
    let va = own_vector(a);
    let vb = matched_segment_vector(a, b);
    match (va.is_zero() || a.len() < 2, vb.is_zero()) {
        (false, false) => AngleOutcome {
            degrees: vector_angle_deg(va, vb),
            fallback: None,
        },
        (true, true) => AngleOutcome {
            degrees: 0.0,
            fallback: Some(AngleFallback::BothDegenerate),
        },
        _ => AngleOutcome {
            degrees: cfg.angle_threshold_deg,
            fallback: Some(AngleFallback::OneDegenerate),
        },
    }
}

/// `D_R`: distance between the two end points.
pub fn rear_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    dist(a.end(), b.end())
}

/// Proximity factor from already computed components.
pub fn proximity_term(d_s: f64, d_r: f64, t_s: f64, cfg: &SimilarityConfig) -> f64 {
    if d_r < d_s && t_s > cfg.angle_threshold_deg {
        0.0
    } else {
        (t_s / cfg.degree_divisor) * (d_r - d_s)
    }
}

/// `P_E(i, j)`.
pub fn proximity_factor(i: &Trajectory, j: &Trajectory, cfg: &SimilarityConfig) -> f64 {
    let d_s = distance_similarity(i, j);
    let d_r = rear_distance(i, j);
    let t_s = angle_similarity_or_fallback(i, j, cfg).degrees;
    proximity_term(d_s, d_r, t_s, cfg)
}

/// Every component of one pairwise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub d_s: f64,
    pub t_s: f64,
    pub d_r: f64,
    pub p_e: f64,
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_fallback: Option<AngleFallback>,
}

/// `S(i, j)`. With `include_proximity == false` the proximity factor is
/// recorded as 0 and left out of the sum.
pub fn composite_similarity(
    i: &Trajectory,
    j: &Trajectory,
    cfg: &SimilarityConfig,
    include_proximity: bool,
) -> SimilarityBreakdown {
    let d_s = distance_similarity(i, j);
    let d_r = rear_distance(i, j);
    let angle = angle_similarity_or_fallback(i, j, cfg);
    let t_s = angle.degrees;
    let (p_e, s) = if include_proximity {
        let p_e = proximity_term(d_s, d_r, t_s, cfg);
        (p_e, cfg.w1 * d_s + cfg.w2 * t_s + cfg.w3 * p_e)
    } else {
        (0.0, cfg.w1 * d_s + cfg.w2 * t_s)
    };
    SimilarityBreakdown {
        d_s,
        t_s,
        d_r,
        p_e,
        s,
        angle_fallback: angle.fallback,
    }
}
