//! Movement clustering, cluster naming and modelling-trajectory selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stopbar::Stopbar;
use super::{Diagnostic, PipelineConfig, PipelineError};
use crate::clustering::{agglomerate, cluster_sizes, ClusterAssignment, DissimilarityMatrix, Linkage};
use crate::similarity::{composite_similarity, SimilarityConfig};
use crate::trajectory::{net_length, MovementLabel, Trajectory, Vec2};

pub const MODEL_FORMAT: &str = "turnmove-model";
pub const MODEL_VERSION: u32 = 1;

/// Pairwise composite dissimilarity over `items`, computed in parallel.
/// Entry order is fixed, so the matrix does not depend on thread scheduling.
pub fn similarity_matrix(
    items: &[&Trajectory],
    cfg: &SimilarityConfig,
    include_proximity: bool,
) -> Result<DissimilarityMatrix, PipelineError> {
    let n = items.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let upper: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| composite_similarity(items[i], items[j], cfg, include_proximity).s)
        .collect();
    Ok(DissimilarityMatrix::from_condensed(n, &upper)?)
}

/// Output of the movement clustering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementClusters {
    pub assignment: ClusterAssignment,
    /// Cluster indices smaller than `min_cluster_fraction * n`.
    pub outliers: Vec<usize>,
}

impl MovementClusters {
    pub fn is_outlier(&self, cluster: usize) -> bool {
        self.outliers.contains(&cluster)
    }
}

fn outlier_clusters(c: &ClusterAssignment, min_fraction: f64) -> Vec<usize> {
    let n = c.n() as f64;
    cluster_sizes(c)
        .iter()
        .enumerate()
        .filter(|(_, &s)| (s as f64) < min_fraction * n)
        .map(|(i, _)| i)
        .collect()
}

/// Single-linkage clustering of the valid set under the full composite
/// dissimilarity (proximity factor included).
///
/// With `min_cluster_fraction > 0`, clusters below the size floor are marked
/// as outliers and the dendrogram is cut further down until `k_movements`
/// regular clusters remain (or every item stands alone).
pub fn cluster_movements(valid: &[Trajectory], cfg: &PipelineConfig) -> Result<MovementClusters, PipelineError> {
    let k = cfg.k_movements;
    if valid.len() < k {
        return Err(PipelineError::TooFewTrajectories {
            have: valid.len(),
            need: k,
        });
    }
    let refs: Vec<&Trajectory> = valid.iter().collect();
    let m = similarity_matrix(&refs, &cfg.similarity, true)?;
    let mut cut = k;
    loop {
        let assignment = agglomerate(&m, cut, Linkage::Single)?;
        let outliers = if cfg.min_cluster_fraction > 0.0 {
            outlier_clusters(&assignment, cfg.min_cluster_fraction)
        } else {
            Vec::new()
        };
        if assignment.k() - outliers.len() >= k || cut == valid.len() {
            return Ok(MovementClusters { assignment, outliers });
        }
        cut += 1;
    }
}

/// Signed heading of `v` relative to the approach direction (image +y),
/// in degrees, measured counter-clockwise on a north-up map view. Positive
/// values bend to the driver's left.
pub fn heading_change_deg(v: Vec2) -> f64 {
    // flip y so the usual counter-clockwise convention holds
    let up = Vec2::new(v.x, -v.y);
    let approach = Vec2::new(0.0, -1.0);
    approach.cross(up).atan2(approach.dot(up)).to_degrees()
}

/// Mean unit net vector of a group of trajectories.
fn mean_direction(ts: &[&Trajectory]) -> Vec2 {
    let mut acc = Vec2::ZERO;
    for t in ts {
        let v = t.end() - t.start();
        let n = v.norm();
        if n > 0.0 {
            acc = Vec2::new(acc.x + v.x / n, acc.y + v.y / n);
        }
    }
    acc
}

/// Names clusters from their mean heading change. The cluster closest to
/// straight ahead becomes Through; the most left-bending of the remaining
/// clusters on its left becomes Left, the most right-bending on its right
/// becomes Right; anything else keeps a generic `Cluster(index)` name.
pub fn name_clusters(headings: &[(usize, f64)]) -> Vec<(usize, MovementLabel)> {
    let mut out: Vec<(usize, MovementLabel)> = headings.iter().map(|&(c, _)| (c, MovementLabel::Cluster(c as u32))).collect();
    if headings.is_empty() {
        return out;
    }
    let cmp = |a: f64, b: f64| a.total_cmp(&b);
    let (ti, &(_, th)) = headings
        .iter()
        .enumerate()
        .min_by(|a, b| cmp(a.1 .1.abs(), b.1 .1.abs()).then(a.1 .0.cmp(&b.1 .0)))
        .unwrap();
    out[ti].1 = MovementLabel::Through;
    let left = headings
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != ti && h.1 > th)
        .max_by(|a, b| cmp(a.1 .1, b.1 .1).then(b.1 .0.cmp(&a.1 .0)));
    if let Some((li, _)) = left {
        out[li].1 = MovementLabel::Left;
    }
    let right = headings
        .iter()
        .enumerate()
        .filter(|(i, h)| *i != ti && h.1 <= th)
        .min_by(|a, b| cmp(a.1 .1, b.1 .1).then(a.1 .0.cmp(&b.1 .0)));
    if let Some((ri, _)) = right {
        out[ri].1 = MovementLabel::Right;
    }
    out
}

/// One movement of a trained model with its modelling trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub label: MovementLabel,
    pub modelling: Vec<Trajectory>,
}

/// The trained artifact: stopbar plus labelled modelling trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MovementModel {
    pub format: String,
    pub version: u32,
    pub stopbar: Stopbar,
    pub movements: Vec<Movement>,
    pub config: PipelineConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    format: String,
    version: u32,
    stopbar: Stopbar,
    movements: Vec<Movement>,
    config: PipelineConfig,
}

impl TryFrom<RawModel> for MovementModel {
    type Error = PipelineError;

    fn try_from(r: RawModel) -> Result<Self, Self::Error> {
        MovementModel::new(r.stopbar, r.movements, r.config).and_then(|m| {
            if r.format != MODEL_FORMAT || r.version != MODEL_VERSION {
                Err(PipelineError::Model(format!(
                    "unsupported model format {}/{} (expected {MODEL_FORMAT}/{MODEL_VERSION})",
                    r.format, r.version
                )))
            } else {
                Ok(m)
            }
        })
    }
}

impl MovementModel {
    pub fn new(stopbar: Stopbar, movements: Vec<Movement>, config: PipelineConfig) -> Result<Self, PipelineError> {
        if !stopbar.y_sl.is_finite() {
            return Err(PipelineError::Model("stopbar is not finite".into()));
        }
        if movements.is_empty() {
            return Err(PipelineError::Model("model has no movements".into()));
        }
        for m in &movements {
            if m.label == MovementLabel::Unknown {
                return Err(PipelineError::Model("Unknown cannot be a trained movement".into()));
            }
            if m.modelling.is_empty() {
                return Err(PipelineError::Model(format!("movement {} has no modelling trajectory", m.label)));
            }
            if m.modelling.iter().flat_map(|t| t.points()).any(|p| p.y < stopbar.y_sl) {
                return Err(PipelineError::Model(format!(
                    "movement {} has modelling points above the stopbar",
                    m.label
                )));
            }
        }
        Ok(MovementModel {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            stopbar,
            movements,
            config,
        })
    }

    pub fn labels(&self) -> Vec<MovementLabel> {
        self.movements.iter().map(|m| m.label).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(s).map_err(|e| PipelineError::Model(e.to_string()))
    }
}

/// Longest trajectory by net length; ties go to the smallest vehicle id.
pub fn longest<'a>(ts: impl IntoIterator<Item = &'a Trajectory>) -> Option<&'a Trajectory> {
    ts.into_iter().max_by(|a, b| {
        net_length(a)
            .total_cmp(&net_length(b))
            .then_with(|| b.vehicle_id().cmp(a.vehicle_id()))
    })
}

/// Result of naming the movement clusters: cluster index → label, for the
/// non-outlier clusters only.
pub fn label_clusters(valid: &[Trajectory], clusters: &MovementClusters) -> Vec<(usize, MovementLabel)> {
    let members = clusters.assignment.members();
    let headings: Vec<(usize, f64)> = members
        .iter()
        .enumerate()
        .filter(|(c, _)| !clusters.is_outlier(*c))
        .map(|(c, idx)| {
            let ts: Vec<&Trajectory> = idx.iter().map(|&i| &valid[i]).collect();
            (c, heading_change_deg(mean_direction(&ts)))
        })
        .collect();
    name_clusters(&headings)
}

/// Picks modelling trajectories: each regular movement cluster is split into
/// lane-level sub-clusters (average linkage, no proximity factor) and the
/// longest member of every sub-cluster is kept.
pub fn select_modelling_trajectories(
    valid: &[Trajectory],
    clusters: &MovementClusters,
    stopbar: Stopbar,
    cfg: &PipelineConfig,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<MovementModel, PipelineError> {
    let members = clusters.assignment.members();
    for &c in &clusters.outliers {
        diagnostics.push(Diagnostic::OutlierCluster {
            cluster: c,
            size: members[c].len(),
        });
    }
    let mut movements = Vec::new();
    for (c, label) in label_clusters(valid, clusters) {
        let items: Vec<&Trajectory> = members[c].iter().map(|&i| &valid[i]).collect();
        let requested = cfg.lanes_for(label);
        let lanes = requested.min(items.len()).max(1);
        if lanes != requested {
            diagnostics.push(Diagnostic::LanesClamped {
                movement: label,
                requested,
                used: lanes,
            });
        }
        let modelling: Vec<Trajectory> = if lanes == 1 {
            vec![longest(items.iter().copied()).expect("non-empty cluster").clone()]
        } else {
            let m = similarity_matrix(&items, &cfg.similarity, false)?;
            let sub = agglomerate(&m, lanes, Linkage::Average)?;
            sub.members()
                .iter()
                .map(|lane| longest(lane.iter().map(|&i| items[i])).expect("non-empty").clone())
                .collect()
        };
        movements.push(Movement { label, modelling });
    }
    movements.sort_by_key(|m| m.label);
    MovementModel::new(stopbar, movements, cfg.clone())
}
