//! The four-stage movement classifier: stopbar placement, movement
//! clustering, modelling-trajectory selection, similarity-based assignment.

mod assign;
mod movements;
mod stopbar;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusteringError;
use crate::similarity::SimilarityConfig;
use crate::trajectory::{ApproachDataset, MovementLabel};

pub use assign::{assign_movement, classify_dataset, Assignment, ClassificationResult, MovementScore};
pub use movements::{
    cluster_movements, heading_change_deg, label_clusters, longest, name_clusters, select_modelling_trajectories,
    similarity_matrix, Movement, MovementClusters, MovementModel, MODEL_FORMAT, MODEL_VERSION,
};
pub use stopbar::{
    extract_valid_set, find_stopbar, percentile_linear, stopped_locations, Stopbar, StopbarEstimate, ValidSet,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stopbar: dataset is empty")]
    EmptyDataset,
    #[error("valid set: no trajectory keeps {min_points} or more points below the stopbar")]
    EmptyValidSet { min_points: usize },
    #[error("clustering: {have} usable trajectories, need at least {need}")]
    TooFewTrajectories { have: usize, need: usize },
    #[error("clustering: {0}")]
    Clustering(#[from] ClusteringError),
    #[error("config: {0}")]
    Config(String),
    #[error("model: {0}")]
    Model(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub similarity: SimilarityConfig,
    /// Number of movement clusters to extract.
    pub k_movements: usize,
    /// Lanes per named movement; movements not listed use one lane.
    pub lanes_per_movement: BTreeMap<MovementLabel, usize>,
    /// Largest per-frame displacement (pixels) still counted as stopped.
    pub stop_displacement_tolerance: f64,
    /// Points a trajectory must keep below the stopbar to enter training.
    pub min_points: usize,
    /// Clusters smaller than this share of the valid set are outliers.
    pub min_cluster_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            similarity: SimilarityConfig::default(),
            k_movements: 3,
            lanes_per_movement: BTreeMap::new(),
            stop_displacement_tolerance: 0.5,
            min_points: 5,
            min_cluster_fraction: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn lanes_for(&self, label: MovementLabel) -> usize {
        self.lanes_per_movement.get(&label).copied().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.similarity
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.k_movements < 1 {
            return bad("k_movements must be at least 1".into());
        }
        if self.min_points < 2 {
            return bad("min_points must be at least 2".into());
        }
        if !(self.stop_displacement_tolerance.is_finite() && self.stop_displacement_tolerance >= 0.0) {
            return bad("stop_displacement_tolerance must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.min_cluster_fraction) {
            return bad("min_cluster_fraction must lie in [0, 1)".into());
        }
        for (label, &lanes) in &self.lanes_per_movement {
            if lanes < 1 {
                return bad(format!("lanes_per_movement.{label} must be at least 1"));
            }
            if *label == MovementLabel::Unknown {
                return bad("lanes_per_movement cannot name Unknown".into());
            }
        }
        Ok(())
    }
}

/// Non-fatal events raised while training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    StopbarFallback { y_sl: f64 },
    DroppedShort { count: usize, min_points: usize },
    OutlierCluster { cluster: usize, size: usize },
    LanesClamped { movement: MovementLabel, requested: usize, used: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::StopbarFallback { y_sl } => {
                write!(f, "no stopped locations found; stopbar falls back to 25th percentile y = {y_sl}")
            }
            Diagnostic::DroppedShort { count, min_points } => {
                write!(f, "{count} trajectories dropped with fewer than {min_points} points below the stopbar")
            }
            Diagnostic::OutlierCluster { cluster, size } => {
                write!(f, "cluster {cluster} ({size} trajectories) flagged as outlier, not modelled")
            }
            Diagnostic::LanesClamped {
                movement,
                requested,
                used,
            } => write!(f, "movement {movement}: {requested} lanes requested, clamped to {used}"),
        }
    }
}

/// Everything a training run produced besides the model itself.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub stopbar: StopbarEstimate,
    pub valid: ValidSet,
    pub clusters: MovementClusters,
    /// Name given to each regular cluster index.
    pub cluster_labels: Vec<(usize, MovementLabel)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl TrainReport {
    /// Training-time label of each valid trajectory (None for outliers).
    pub fn training_labels(&self) -> BTreeMap<String, Option<MovementLabel>> {
        let names: BTreeMap<usize, MovementLabel> = self.cluster_labels.iter().copied().collect();
        self.valid
            .trajectories
            .iter()
            .zip(self.clusters.assignment.labels())
            .map(|(t, c)| (t.vehicle_id().to_string(), names.get(c).copied()))
            .collect()
    }
}

/// Runs all training stages and returns the model with a report.
pub fn train_with_report(d: &ApproachDataset, cfg: &PipelineConfig) -> Result<(MovementModel, TrainReport), PipelineError> {
    cfg.validate()?;
    let mut diagnostics = Vec::new();
    let stopbar = find_stopbar(d, cfg)?;
    if stopbar.fallback {
        diagnostics.push(Diagnostic::StopbarFallback {
            y_sl: stopbar.stopbar.y_sl,
        });
    }
    let valid = extract_valid_set(d, stopbar.stopbar, cfg)?;
    if !valid.dropped.is_empty() {
        diagnostics.push(Diagnostic::DroppedShort {
            count: valid.dropped.len(),
            min_points: cfg.min_points,
        });
    }
    let clusters = cluster_movements(&valid.trajectories, cfg)?;
    let model = select_modelling_trajectories(&valid.trajectories, &clusters, stopbar.stopbar, cfg, &mut diagnostics)?;
    let cluster_labels = label_clusters(&valid.trajectories, &clusters);
    let report = TrainReport {
        stopbar,
        valid,
        clusters,
        cluster_labels,
        diagnostics,
    };
    Ok((model, report))
}

pub fn train(d: &ApproachDataset, cfg: &PipelineConfig) -> Result<MovementModel, PipelineError> {
    train_with_report(d, cfg).map(|(m, _)| m)
}
