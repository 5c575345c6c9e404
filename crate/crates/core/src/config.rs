//! One TOML file carrying every tunable of a run.
//!
//! ```toml
//! [paths]
//! input = "approach.csv"
//! model = "approach.model.json"
//!
//! [pipeline]
//! k_movements = 3
//! min_cluster_fraction = 0.05
//! [pipeline.lanes_per_movement]
//! Through = 2
//! [pipeline.similarity]
//! w1 = 1.0
//!
//! [[baselines.lines]]
//! label = "Through"
//! entry = [[380, 170], [460, 170]]
//! exit = [[380, 580], [460, 580]]
//!
//! [baselines.shape]
//! distance_limit = 60.0
//! angle_limit = 30.0
//!
//! [scene]
//! seed = 7
//! ```
//!
//! Unknown keys are rejected everywhere. Missing sections take defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::LineBasedSpec;
use crate::pipeline::PipelineConfig;
use crate::synth::SceneSpec;
use crate::trajectory::MovementLabel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeConfig {
    /// Required by the shape method; there is no sensible default.
    pub distance_limit: Option<f64>,
    pub angle_limit: Option<f64>,
    /// Trajectory CSV holding the hand-picked modelling trajectories. When
    /// absent, the trained model's modelling trajectories are used.
    pub reference: Option<PathBuf>,
    /// Vehicle ids in `reference` per movement.
    pub movements: BTreeMap<MovementLabel, Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub lines: Option<LineBasedSpec>,
    pub shape: ShapeConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub baselines: BaselineConfig,
    pub scene: SceneSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}
