//! Unsupervised turning-movement classification for vehicle trajectories
//! extracted from fixed intersection cameras.

pub mod baselines;
pub mod clustering;
pub mod evaluation;
pub mod pipeline;
pub mod similarity;
pub mod synth;
pub mod trajectory;
pub mod config;
pub mod render;
