//! Similarity-based movement assignment against a trained model.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::movements::MovementModel;
use crate::similarity::{composite_similarity, SimilarityBreakdown};
use crate::trajectory::{ApproachDataset, MovementLabel, Trajectory};

/// Best match of one vehicle against one movement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementScore {
    pub label: MovementLabel,
    pub best: SimilarityBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub label: MovementLabel,
    /// Winning composite similarity; `None` when the vehicle is Unknown.
    pub s: Option<f64>,
    pub scores: Vec<MovementScore>,
}

impl Assignment {
    fn unknown() -> Self {
        Assignment {
            label: MovementLabel::Unknown,
            s: None,
            scores: Vec::new(),
        }
    }
}

/// Truncates `t` at the model's stopbar and assigns the movement of the
/// modelling trajectory with the smallest composite similarity (proximity
/// factor left out). Fewer than two points below the bar gives Unknown.
/// Equal scores keep the earlier movement in model order.
pub fn assign_movement(t: &Trajectory, model: &MovementModel) -> Assignment {
    let Some(t) = t.retain_below(model.stopbar.y_sl).filter(|t| t.len() >= 2) else {
        return Assignment::unknown();
    };
    let cfg = &model.config.similarity;
    let mut winner: Option<(MovementLabel, f64)> = None;
    let mut scores = Vec::with_capacity(model.movements.len());
    for movement in &model.movements {
        let mut best: Option<SimilarityBreakdown> = None;
        for m in &movement.modelling {
            let b = composite_similarity(&t, m, cfg, false);
            if best.as_ref().is_none_or(|cur| b.s < cur.s) {
                best = Some(b);
            }
        }
        let best = best.expect("movement has modelling trajectories");
        if winner.is_none_or(|(_, s)| best.s < s) {
            winner = Some((movement.label, best.s));
        }
        scores.push(MovementScore {
            label: movement.label,
            best,
        });
    }
    let (label, s) = winner.expect("model has movements");
    Assignment {
        label,
        s: Some(s),
        scores,
    }
}

/// Per-vehicle assignments and the resulting movement counts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub per_vehicle: BTreeMap<String, Assignment>,
    /// One entry per model movement plus Unknown, zeros included.
    pub counts: BTreeMap<MovementLabel, usize>,
}

impl ClassificationResult {
    pub fn labels(&self) -> BTreeMap<String, MovementLabel> {
        self.per_vehicle.iter().map(|(id, a)| (id.clone(), a.label)).collect()
    }

    pub fn total(&self) -> usize {
        self.per_vehicle.len()
    }
}

pub fn classify_dataset(d: &ApproachDataset, model: &MovementModel) -> ClassificationResult {
    let assigned: Vec<(String, Assignment)> = d
        .trajectories()
        .par_iter()
        .map(|t| (t.vehicle_id().to_string(), assign_movement(t, model)))
        .collect();
    let mut counts: BTreeMap<MovementLabel, usize> = model.labels().into_iter().map(|l| (l, 0)).collect();
    counts.insert(MovementLabel::Unknown, 0);
    for (_, a) in &assigned {
        *counts.entry(a.label).or_default() += 1;
    }
    ClassificationResult {
        per_vehicle: assigned.into_iter().collect(),
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Movement, PipelineConfig, Stopbar};

    fn tr(id: &str, pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_xy(id, pts).unwrap()
    }

    fn straight(id: &str, x0: f64, dx: f64, n: usize) -> Trajectory {
        let pts: Vec<(f64, f64)> = (0..n).map(|k| (x0 + dx * k as f64, 100.0 + 10.0 * k as f64)).collect();
        tr(id, &pts)
    }

    fn model() -> MovementModel {
        MovementModel::new(
            Stopbar { y_sl: 100.0 },
            vec![
                Movement {
                    label: MovementLabel::Left,
                    modelling: vec![straight("L", 0.0, 10.0, 20)],
                },
                Movement {
                    label: MovementLabel::Through,
                    modelling: vec![straight("T", -40.0, 0.0, 20)],
                },
                Movement {
                    label: MovementLabel::Right,
                    modelling: vec![straight("R", -80.0, -10.0, 20)],
                },
            ],
            PipelineConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn identical_to_model_gets_zero() {
        let m = model();
        let a = assign_movement(&straight("x", -40.0, 0.0, 20), &m);
        assert_eq!(a.label, MovementLabel::Through);
        assert_eq!(a.s, Some(0.0));
        assert_eq!(a.scores.len(), 3);
    }

    #[test]
    fn prefix_of_through_is_through() {
        let m = model();
        let a = assign_movement(&straight("x", -40.0, 0.0, 10), &m);
        assert_eq!(a.label, MovementLabel::Through);
        let through = &a.scores[1].best;
        assert_eq!(through.d_s, 0.0);
        assert_eq!(through.t_s, 0.0);
    }

    #[test]
    fn nothing_below_bar_is_unknown() {
        let m = model();
        let above = tr("x", &[(0.0, 10.0), (0.0, 20.0), (0.0, 30.0)]);
        assert_eq!(assign_movement(&above, &m).label, MovementLabel::Unknown);
        let one = tr("y", &[(0.0, 10.0), (0.0, 120.0)]);
        assert_eq!(assign_movement(&one, &m).label, MovementLabel::Unknown);
    }

    #[test]
    fn points_above_bar_do_not_matter() {
        let m = model();
        let base = straight("x", -38.0, 0.5, 12);
        let mut pts: Vec<(f64, f64)> = vec![(500.0, 0.0), (-500.0, 50.0)];
        pts.extend(base.points().iter().map(|p| (p.x, p.y)));
        let extended = tr("x", &pts);
        assert_eq!(assign_movement(&base, &m), assign_movement(&extended, &m));
    }

    #[test]
    fn classify_counts() {
        let m = model();
        let empty = classify_dataset(&ApproachDataset::default(), &m);
        assert_eq!(empty.total(), 0);
        assert!(empty.counts.values().all(|&c| c == 0));
        assert_eq!(empty.counts.len(), 4);

        let ts: Vec<Trajectory> = (0..10).map(|k| straight(&format!("v{k}"), -40.0 + 0.1 * k as f64, 0.0, 15)).collect();
        let d = ApproachDataset::new("a", ts).unwrap();
        let r = classify_dataset(&d, &m);
        assert_eq!(r.counts[&MovementLabel::Through], 10);
        assert_eq!(r.counts.values().sum::<usize>(), 10);
    }
}
