//! Stopbar placement and valid-set extraction.

use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PipelineError};
use crate::trajectory::{dist, ApproachDataset, Trajectory, Vec2};

/// The horizontal image line `y = y_sl`. Only points with `y >= y_sl` take
/// part in clustering and assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stopbar {
    pub y_sl: f64,
}

/// Percentile of `values` (`q` in `[0, 1]`) by linear interpolation between
/// the two closest order statistics. `None` for an empty slice.
pub fn percentile_linear(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = h - lo as f64;
    Some(if frac == 0.0 { v[lo] } else { v[lo] + frac * (v[hi] - v[lo]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopbarEstimate {
    pub stopbar: Stopbar,
    /// Stopped locations that fed the median.
    pub stopped: Vec<Vec2>,
    /// True when no stopped location existed and the 25th percentile of all
    /// point y values was used instead.
    pub fallback: bool,
}

/// A point is a stopped location when the detection in the next frame
/// (frame + 1) of the same vehicle moved by at most the tolerance. Frame
/// gaps never count as stops.
pub fn stopped_locations(d: &ApproachDataset, tolerance: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    for t in d.trajectories() {
        for w in t.points().windows(2) {
            if w[1].frame == w[0].frame + 1 && dist(w[0].pos(), w[1].pos()) <= tolerance {
                out.push(w[0].pos());
            }
        }
    }
    out
}

pub fn find_stopbar(d: &ApproachDataset, cfg: &PipelineConfig) -> Result<StopbarEstimate, PipelineError> {
    if d.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    let stopped = stopped_locations(d, cfg.stop_displacement_tolerance);
    let ys: Vec<f64> = stopped.iter().map(|p| p.y).collect();
    if let Some(y_sl) = percentile_linear(&ys, 0.5) {
        return Ok(StopbarEstimate {
            stopbar: Stopbar { y_sl },
            stopped,
            fallback: false,
        });
    }
    let all: Vec<f64> = d
        .trajectories()
        .iter()
        .flat_map(|t| t.points().iter().map(|p| p.y))
        .collect();
    let y_sl = percentile_linear(&all, 0.25).expect("non-empty dataset has points");
    Ok(StopbarEstimate {
        stopbar: Stopbar { y_sl },
        stopped,
        fallback: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidSet {
    pub trajectories: Vec<Trajectory>,
    /// Vehicles with fewer than `min_points` points below the bar.
    pub dropped: Vec<String>,
}

/// Truncates every trajectory to `y >= y_sl` and keeps those with at least
/// `min_points` points left.
pub fn extract_valid_set(
    d: &ApproachDataset,
    sb: Stopbar,
    cfg: &PipelineConfig,
) -> Result<ValidSet, PipelineError> {
    let mut trajectories = Vec::new();
    let mut dropped = Vec::new();
    for t in d.trajectories() {
        match t.retain_below(sb.y_sl) {
            Some(v) if v.len() >= cfg.min_points => trajectories.push(v),
            _ => dropped.push(t.vehicle_id().to_string()),
        }
    }
    if trajectories.is_empty() {
        return Err(PipelineError::EmptyValidSet {
            min_points: cfg.min_points,
        });
    }
    Ok(ValidSet { trajectories, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrackPoint;

    // sort-and-interpolate reference written out longhand
    fn oracle_median(vals: &[f64]) -> f64 {
        let mut v = vals.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        }
    }

    fn stopped_at(id: &str, y: f64, frames: u64) -> Trajectory {
        let mut pts = vec![TrackPoint::new(0, 0.0, y - 50.0)];
        for f in 1..=frames {
            pts.push(TrackPoint::new(f, 0.0, y));
        }
        pts.push(TrackPoint::new(frames + 1, 0.0, y + 40.0));
        Trajectory::new(id, pts).unwrap()
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile_linear(&[100.0, 120.0, 140.0], 0.5), Some(120.0));
        assert_eq!(percentile_linear(&[140.0, 100.0], 0.5), Some(120.0));
        assert_eq!(percentile_linear(&[], 0.5), None);
        assert_eq!(percentile_linear(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), Some(2.0));
        assert_eq!(percentile_linear(&[0.0, 10.0], 0.25), Some(2.5));
        for vals in [vec![3.0, 1.0, 2.0, 8.0], vec![5.5], vec![9.0, -1.0, 4.0, 4.0, 7.0]] {
            assert_eq!(percentile_linear(&vals, 0.5).unwrap(), oracle_median(&vals));
        }
    }

    #[test]
    fn stopbar_is_median_of_stopped_points() {
        // one stopped frame-pair per vehicle
        let d = ApproachDataset::new(
            "a",
            vec![stopped_at("a", 100.0, 2), stopped_at("b", 120.0, 2), stopped_at("c", 140.0, 2)],
        )
        .unwrap();
        let est = find_stopbar(&d, &PipelineConfig::default()).unwrap();
        assert!(!est.fallback);
        assert_eq!(est.stopped.len(), 3);
        assert_eq!(est.stopbar.y_sl, 120.0);

        let d = ApproachDataset::new("a", vec![stopped_at("a", 100.0, 2), stopped_at("b", 140.0, 2)]).unwrap();
        assert_eq!(find_stopbar(&d, &PipelineConfig::default()).unwrap().stopbar.y_sl, 120.0);
    }

    #[test]
    fn moving_traffic_falls_back() {
        let t = Trajectory::from_xy("m", &[(0.0, 0.0), (0.0, 10.0), (0.0, 20.0), (0.0, 30.0), (0.0, 40.0)]).unwrap();
        let d = ApproachDataset::new("a", vec![t]).unwrap();
        let cfg = PipelineConfig {
            stop_displacement_tolerance: 0.0,
            ..PipelineConfig::default()
        };
        let est = find_stopbar(&d, &cfg).unwrap();
        assert!(est.fallback);
        assert_eq!(est.stopbar.y_sl, 10.0);
    }

    #[test]
    fn frame_gap_is_not_a_stop() {
        let pts = vec![TrackPoint::new(0, 1.0, 1.0), TrackPoint::new(5, 1.0, 1.0), TrackPoint::new(6, 1.0, 9.0)];
        let d = ApproachDataset::new("a", vec![Trajectory::new("g", pts).unwrap()]).unwrap();
        assert!(stopped_locations(&d, 0.5).is_empty());
    }

    #[test]
    fn empty_dataset_errors() {
        let d = ApproachDataset::default();
        assert!(matches!(find_stopbar(&d, &PipelineConfig::default()), Err(PipelineError::EmptyDataset)));
    }

    #[test]
    fn valid_set_truncation() {
        let above = Trajectory::from_xy("above", &[(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)]).unwrap();
        let below: Vec<(f64, f64)> = (0..6).map(|k| (0.0, 50.0 + k as f64)).collect();
        let below = Trajectory::from_xy("below", &below).unwrap();
        let crossing: Vec<(f64, f64)> = (0..10).map(|k| (0.0, 36.0 + 2.0 * k as f64)).collect();
        let crossing = Trajectory::from_xy("cross", &crossing).unwrap();
        let d = ApproachDataset::new("a", vec![above, below.clone(), crossing]).unwrap();
        let cfg = PipelineConfig::default();
        let v = extract_valid_set(&d, Stopbar { y_sl: 44.0 }, &cfg).unwrap();
        assert_eq!(v.dropped, vec!["above".to_string()]);
        assert_eq!(v.trajectories[0], below);
        // 36..54 step 2: points 44..54 survive
        assert_eq!(v.trajectories[1].len(), 6);
        assert!(v.trajectories[1].points().iter().all(|p| p.y >= 44.0));

        assert!(matches!(
            extract_valid_set(&d, Stopbar { y_sl: 1000.0 }, &cfg),
            Err(PipelineError::EmptyValidSet { .. })
        ));
    }
}
