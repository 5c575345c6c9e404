//! Reference classifiers: virtual entry/exit line pairs, and shape
//! similarity against hand-picked modelling trajectories with fixed limits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{angle_similarity_or_fallback, distance_similarity, SimilarityConfig};
use crate::trajectory::{MovementLabel, Trajectory, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("virtual line endpoints coincide")]
    DegenerateLine,
    #[error("{0} spec has no movements")]
    NoMovements(&'static str),
    #[error("shape-similarity limits must be positive")]
    BadLimits,
    #[error("movement {0} has no modelling trajectory")]
    EmptyMovement(MovementLabel),
}

/// Segment between two image points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct VirtualLine {
    a: Vec2,
    b: Vec2,
}

impl VirtualLine {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self, BaselineError> {
        if a == b {
            return Err(BaselineError::DegenerateLine);
        }
        Ok(VirtualLine { a, b })
    }

    pub fn a(&self) -> Vec2 {
        self.a
    }

    pub fn b(&self) -> Vec2 {
        self.b
    }
}

impl TryFrom<[[f64; 2]; 2]> for VirtualLine {
    type Error = BaselineError;

    fn try_from(v: [[f64; 2]; 2]) -> Result<Self, Self::Error> {
        VirtualLine::new(Vec2::new(v[0][0], v[0][1]), Vec2::new(v[1][0], v[1][1]))
    }
}

impl From<VirtualLine> for [[f64; 2]; 2] {
    fn from(l: VirtualLine) -> Self {
        [[l.a.x, l.a.y], [l.b.x, l.b.y]]
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection: touching at an endpoint or overlapping
/// collinearly counts.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// True when any step of `t` meets the line.
pub fn segment_crossing(t: &Trajectory, l: &VirtualLine) -> bool {
    t.points()
        .windows(2)
        .any(|w| segments_intersect(w[0].pos(), w[1].pos(), l.a, l.b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePair {
    pub label: MovementLabel,
    pub entry: VirtualLine,
    pub exit: VirtualLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LinePair>", into = "Vec<LinePair>")]
pub struct LineBasedSpec {
    pairs: Vec<LinePair>,
}

impl LineBasedSpec {
    pub fn new(pairs: Vec<LinePair>) -> Result<Self, BaselineError> {
        if pairs.is_empty() {
            return Err(BaselineError::NoMovements("line-based"));
        }
        Ok(LineBasedSpec { pairs })
    }

    pub fn pairs(&self) -> &[LinePair] {
        &self.pairs
    }
}

impl TryFrom<Vec<LinePair>> for LineBasedSpec {
    type Error = BaselineError;
    fn try_from(v: Vec<LinePair>) -> Result<Self, Self::Error> {
        LineBasedSpec::new(v)
    }
}

impl From<LineBasedSpec> for Vec<LinePair> {
    fn from(s: LineBasedSpec) -> Self {
        s.pairs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineDecision {
    pub label: MovementLabel,
    /// Every movement whose entry and exit were both crossed, spec order.
    pub matched: Vec<MovementLabel>,
}

impl LineDecision {
    pub fn ambiguous(&self) -> bool {
        self.matched.len() > 1
    }
}

/// First movement (spec order) whose entry and exit lines are both crossed.
pub fn classify_line_based(t: &Trajectory, spec: &LineBasedSpec) -> LineDecision {
    let matched: Vec<MovementLabel> = spec
        .pairs
        .iter()
        .filter(|p| segment_crossing(t, &p.entry) && segment_crossing(t, &p.exit))
        .map(|p| p.label)
        .collect();
    LineDecision {
        label: matched.first().copied().unwrap_or(MovementLabel::Unknown),
        matched,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSimilaritySpec {
    pub movements: Vec<(MovementLabel, Vec<Trajectory>)>,
    pub distance_limit: f64,
    pub angle_limit: f64,
}

impl ShapeSimilaritySpec {
    pub fn new(
        movements: Vec<(MovementLabel, Vec<Trajectory>)>,
        distance_limit: f64,
        angle_limit: f64,
    ) -> Result<Self, BaselineError> {
        if movements.is_empty() {
            return Err(BaselineError::NoMovements("shape-similarity"));
        }
        if let Some((l, _)) = movements.iter().find(|(_, ts)| ts.is_empty()) {
            return Err(BaselineError::EmptyMovement(*l));
        }
        if !(distance_limit > 0.0 && angle_limit > 0.0) {
            return Err(BaselineError::BadLimits);
        }
        Ok(ShapeSimilaritySpec {
            movements,
            distance_limit,
            angle_limit,
        })
    }
}

/// Among modelling trajectories within both limits, the movement with the
/// lowest `w1*D_S + w2*T_s`; Unknown when none qualifies.
pub fn classify_shape_similarity(t: &Trajectory, spec: &ShapeSimilaritySpec, cfg: &SimilarityConfig) -> MovementLabel {
    let mut best: Option<(MovementLabel, f64)> = None;
    for (label, models) in &spec.movements {
        for m in models {
            let d_s = distance_similarity(t, m);
            let t_s = angle_similarity_or_fallback(t, m, cfg).degrees;
            if d_s > spec.distance_limit || t_s > spec.angle_limit {
                continue;
            }
            let s = cfg.w1 * d_s + cfg.w2 * t_s;
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((*label, s));
            }
        }
    }
    best.map_or(MovementLabel::Unknown, |(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_xy("t", pts).unwrap()
    }

    fn line(a: (f64, f64), b: (f64, f64)) -> VirtualLine {
        VirtualLine::new(Vec2::new(a.0, a.1), Vec2::new(b.0, b.1)).unwrap()
    }

    #[test]
    fn crossing_cases() {
        let h = line((-1.0, 0.0), (1.0, 0.0));
        assert!(segment_crossing(&tr(&[(0.0, -1.0), (0.0, 1.0)]), &h));
        assert!(!segment_crossing(&tr(&[(-1.0, 1.0), (1.0, 1.0)]), &h));
        assert!(segment_crossing(&tr(&[(0.0, -1.0), (0.5, 0.0)]), &h));
        assert!(segment_crossing(&tr(&[(2.0, 0.0), (1.0, 0.0)]), &h));
        assert!(!segment_crossing(&tr(&[(0.0, -1.0)]), &h));
        assert!(VirtualLine::new(Vec2::ZERO, Vec2::ZERO).is_err());
    }

    fn spec() -> LineBasedSpec {
        LineBasedSpec::new(vec![
            LinePair {
                label: MovementLabel::Left,
                entry: line((0.0, 10.0), (20.0, 10.0)),
                exit: line((100.0, 0.0), (100.0, 100.0)),
            },
            LinePair {
                label: MovementLabel::Through,
                entry: line((0.0, 10.0), (20.0, 10.0)),
                exit: line((0.0, 100.0), (20.0, 100.0)),
            },
        ])
        .unwrap()
    }

    #[test]
    fn line_based_decisions() {
        let s = spec();
        let through = tr(&[(10.0, 0.0), (10.0, 50.0), (10.0, 110.0)]);
        assert_eq!(classify_line_based(&through, &s).label, MovementLabel::Through);
        let truncated = tr(&[(10.0, 0.0), (10.0, 50.0)]);
        assert_eq!(classify_line_based(&truncated, &s).label, MovementLabel::Unknown);
        let both = tr(&[(10.0, 0.0), (10.0, 110.0), (110.0, 50.0)]);
        let d = classify_line_based(&both, &s);
        assert_eq!(d.label, MovementLabel::Left);
        assert!(d.ambiguous());
        assert!(LineBasedSpec::new(vec![]).is_err());
    }

    #[test]
    fn densifying_does_not_change_line_result() {
        let s = spec();
        let coarse = tr(&[(10.0, 0.0), (10.0, 120.0)]);
        let fine = tr(&[(10.0, 0.0), (10.0, 30.0), (10.0, 60.0), (10.0, 90.0), (10.0, 120.0)]);
        assert_eq!(classify_line_based(&coarse, &s), classify_line_based(&fine, &s));
    }

    #[test]
    fn shape_similarity_decisions() {
        let cfg = SimilarityConfig::default();
        let a: Vec<(f64, f64)> = (0..10).map(|k| (0.0, 10.0 * k as f64)).collect();
        let b: Vec<(f64, f64)> = (0..10).map(|k| (30.0, 10.0 * k as f64)).collect();
        let model_a = Trajectory::from_xy("a", &a).unwrap();
        let model_b = Trajectory::from_xy("b", &b).unwrap();
        let spec = ShapeSimilaritySpec::new(
            vec![(MovementLabel::Through, vec![model_a.clone()]), (MovementLabel::Left, vec![model_b])],
            20.0,
            10.0,
        )
        .unwrap();
        assert_eq!(classify_shape_similarity(&model_a, &spec, &cfg), MovementLabel::Through);
        // 4 px from b, 26 from a: only b passes
        let near_b: Vec<(f64, f64)> = (0..10).map(|k| (26.0, 10.0 * k as f64)).collect();
        let near_b = Trajectory::from_xy("x", &near_b).unwrap();
        assert_eq!(classify_shape_similarity(&near_b, &spec, &cfg), MovementLabel::Left);
        // 15 px from a and b: both pass, a wins ties by order
        let mid: Vec<(f64, f64)> = (0..10).map(|k| (15.0, 10.0 * k as f64)).collect();
        let mid = Trajectory::from_xy("m", &mid).unwrap();
        assert_eq!(classify_shape_similarity(&mid, &spec, &cfg), MovementLabel::Through);
        // far from everything
        let far: Vec<(f64, f64)> = (0..10).map(|k| (300.0, 10.0 * k as f64)).collect();
        let far = Trajectory::from_xy("f", &far).unwrap();
        assert_eq!(classify_shape_similarity(&far, &spec, &cfg), MovementLabel::Unknown);
        assert!(ShapeSimilaritySpec::new(vec![], 1.0, 1.0).is_err());
        assert!(ShapeSimilaritySpec::new(vec![(MovementLabel::Left, vec![])], 1.0, 1.0).is_err());
    }
}
