//! Confusion matrix and the three reported scores: accuracy, balanced
//! accuracy (macro recall) and macro F1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::MovementLabel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("vehicle {0} has a prediction but no ground-truth label")]
    MissingTruth(String),
    #[error("vehicle {0} has ground truth Unknown")]
    UnknownTruth(String),
    #[error("confusion matrix is empty")]
    Empty,
    #[error("no class has any actual instance")]
    NoSupport,
    #[error("counts must be a square matrix matching the class list")]
    Shape,
    #[error("label csv line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("label csv line {line}: vehicle {vehicle_id} listed twice")]
    DuplicateId { line: u64, vehicle_id: String },
    #[error("writing labels: {0}")]
    Write(String),
}

#[derive(Deserialize)]
struct LabelRow {
    vehicle_id: String,
    label: String,
}

/// Reads `vehicle_id,label` CSV. Extra columns are ignored.
pub fn read_labels<R: Read>(reader: R) -> Result<BTreeMap<String, MovementLabel>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse_err = |e: csv::Error| EvalError::Parse {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(parse_err)?.clone();
    let mut out = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(parse_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: LabelRow = record.deserialize(Some(&headers)).map_err(|e| EvalError::Parse {
            line,
            message: e.to_string(),
        })?;
        let label: MovementLabel = row.label.parse().map_err(|e: crate::trajectory::ParseLabelError| EvalError::Parse {
            line,
            message: e.to_string(),
        })?;
        if out.insert(row.vehicle_id.clone(), label).is_some() {
            return Err(EvalError::DuplicateId {
                line,
                vehicle_id: row.vehicle_id,
            });
        }
    }
    Ok(out)
}

pub fn write_labels<W: Write>(labels: &BTreeMap<String, MovementLabel>, writer: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| EvalError::Write(e.to_string());
    w.write_record(["vehicle_id", "label"]).map_err(err)?;
    for (id, l) in labels {
        w.write_record([id.as_str(), &l.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Write(e.to_string()))
}

/// How Unknown predictions enter the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownPolicy {
    /// Unknown is a wrong answer for the vehicle's true class.
    #[default]
    CountAsError,
    /// Unknown vehicles are left out and only counted.
    Exclude,
}

impl std::str::FromStr for UnknownPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count-as-error" => Ok(UnknownPolicy::CountAsError),
            "exclude" => Ok(UnknownPolicy::Exclude),
            other => Err(format!("unknown policy {other:?} (count-as-error | exclude)")),
        }
    }
}

/// Rows are actual classes, columns predicted classes. Unknown predictions
/// are kept in a separate per-row column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<MovementLabel>,
    pub counts: Vec<Vec<u64>>,
    /// Unknown predictions per actual class.
    pub unknown_by_class: Vec<u64>,
    pub unknown_count: u64,
    pub policy: UnknownPolicy,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<MovementLabel>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(EvalError::Shape);
        }
        Ok(ConfusionMatrix {
            unknown_by_class: vec![0; k],
            classes,
            counts,
            unknown_count: 0,
            policy: UnknownPolicy::CountAsError,
        })
    }

    fn k(&self) -> usize {
        self.classes.len()
    }

    fn unknown_in_row(&self, c: usize) -> u64 {
        match self.policy {
            UnknownPolicy::CountAsError => self.unknown_by_class[c],
            UnknownPolicy::Exclude => 0,
        }
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    /// Actual instances of class `c` (row sum, plus Unknowns when counted).
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum::<u64>() + self.unknown_in_row(c)
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    pub fn total(&self) -> u64 {
        (0..self.k()).map(|c| self.support(c)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|c| self.tp(c)).sum()
    }
}

/// Tallies predictions against truth. Only predicted vehicles are counted;
/// classes are the union of true and predicted labels, sorted.
pub fn build_confusion(
    truth: &BTreeMap<String, MovementLabel>,
    pred: &BTreeMap<String, MovementLabel>,
    policy: UnknownPolicy,
) -> Result<ConfusionMatrix, EvalError> {
    let mut classes = BTreeSet::new();
    for (id, p) in pred {
        let t = truth.get(id).ok_or_else(|| EvalError::MissingTruth(id.clone()))?;
        if *t == MovementLabel::Unknown {
            return Err(EvalError::UnknownTruth(id.clone()));
        }
        classes.insert(*t);
        if *p != MovementLabel::Unknown {
            classes.insert(*p);
        }
    }
    let classes: Vec<MovementLabel> = classes.into_iter().collect();
    let index: BTreeMap<MovementLabel, usize> = classes.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let k = classes.len();
    let mut cm = ConfusionMatrix {
        classes,
        counts: vec![vec![0; k]; k],
        unknown_by_class: vec![0; k],
        unknown_count: 0,
        policy,
    };
    for (id, p) in pred {
        let row = index[&truth[id]];
        if *p == MovementLabel::Unknown {
            cm.unknown_by_class[row] += 1;
            cm.unknown_count += 1;
        } else {
            cm.counts[row][index[p]] += 1;
        }
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    Ok(cm.trace() as f64 / total as f64)
}

/// Recall of class `c`; `None` without actual instances.
pub fn recall(cm: &ConfusionMatrix, c: usize) -> Option<f64> {
    let s = cm.support(c);
    (s > 0).then(|| cm.tp(c) as f64 / s as f64)
}

pub fn precision(cm: &ConfusionMatrix, c: usize) -> Option<f64> {
    let p = cm.predicted(c);
    (p > 0).then(|| cm.tp(c) as f64 / p as f64)
}

/// F1 of class `c`, 0 when precision or recall is undefined or both are 0.
pub fn f1(cm: &ConfusionMatrix, c: usize) -> f64 {
    match (precision(cm, c), recall(cm, c)) {
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    }
}

/// Mean per-class recall over classes that have actual instances.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let recalls: Vec<f64> = (0..cm.k()).filter_map(|c| recall(cm, c)).collect();
    if recalls.is_empty() {
        return Err(EvalError::NoSupport);
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    if cm.k() == 0 {
        return Err(EvalError::Empty);
    }
    Ok((0..cm.k()).map(|c| f1(cm, c)).sum::<f64>() / cm.k() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: MovementLabel,
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: UnknownPolicy,
    pub total: u64,
    pub unknown_count: u64,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, EvalError> {
        let mut notes = Vec::new();
        let per_class: Vec<ClassMetrics> = (0..cm.k())
            .map(|c| {
                let tp = cm.tp(c);
                let support = cm.support(c);
                let predicted = cm.predicted(c);
                let m = ClassMetrics {
                    label: cm.classes[c],
                    support,
                    tp,
                    fp: predicted - tp,
                    fn_: support - tp,
                    precision: precision(&cm, c),
                    recall: recall(&cm, c),
                    f1: f1(&cm, c),
                };
                if m.support == 0 {
                    notes.push(format!("class {} has no actual instances; left out of balanced accuracy", m.label));
                }
                if m.precision.is_none() || m.recall.is_none() {
                    notes.push(format!("class {} has undefined precision or recall; F1 taken as 0", m.label));
                }
                m
            })
            .collect();
        Ok(MetricsReport {
            policy: cm.policy,
            total: cm.total(),
            unknown_count: cm.unknown_count,
            accuracy: accuracy(&cm)?,
            balanced_accuracy: balanced_accuracy(&cm)?,
            macro_f1: macro_f1(&cm)?,
            per_class,
            confusion: cm,
            notes,
        })
    }

    /// Copy with every score rounded to 6 significant digits.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| sig6(v).parse().unwrap_or(v);
        let mut out = self.clone();
        out.accuracy = r(out.accuracy);
        out.balanced_accuracy = r(out.balanced_accuracy);
        out.macro_f1 = r(out.macro_f1);
        for c in &mut out.per_class {
            c.precision = c.precision.map(r);
            c.recall = c.recall.map(r);
            c.f1 = r(c.f1);
        }
        out
    }

    /// Aligned plain-text rendering, 6 significant digits.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:>10}", "metric", "value");
        let _ = writeln!(s, "{:<18} {:>10}", "accuracy", sig6(self.accuracy));
        let _ = writeln!(s, "{:<18} {:>10}", "balanced_accuracy", sig6(self.balanced_accuracy));
        let _ = writeln!(s, "{:<18} {:>10}", "macro_f1", sig6(self.macro_f1));
        let _ = writeln!(s, "{:<18} {:>10}", "total", self.total);
        let _ = writeln!(s, "{:<18} {:>10}", "unknown", self.unknown_count);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>6} {:>6} {:>6} {:>10} {:>10} {:>10}",
            "class", "support", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), sig6);
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>6} {:>6} {:>6} {:>10} {:>10} {:>10}",
                c.label.to_string(),
                c.support,
                c.tp,
                c.fp,
                c.fn_,
                opt(c.precision),
                opt(c.recall),
                sig6(c.f1)
            );
        }
        s
    }
}

/// Formats with 6 significant digits, trailing zeros trimmed.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let digits = 5 - v.abs().log10().floor() as i32;
    if (0..=17).contains(&digits) {
        let s = format!("{:.*}", digits as usize, v);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.5e}")
    }
}

/// Relabels predicted clusters onto truth labels with the injective mapping
/// that maximises agreement. The identity mapping is kept unless another is
/// strictly better. Unknown always maps to itself.
pub fn best_alignment(
    truth: &BTreeMap<String, MovementLabel>,
    pred: &BTreeMap<String, MovementLabel>,
) -> BTreeMap<MovementLabel, MovementLabel> {
    let predicted: Vec<MovementLabel> = pred
        .values()
        .filter(|l| **l != MovementLabel::Unknown)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let targets: Vec<MovementLabel> = predicted
        .iter()
        .copied()
        .chain(truth.values().copied().filter(|l| *l != MovementLabel::Unknown))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut agree: BTreeMap<(MovementLabel, MovementLabel), u64> = BTreeMap::new();
    for (id, p) in pred {
        if let Some(t) = truth.get(id) {
            *agree.entry((*p, *t)).or_default() += 1;
        }
    }
    let score = |map: &[usize]| -> u64 {
        map.iter()
            .enumerate()
            .map(|(pi, &ti)| agree.get(&(predicted[pi], targets[ti])).copied().unwrap_or(0))
            .sum()
    };
    let identity: Vec<usize> = predicted
        .iter()
        .map(|p| targets.iter().position(|t| t == p).expect("predicted labels are targets"))
        .collect();
    let mut best = (score(&identity), identity);
    let mut current = Vec::with_capacity(predicted.len());
    let mut used = vec![false; targets.len()];
    search(&mut current, &mut used, predicted.len(), &score, &mut best);

    let mut out: BTreeMap<MovementLabel, MovementLabel> =
        predicted.iter().zip(&best.1).map(|(p, &t)| (*p, targets[t])).collect();
    out.insert(MovementLabel::Unknown, MovementLabel::Unknown);
    out
}

fn search(
    current: &mut Vec<usize>,
    used: &mut [bool],
    depth: usize,
    score: &dyn Fn(&[usize]) -> u64,
    best: &mut (u64, Vec<usize>),
) {
    if current.len() == depth {
        let s = score(current);
        if s > best.0 {
            *best = (s, current.clone());
        }
        return;
    }
    for t in 0..used.len() {
        if !used[t] {
            used[t] = true;
            current.push(t);
            search(current, used, depth, score, best);
            current.pop();
            used[t] = false;
        }
    }
}

pub fn apply_alignment(
    pred: &BTreeMap<String, MovementLabel>,
    map: &BTreeMap<MovementLabel, MovementLabel>,
) -> BTreeMap<String, MovementLabel> {
    pred.iter()
        .map(|(id, l)| (id.clone(), map.get(l).copied().unwrap_or(*l)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use MovementLabel::*;

    fn example() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(
            vec![Left, Through, Right],
            vec![vec![8, 1, 1], vec![0, 9, 1], vec![0, 0, 10]],
        )
        .unwrap()
    }

    #[test]
    fn documented_matrix() {
        let cm = example();
        assert!((accuracy(&cm).unwrap() - 0.9).abs() < 1e-12);
        assert!((balanced_accuracy(&cm).unwrap() - 0.9).abs() < 1e-12);
        // F1 per class: 16/18, 0.9, 20/22
        let expected = (16.0 / 18.0 + 0.9 + 20.0 / 22.0) / 3.0;
        assert!((macro_f1(&cm).unwrap() - expected).abs() < 1e-12);
        assert!((macro_f1(&cm).unwrap() - 0.89932).abs() < 1e-5);
    }

    #[test]
    fn perfect_and_all_wrong() {
        let cm = ConfusionMatrix::from_counts(
            vec![Left, Through, Right],
            vec![vec![5, 0, 0], vec![0, 3, 0], vec![0, 0, 6]],
        )
        .unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&cm).unwrap(), 1.0);
        assert_eq!(macro_f1(&cm).unwrap(), 1.0);
        let cm = ConfusionMatrix::from_counts(vec![Left, Through], vec![vec![0, 4], vec![2, 0]]).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 0.0);
        assert_eq!(macro_f1(&cm).unwrap(), 0.0);
    }

    #[test]
    fn one_class_fully_wrong() {
        let cm = ConfusionMatrix::from_counts(
            vec![Left, Through, Right],
            vec![vec![0, 5, 0], vec![0, 5, 0], vec![0, 0, 5]],
        )
        .unwrap();
        assert!((balanced_accuracy(&cm).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn never_predicted_class_has_zero_f1() {
        let cm = ConfusionMatrix::from_counts(vec![Left, Through], vec![vec![0, 3], vec![0, 3]]).unwrap();
        assert_eq!(f1(&cm, 0), 0.0);
        assert_eq!(precision(&cm, 0), None);
    }

    fn maps(pairs: &[(&str, MovementLabel)]) -> BTreeMap<String, MovementLabel> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn building_from_labels() {
        let truth = maps(&[("a", Left), ("b", Through), ("c", Right), ("d", Left)]);
        let pred = maps(&[("a", Left), ("b", Through), ("c", Right), ("d", Through)]);
        let cm = build_confusion(&truth, &pred, UnknownPolicy::CountAsError).unwrap();
        assert_eq!(cm.counts[0][1], 1);

        let pred = maps(&[("a", Left), ("b", Through), ("c", Right), ("d", Unknown)]);
        let ex = build_confusion(&truth, &pred, UnknownPolicy::Exclude).unwrap();
        assert_eq!(ex.unknown_count, 1);
        assert_eq!(ex.total(), 3);
        assert_eq!(accuracy(&ex).unwrap(), 1.0);
        let err = build_confusion(&truth, &pred, UnknownPolicy::CountAsError).unwrap();
        assert_eq!(err.total(), 4);
        assert_eq!(accuracy(&err).unwrap(), 0.75);

        let pred = maps(&[("zz", Left)]);
        assert!(matches!(
            build_confusion(&truth, &pred, UnknownPolicy::CountAsError),
            Err(EvalError::MissingTruth(_))
        ));
    }

    #[test]
    fn alignment_recovers_permuted_labels() {
        let truth = maps(&[("a", Left), ("b", Left), ("c", Through), ("d", Right)]);
        let pred = maps(&[("a", Right), ("b", Right), ("c", Left), ("d", Through)]);
        let map = best_alignment(&truth, &pred);
        let aligned = apply_alignment(&pred, &map);
        assert_eq!(aligned, truth);
        // already right: identity kept
        let map = best_alignment(&truth, &truth);
        assert!(map.iter().all(|(k, v)| k == v));
    }

    #[test]
    fn label_csv_round_trip() {
        let labels = maps(&[("a", Left), ("b", Cluster(4)), ("c", Unknown)]);
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
        let extra = "vehicle_id,label,score\nx,through,1.5\n";
        assert_eq!(read_labels(extra.as_bytes()).unwrap(), maps(&[("x", Through)]));
        let dup = "vehicle_id,label\nx,left\nx,right\n";
        assert!(matches!(read_labels(dup.as_bytes()), Err(EvalError::DuplicateId { line: 3, .. })));
        let bad = "vehicle_id,label\nx,sideways\n";
        assert!(matches!(read_labels(bad.as_bytes()), Err(EvalError::Parse { line: 2, .. })));
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.899321789), "0.899322");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-2.5), "-2.5");
    }

    #[test]
    fn report_table_mentions_classes() {
        let r = MetricsReport::from_confusion(example()).unwrap();
        let t = r.to_table();
        assert!(t.contains("accuracy"));
        assert!(t.contains("Through"));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"macro_f1\""));
    }
}
