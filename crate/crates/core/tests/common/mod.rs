//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use turnmove::clustering::Linkage;
use turnmove::trajectory::{MovementLabel, Trajectory};

/// Seeded generator for test inputs.
pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next(&mut self) -> u64 {
        self.0.random()
    }

    pub fn unit(&mut self) -> f64 {
        self.0.random()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0.random_range(0..n)
    }

    pub fn trajectory(&mut self, id: &str, max_points: u64) -> Trajectory {
        let n = 1 + self.below(max_points) as usize;
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (self.range(0.0, 500.0), self.range(0.0, 500.0))).collect();
        Trajectory::from_xy(id, &pts).unwrap()
    }

    /// Random walk, so the net vector is rarely degenerate.
    pub fn walk(&mut self, id: &str, max_points: u64) -> Trajectory {
        let n = 2 + self.below(max_points - 1) as usize;
        let (mut x, mut y) = (self.range(0.0, 300.0), self.range(0.0, 300.0));
        let (dx, dy) = (self.range(-8.0, 8.0), self.range(-8.0, 8.0));
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            pts.push((x, y));
            x += dx + self.range(-3.0, 3.0);
            y += dy + self.range(-3.0, 3.0);
        }
        Trajectory::from_xy(id, &pts).unwrap()
    }
}

pub fn brute_directed_hausdorff(p: &Trajectory, q: &Trajectory) -> f64 {
    let mut worst = 0.0_f64;
    for a in p.points() {
        let mut best = f64::INFINITY;
        for b in q.points() {
            let d = ((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)).sqrt();
            if d < best {
                best = d;
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst
}

/// Textbook agglomeration recomputing every cluster distance from the item
/// matrix at every step. Ties go to the smallest (min rep, max rep) pair of
/// lowest member indices. Returns labels numbered by first appearance and
/// the merge sequence as (rep a, rep b, distance).
pub fn naive_agglomerate(d: &[Vec<f64>], k: usize, linkage: Linkage) -> (Vec<usize>, Vec<(usize, usize, f64)>) {
    let n = d.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > k {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in (x + 1)..clusters.len() {
                let (a, b) = (&clusters[x], &clusters[y]);
                let dist = match linkage {
                    Linkage::Single => {
                        let mut m = f64::INFINITY;
                        for &i in a {
                            for &j in b {
                                m = m.min(d[i][j]);
                            }
                        }
                        m
                    }
                    Linkage::Average => {
                        let mut s = 0.0;
                        for &i in a {
                            for &j in b {
                                s += d[i][j];
                            }
                        }
                        s / (a.len() * b.len()) as f64
                    }
                };
                let ra = *a.iter().min().unwrap();
                let rb = *b.iter().min().unwrap();
                let key = (ra.min(rb), ra.max(rb));
                let take = match best {
                    None => true,
                    Some((bd, bk, _, _)) => dist < bd || (dist == bd && key < bk),
                };
                if take {
                    best = Some((dist, key, x, y));
                }
            }
        }
        let (dist, key, x, y) = best.unwrap();
        merges.push((key.0, key.1, dist));
        let b = clusters.remove(y);
        clusters[x].extend(b);
    }
    let mut owner = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            owner[i] = c;
        }
    }
    let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
    let labels = owner
        .iter()
        .map(|o| {
            let next = seen.len();
            *seen.entry(*o).or_insert(next)
        })
        .collect();
    (labels, merges)
}

/// Random symmetric matrix with small integer entries (exact sums, many ties).
pub fn integer_matrix(rng: &mut TestRng, n: usize, max: u64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.below(max + 1) as f64;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

pub fn partition(labels: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(*l).or_default().insert(i);
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, Copy)]
pub struct PairMetrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
}

/// Scores straight from (truth, prediction) pairs; Unknown predictions are
/// plain errors.
pub fn metrics_from_pairs(pairs: &[(MovementLabel, MovementLabel)]) -> PairMetrics {
    let classes: BTreeSet<MovementLabel> = pairs
        .iter()
        .flat_map(|(t, p)| [*t, *p])
        .filter(|l| *l != MovementLabel::Unknown)
        .collect();
    let n = pairs.len() as f64;
    let correct = pairs.iter().filter(|(t, p)| t == p).count() as f64;
    let mut recalls = Vec::new();
    let mut f1s = Vec::new();
    for c in &classes {
        let tp = pairs.iter().filter(|(t, p)| t == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|(t, p)| t != c && p == c).count() as f64;
        let fn_ = pairs.iter().filter(|(t, p)| t == c && p != c).count() as f64;
        if tp + fn_ > 0.0 {
            recalls.push(tp / (tp + fn_));
        }
        f1s.push(if tp + fp == 0.0 || tp + fn_ == 0.0 || tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        });
    }
    PairMetrics {
        accuracy: correct / n,
        balanced_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
        macro_f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
    }
}

/// Insertion sort, then linear interpolation between order statistics.
pub fn percentile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = Vec::with_capacity(values.len());
    for &x in values {
        let pos = v.iter().position(|&y| y > x).unwrap_or(v.len());
        v.insert(pos, x);
    }
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= v.len() {
        return v[v.len() - 1];
    }
    let frac = h - lo as f64;
    if frac == 0.0 {
        v[lo]
    } else {
        v[lo] + frac * (v[lo + 1] - v[lo])
    }
}
