//! Agglomerative hierarchical clustering over a precomputed dissimilarity
//! matrix.
//!
//! Every item starts as a singleton; the two clusters with the smallest
//! linkage distance are merged until `k` clusters remain. Ties between equal
//! linkage distances go to the pair with the lexicographically smallest
//! `(min representative, max representative)`, where a cluster's
//! representative is its lowest item index.
//!
//! Dissimilarities may be negative (the composite trajectory measure can go
//! below zero); only their ordering matters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusteringError {
    #[error("target cluster count {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("matrix has {got} values, expected {n}x{n}")]
    Shape { n: usize, got: usize },
    #[error("matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("matrix entry ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("matrix diagonal ({0}, {0}) is not zero")]
    NonZeroDiagonal(usize),
    #[error("labels must cover 0..k without gaps")]
    BadLabels,
}

/// Symmetric `n x n` dissimilarity matrix with zero diagonal, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DissimilarityMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self, ClusteringError> {
        if values.len() != n * n {
            return Err(ClusteringError::Shape { n, got: values.len() });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(ClusteringError::NonZeroDiagonal(i));
            }
            for j in (i + 1)..n {
                let (a, b) = (values[i * n + j], values[j * n + i]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(ClusteringError::NonFinite { i, j });
                }
                if a != b {
                    return Err(ClusteringError::NotSymmetric { i, j });
                }
            }
        }
        Ok(DissimilarityMatrix { n, values })
    }

    /// Fills the upper triangle from `f(i, j)` (called once per `i < j`) and
    /// mirrors it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, ClusteringError> {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        DissimilarityMatrix::new(n, values)
    }

    /// Builds from a condensed upper triangle in `(0,1), (0,2), .., (1,2), ..`
    /// order.
    pub fn from_condensed(n: usize, upper: &[f64]) -> Result<Self, ClusteringError> {
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(ClusteringError::Shape { n, got: upper.len() });
        }
        let mut it = upper.iter().copied();
        DissimilarityMatrix::from_fn(n, |_, _| it.next().unwrap())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Same matrix with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ClusteringError> {
        DissimilarityMatrix::new(self.n, self.values.iter().map(|v| v * factor).collect())
    }

    /// Restriction to the listed items, in the given order.
    pub fn submatrix(&self, items: &[usize]) -> DissimilarityMatrix {
        let m = items.len();
        let mut values = Vec::with_capacity(m * m);
        for &a in items {
            for &b in items {
                values.push(self.get(a, b));
            }
        }
        DissimilarityMatrix { n: m, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    /// Minimum pairwise dissimilarity between the two clusters.
    Single,
    /// Unweighted mean of all cross-cluster dissimilarities (UPGMA).
    Average,
}

/// Flat partition of `n` items into `k` non-empty clusters labelled `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    /// Validates that the labels use every value in `0..k` for some `k`.
    pub fn new(labels: Vec<usize>) -> Result<Self, ClusteringError> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; k];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(ClusteringError::BadLabels);
        }
        Ok(ClusterAssignment { labels, k })
    }

    /// Renumbers arbitrary labels by order of first appearance.
    pub fn relabel(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|r| {
                let next = map.len();
                *map.entry(*r).or_insert(next)
            })
            .collect();
        ClusterAssignment { labels, k: map.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Item indices of every cluster, each list ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (item, &l) in self.labels.iter().enumerate() {
            out[l].push(item);
        }
        out
    }

    /// The partition as a canonical set of sets, independent of label values.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut m = self.members();
        m.sort();
        m
    }
}

pub fn cluster_sizes(c: &ClusterAssignment) -> Vec<usize> {
    let mut sizes = vec![0; c.k];
    for &l in &c.labels {
        sizes[l] += 1;
    }
    sizes
}

/// One merge step: the representatives of the merged clusters and their
/// linkage distance at the time of merging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

struct Active {
    rep: usize,
    size: usize,
}

/// Runs the merge loop and also returns every merge performed.
pub fn agglomerate_traced(
    m: &DissimilarityMatrix,
    k: usize,
    linkage: Linkage,
) -> Result<(ClusterAssignment, Vec<Merge>), ClusteringError> {
    let n = m.n();
    if k == 0 || k > n {
        return Err(ClusteringError::KOutOfRange { k, n });
    }
    // Cluster-level table indexed by slot. Single keeps the running minimum;
    // Average keeps the running sum of cross dissimilarities so the mean is
    // always sum / (|A| * |B|).
    let mut table: Vec<f64> = (0..n * n).map(|x| m.get(x / n, x % n)).collect();
    let mut active: Vec<Option<Active>> = (0..n).map(|i| Some(Active { rep: i, size: 1 })).collect();
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - k);

    let linkage_of = |table: &[f64], a: &Active, b: &Active, sa: usize, sb: usize| match linkage {
        Linkage::Single => table[sa * n + sb],
        Linkage::Average => table[sa * n + sb] / (a.size * b.size) as f64,
    };

    for _ in 0..(n - k) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for sa in 0..n {
            let Some(a) = &active[sa] else { continue };
            for sb in (sa + 1)..n {
                let Some(b) = &active[sb] else { continue };
                let d = linkage_of(&table, a, b, sa, sb);
                let key = (a.rep.min(b.rep), a.rep.max(b.rep));
                let better = match &best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < *bd || (d == *bd && key < *bkey),
                };
                if better {
                    best = Some((d, key, sa, sb));
                }
            }
        }
        let (distance, (ra, rb), sa, sb) = best.expect("at least two active clusters");
        merges.push(Merge { a: ra, b: rb, distance });

        // fold slot sb into slot sa
        let b = active[sb].take().expect("active");
        for sc in 0..n {
            if sc == sa || active[sc].is_none() {
                continue;
            }
            let v = match linkage {
                Linkage::Single => table[sa * n + sc].min(table[sb * n + sc]),
                Linkage::Average => table[sa * n + sc] + table[sb * n + sc],
            };
            table[sa * n + sc] = v;
            table[sc * n + sa] = v;
        }
        let a = active[sa].as_mut().expect("active");
        a.size += b.size;
        a.rep = a.rep.min(b.rep);
        for o in owner.iter_mut() {
            if *o == sb {
                *o = sa;
            }
        }
    }
    Ok((ClusterAssignment::relabel(&owner), merges))
}

/// Flat `k`-cluster partition; see the module docs for the merge rule.
pub fn agglomerate(
    m: &DissimilarityMatrix,
    k: usize,
    linkage: Linkage,
) -> Result<ClusterAssignment, ClusteringError> {
    agglomerate_traced(m, k, linkage).map(|(c, _)| c)
}
