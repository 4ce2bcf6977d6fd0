//! Ward hierarchical agglomerative clustering over a precomputed
//! dissimilarity matrix, plus partition validity and per-cluster centrality.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::SemanticSequence;
use crate::metric::DistanceMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
    #[error("invalid dissimilarity {value} between {i} and {j}")]
    InvalidInput { i: usize, j: usize, value: f64 },
    #[error("k = {k} is outside [{lo}, {hi}]")]
    KOutOfRange { k: usize, lo: usize, hi: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("label count {got} does not match {expected} observations")]
    LabelCount { got: usize, expected: usize },
}

/// How input dissimilarities enter the Lance-Williams update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WardMode {
    /// Square the input, merge, report square-rooted heights.
    #[default]
    Squared,
    /// Apply the update to the raw values.
    Raw,
}

/// One agglomeration. Leaves are nodes `0..n`; merge `t` creates node `n + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

fn check_input(m: &DistanceMatrix) -> Result<(), ClusterError> {
    let n = m.len();
    if n < 2 {
        return Err(ClusterError::TooFew(n));
    }
    for i in 1..n {
        for j in 0..i {
            let v = m.get(i, j);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ClusterError::InvalidInput { i, j, value: v });
            }
        }
    }
    Ok(())
}

/// Ward linkage via the Lance-Williams recurrence.
///
/// Ties between candidate merges go to the pair with the lowest
/// `(smaller node id, larger node id)`.
pub fn hac_ward(m: &DistanceMatrix, mode: WardMode) -> Result<Dendrogram, ClusterError> {
    check_input(m)?;
    let n = m.len();
    let lift = |v: f64| if mode == WardMode::Squared { v * v } else { v };
    let lower = |h: f64| if mode == WardMode::Squared { h.max(0.0).sqrt() } else { h };

    // Active slots hold one cluster each; dist is the full working matrix.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..i {
            let v = lift(m.get(i, j));
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let mut node: Vec<usize> = (0..n).collect();
    let mut size: Vec<usize> = vec![1; n];
    let mut active: Vec<bool> = vec![true; n];

    // Nearest active neighbour per slot: (distance, node id of neighbour, slot).
    let nearest = |s: usize, dist: &[f64], node: &[usize], active: &[bool]| -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for t in 0..n {
            if t == s || !active[t] {
                continue;
            }
            let cand = (dist[s * n + t], node[t], t);
            if best.is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                best = Some(cand);
            }
        }
        best
    };
    let mut nn: Vec<Option<(f64, usize, usize)>> = (0..n).map(|s| nearest(s, &dist, &node, &active)).collect();

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        // Global minimum over (distance, low node id, high node id).
        let mut pick: Option<(f64, usize, usize, usize, usize)> = None;
        for s in 0..n {
            if !active[s] {
                continue;
            }
            let (d, other, t) = nn[s].expect("an active partner exists");
            let (lo, hi) = (node[s].min(other), node[s].max(other));
            let cand = (d, lo, hi, s, t);
            if pick.is_none_or(|p| (cand.0, cand.1, cand.2) < (p.0, p.1, p.2)) {
                pick = Some(cand);
            }
        }
        let (d, lo, hi, s, t) = pick.expect("two active clusters");
        let (a, b) = if node[s] == lo { (s, t) } else { (t, s) };
        let (na, nb) = (size[a] as f64, size[b] as f64);

        // Merged cluster lives in slot a.
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((na + nk) * dist[a * n + k] + (nb + nk) * dist[b * n + k] - nk * d) / (na + nb + nk);
            dist[a * n + k] = v;
            dist[k * n + a] = v;
        }
        active[b] = false;
        size[a] += size[b];
        node[a] = n + step;
        merges.push(Merge {
            left: lo,
            right: hi,
            height: lower(d),
            size: size[a],
        });

        for k in 0..n {
            if !active[k] {
                continue;
            }
            let stale = match nn[k] {
                Some((_, _, slot)) => slot == a || slot == b || k == a,
                None => true,
            };
            if stale {
                nn[k] = nearest(k, &dist, &node, &active);
            } else if k != a {
                let cand = dist[k * n + a];
                let (cur, other, _) = nn[k].expect("checked above");
                if (cand, node[a]) < (cur, other) {
                    nn[k] = Some((cand, node[a], a));
                }
            }
        }
    }
    Ok(Dendrogram { leaves: n, merges })
}

/// Cluster labels `1..=k` per observation, numbered by smallest member index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clustering {
    pub k: usize,
    pub labels: Vec<usize>,
}

impl Clustering {
    pub fn from_labels(labels: Vec<usize>) -> Result<Self, ClusterError> {
        let k = labels.iter().copied().max().unwrap_or(0);
        for c in 1..=k {
            if !labels.contains(&c) {
                return Err(ClusterError::EmptyCluster(c));
            }
        }
        if labels.contains(&0) {
            return Err(ClusterError::EmptyCluster(0));
        }
        Ok(Clustering { k, labels })
    }

    /// Member indices of cluster `c` (1-based), ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == c).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (1..=self.k).map(|c| self.labels.iter().filter(|&&l| l == c).count()).collect()
    }
}

impl Dendrogram {
    /// Partition obtained by undoing the `k - 1` highest merges.
    pub fn cut(&self, k: usize) -> Result<Clustering, ClusterError> {
        let n = self.leaves;
        if !(1..=n).contains(&k) {
            return Err(ClusterError::KOutOfRange { k, lo: 1, hi: n });
        }
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (t, m) in self.merges.iter().take(n - k).enumerate() {
            let (l, r) = (find(&mut parent, m.left), find(&mut parent, m.right));
            parent[l] = n + t;
            parent[r] = n + t;
        }
        let mut label_of: BTreeMap<usize, usize> = BTreeMap::new();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let root = find(&mut parent, i);
            let next = label_of.len() + 1;
            labels.push(*label_of.entry(root).or_insert(next));
        }
        Ok(Clustering { k, labels })
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// For each `k` in `2..=n`, the height jump between the merge that
    /// reduces `k` clusters to `k - 1` and the one before it. Sorted by gap
    /// descending, then `k` ascending.
    pub fn inertia_gaps(&self) -> Vec<(usize, f64)> {
        let n = self.leaves;
        let h = self.heights();
        let mut gaps: Vec<(usize, f64)> = (2..=n)
            .map(|k| {
                let idx = n - k;
                let before = if idx == 0 { 0.0 } else { h[idx - 1] };
                (k, h[idx] - before)
            })
            .collect();
        gaps.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        gaps
    }

    pub fn inertia_gap(&self, k: usize) -> Option<f64> {
        self.inertia_gaps().into_iter().find(|&(kk, _)| kk == k).map(|(_, g)| g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Silhouette {
    pub values: Vec<f64>,
    /// Mean per cluster, index `c - 1`.
    pub per_cluster: Vec<f64>,
    pub mean: f64,
}

/// Silhouette widths; members of singleton clusters score 0.
pub fn silhouette(m: &DistanceMatrix, cl: &Clustering) -> Result<Silhouette, ClusterError> {
    let n = m.len();
    if cl.labels.len() != n {
        return Err(ClusterError::LabelCount {
            got: cl.labels.len(),
            expected: n,
        });
    }
    if cl.k < 2 {
        return Err(ClusterError::KOutOfRange { k: cl.k, lo: 2, hi: n });
    }
    let sizes = cl.sizes();
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let own = cl.labels[i];
            if sizes[own - 1] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; cl.k];
            for j in 0..n {
                if j != i {
                    sums[cl.labels[j] - 1] += m.get(i, j);
                }
            }
            let a = sums[own - 1] / (sizes[own - 1] - 1) as f64;
            let b = (1..=cl.k)
                .filter(|&c| c != own)
                .map(|c| sums[c - 1] / sizes[c - 1] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    let per_cluster = (1..=cl.k)
        .map(|c| {
            let mem = cl.members(c);
            mem.iter().map(|&i| values[i]).sum::<f64>() / mem.len() as f64
        })
        .collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    Ok(Silhouette {
        values,
        per_cluster,
        mean,
    })
}

/// Member minimising the summed distance to the others; ties go to the
/// lexicographically smallest id.
pub fn medoid(m: &DistanceMatrix, members: &[usize]) -> usize {
    assert!(!members.is_empty(), "medoid of an empty cluster");
    let mut best = members[0];
    let mut best_sum = f64::INFINITY;
    for &i in members {
        let sum: f64 = members.iter().map(|&j| m.get(i, j)).sum();
        if sum < best_sum || (sum == best_sum && m.ids()[i] < m.ids()[best]) {
            best = i;
            best_sum = sum;
        }
    }
    best
}

/// Most frequent exact activity list; ties go to the smallest list.
pub fn mode(sequences: &[&SemanticSequence]) -> Option<Vec<crate::ontology::ConceptId>> {
    let mut freq: BTreeMap<&[crate::ontology::ConceptId], usize> = BTreeMap::new();
    for s in sequences {
        *freq.entry(s.activities()).or_default() += 1;
    }
    let top = freq.values().copied().max()?;
    freq.into_iter().find(|&(_, c)| c == top).map(|(s, _)| s.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scatter {
    pub diameter: f64,
    pub diameter95: f64,
    pub radius: f64,
    pub radius95: f64,
}

/// Diameter and radius, plus variants after dropping the `ceil(trim·|C|)`
/// members farthest from the medoid (never the medoid itself). Radii are
/// measured from the untrimmed medoid.
pub fn scatter(m: &DistanceMatrix, members: &[usize], trim: f64) -> Scatter {
    let centre = medoid(m, members);
    let diameter_of = |set: &[usize]| {
        let mut d = 0.0f64;
        for (x, &i) in set.iter().enumerate() {
            for &j in &set[..x] {
                d = d.max(m.get(i, j));
            }
        }
        d
    };
    let radius_of = |set: &[usize]| set.iter().map(|&i| m.get(centre, i)).fold(0.0, f64::max);

    let drop = ((trim * members.len() as f64).ceil() as usize).min(members.len() - 1);
    let mut by_distance: Vec<usize> = members.iter().copied().filter(|&i| i != centre).collect();
    by_distance.sort_by(|&a, &b| m.get(centre, b).total_cmp(&m.get(centre, a)).then(m.ids()[a].cmp(&m.ids()[b])));
    let mut kept: Vec<usize> = by_distance[drop..].to_vec();
    kept.push(centre);
    kept.sort_unstable();

    Scatter {
        diameter: diameter_of(members),
        diameter95: diameter_of(&kept),
        radius: radius_of(members),
        radius95: radius_of(&kept),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KCandidate {
    pub k: usize,
    pub mean_silhouette: f64,
    pub inertia_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSuggestion {
    /// Ascending `k`.
    pub table: Vec<KCandidate>,
    /// `k` values by mean silhouette descending (ties: smaller `k`).
    pub by_silhouette: Vec<usize>,
    /// `k` values by inertia gap descending (ties: smaller `k`).
    pub by_inertia_gap: Vec<usize>,
}

impl KSuggestion {
    pub fn best_silhouette(&self) -> usize {
        self.by_silhouette[0]
    }
}

/// Both validity indices for every `k` in `lo..=hi`.
pub fn suggest_k(d: &Dendrogram, m: &DistanceMatrix, lo: usize, hi: usize) -> Result<KSuggestion, ClusterError> {
    let n = d.leaves;
    if lo < 2 || hi > n.saturating_sub(1) || lo > hi {
        return Err(ClusterError::KOutOfRange {
            k: if lo < 2 || lo > hi { lo } else { hi },
            lo: 2,
            hi: n.saturating_sub(1),
        });
    }
    let gaps = d.inertia_gaps();
    let mut table = Vec::new();
    for k in lo..=hi {
        let cl = d.cut(k)?;
        table.push(KCandidate {
            k,
            mean_silhouette: silhouette(m, &cl)?.mean,
            inertia_gap: gaps.iter().find(|g| g.0 == k).map(|g| g.1).unwrap_or(0.0),
        });
    }
    let rank = |key: fn(&KCandidate) -> f64| {
        let mut v: Vec<&KCandidate> = table.iter().collect();
        v.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.k.cmp(&b.k)));
        v.into_iter().map(|c| c.k).collect::<Vec<_>>()
    };
    Ok(KSuggestion {
        by_silhouette: rank(|c| c.mean_silhouette),
        by_inertia_gap: rank(|c| c.inertia_gap),
        table,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1) / 2) as f64;
    let mut joint: BTreeMap<(&A, &B), usize> = BTreeMap::new();
    let mut ra: BTreeMap<&A, usize> = BTreeMap::new();
    let mut rb: BTreeMap<&B, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
