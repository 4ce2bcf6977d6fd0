//! Independent reference implementations used by the property and
//! acceptance suites. Each one is deliberately naive and shares no code with
//! the library beyond plain data types.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// Gaussian proximity weight, evaluated from the closed form.
pub fn kernel(k: usize, i: usize, sigma: f64) -> f64 {
    let d = (i as f64 - k as f64) / sigma;
    (-0.5 * d * d).exp()
}

/// Cheapest way to turn `s1` into `s2`, found by walking every alignment.
///
/// Each source symbol is either deleted or substituted, and insertions go
/// between source symbols. All costs use the original source and its
/// original 1-based indices. An insertion after source index `i` is centred
/// on `clamp(i, 1, n)`. A deletion ignores the deleted position itself when
/// searching for a similar neighbour.
pub fn brute_one_sided(s1: &[u32], s2: &[u32], alpha: f64, sigma: f64, sim: &dyn Fn(u32, u32) -> f64) -> f64 {
    let n = s1.len();
    let context = |x: u32, centre: usize, skip: Option<usize>| -> f64 {
        let mut best = 0.0f64;
        for i in 1..=n {
            if Some(i) == skip {
                continue;
            }
            best = best.max(sim(x, s1[i - 1]) * kernel(centre, i, sigma));
        }
        best
    };
    let gamma = |lev: f64, ctx: f64| alpha * lev + (1.0 - alpha) * (1.0 - ctx);
    let ins = |x: u32, after: usize| gamma(1.0, if n == 0 { 0.0 } else { context(x, after.clamp(1, n), None) });
    let del = |k: usize| gamma(1.0, context(s1[k - 1], k, Some(k)));
    let sub = |k: usize, x: u32| gamma(1.0 - sim(s1[k - 1], x), context(x, k, None));

    fn walk(
        i: usize,
        j: usize,
        acc: f64,
        s1: &[u32],
        s2: &[u32],
        best: &mut f64,
        ins: &dyn Fn(u32, usize) -> f64,
        del: &dyn Fn(usize) -> f64,
        sub: &dyn Fn(usize, u32) -> f64,
    ) {
        if i == s1.len() && j == s2.len() {
            *best = best.min(acc);
            return;
        }
        if j < s2.len() {
            walk(i, j + 1, acc + ins(s2[j], i), s1, s2, best, ins, del, sub);
        }
        if i < s1.len() {
            walk(i + 1, j, acc + del(i + 1), s1, s2, best, ins, del, sub);
        }
        if i < s1.len() && j < s2.len() {
            walk(i + 1, j + 1, acc + sub(i + 1, s2[j]), s1, s2, best, ins, del, sub);
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, 0.0, s1, s2, &mut best, &ins, &del, &sub);
    best
}

/// Textbook Wagner-Fischer with unit indels and a custom substitution cost.
pub fn wagner_fischer(a: &[u32], b: &[u32], sub: &dyn Fn(u32, u32) -> f64) -> f64 {
    let mut d = vec![vec![0.0; b.len() + 1]; a.len() + 1];
    for i in 0..=a.len() {
        d[i][0] = i as f64;
    }
    for j in 0..=b.len() {
        d[0][j] = j as f64;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let del = d[i - 1][j] + 1.0;
            let ins = d[i][j - 1] + 1.0;
            let rep = d[i - 1][j - 1] + sub(a[i - 1], b[j - 1]);
            d[i][j] = del.min(ins).min(rep);
        }
    }
    d[a.len()][b.len()]
}

/// A merge as `(smaller node id, larger node id, height)`; leaves are
/// `0..n`, merge `t` creates node `n + t`.
pub type NaiveMerge = (usize, usize, f64);

/// Ward clustering on raw coordinates: at every step merge the pair whose
/// union raises the within-cluster sum of squares the least. Heights are
/// `sqrt(2 |A||B| / (|A|+|B|) · |cA - cB|^2)`.
pub fn naive_ward(points: &[Vec<f64>]) -> Vec<NaiveMerge> {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| -> Vec<f64> {
        let dim = points[0].len();
        let mut c = vec![0.0; dim];
        for &m in members {
            for d in 0..dim {
                c[d] += points[m][d];
            }
        }
        c.iter().map(|v| v / members.len() as f64).collect()
    };
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in 0..clusters.len() {
                if x == y {
                    continue;
                }
                let (ia, a) = &clusters[x];
                let (ib, b) = &clusters[y];
                if ia > ib {
                    continue;
                }
                let (ca, cb) = (centroid(a), centroid(b));
                let sq: f64 = ca.iter().zip(&cb).map(|(p, q)| (p - q).powi(2)).sum();
                let (na, nb) = (a.len() as f64, b.len() as f64);
                let cost = 2.0 * na * nb / (na + nb) * sq;
                let cand = (cost, *ia, *ib, x, y);
                if best.is_none_or(|b| (cand.0, cand.1, cand.2) < (b.0, b.1, b.2)) {
                    best = Some(cand);
                }
            }
        }
        let (cost, ia, ib, x, y) = best.unwrap();
        let mut members = clusters[x].1.clone();
        members.extend(clusters[y].1.iter().copied());
        let (hi, lo) = (x.max(y), x.min(y));
        clusters.remove(hi);
        clusters.remove(lo);
        clusters.push((n + step, members));
        merges.push((ia, ib, cost.sqrt()));
    }
    merges
}

/// Smallest gap between any two candidate merge costs over the whole naive
/// run; used to skip inputs where ties make the order ill-defined.
pub fn naive_ward_min_cost_gap(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let centroid = |members: &[usize]| -> Vec<f64> {
        let dim = points[0].len();
        let mut c = vec![0.0; dim];
        for &m in members {
            for d in 0..dim {
                c[d] += points[m][d];
            }
        }
        c.iter().map(|v| v / members.len() as f64).collect()
    };
    let mut gap = f64::INFINITY;
    while clusters.len() > 1 {
        let mut costs = Vec::new();
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let (ca, cb) = (centroid(&clusters[x]), centroid(&clusters[y]));
                let sq: f64 = ca.iter().zip(&cb).map(|(p, q)| (p - q).powi(2)).sum();
                let (na, nb) = (clusters[x].len() as f64, clusters[y].len() as f64);
                costs.push((2.0 * na * nb / (na + nb) * sq, x, y));
            }
        }
        costs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if costs.len() > 1 {
            gap = gap.min(costs[1].0 - costs[0].0);
        }
        let (_, x, y) = costs[0];
        let mut merged = clusters[x].clone();
        merged.extend(clusters[y].iter().copied());
        clusters.remove(y);
        clusters.remove(x);
        clusters.push(merged);
    }
    gap
}

/// Every permutation of `0..n`, in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Adjacency as a bit mask over ordered pairs `(a, b)`, bit `a * n + b`.
pub fn relabel_mask(mask: u64, n: usize, perm: &[usize]) -> u64 {
    let mut out = 0u64;
    for a in 0..n {
        for b in 0..n {
            if mask & (1 << (a * n + b)) != 0 {
                out |= 1 << (perm[a] * n + perm[b]);
            }
        }
    }
    out
}

/// Orbit representative: the smallest mask over all relabellings.
pub fn orbit_min(mask: u64, n: usize, perms: &[Vec<usize>]) -> u64 {
    perms.iter().map(|p| relabel_mask(mask, n, p)).min().unwrap()
}

pub fn isomorphic(a: u64, b: u64, n: usize, perms: &[Vec<usize>]) -> bool {
    perms.iter().any(|p| relabel_mask(a, n, p) == b)
}

/// Loopless masks only use off-diagonal bits.
pub fn loopless_masks(n: usize) -> Vec<u64> {
    let pairs: Vec<usize> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| a * n + b)).collect();
    (0u64..1 << pairs.len())
        .map(|bits| {
            let mut m = 0u64;
            for (i, &p) in pairs.iter().enumerate() {
                if bits & (1 << i) != 0 {
                    m |= 1 << p;
                }
            }
            m
        })
        .collect()
}

pub fn mask_edges(mask: u64, n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| mask & (1 << (a * n + b)) != 0)
        .collect()
}

/// Member with the least summed distance; ties to the smallest id string.
pub fn brute_medoid(ids: &[String], d: &dyn Fn(usize, usize) -> f64, members: &[usize]) -> usize {
    let mut scored: Vec<(f64, &String, usize)> = members
        .iter()
        .map(|&i| (members.iter().map(|&j| if i == j { 0.0 } else { d(i, j) }).sum(), &ids[i], i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    scored[0].2
}

/// Most frequent list; ties to the lexicographically smallest.
pub fn brute_mode(lists: &[Vec<u32>]) -> Vec<u32> {
    let mut counts: BTreeMap<&Vec<u32>, usize> = BTreeMap::new();
    for l in lists {
        *counts.entry(l).or_default() += 1;
    }
    let top = *counts.values().max().unwrap();
    counts.into_iter().filter(|&(_, c)| c == top).map(|(l, _)| l.clone()).min().unwrap()
}

pub fn brute_diameter(d: &dyn Fn(usize, usize) -> f64, set: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for &i in set {
        for &j in set {
            if i != j {
                best = best.max(d(i, j));
            }
        }
    }
    best
}

/// Adjusted Rand index from the pair-counting definition.
pub fn brute_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_a += 1.0,
                (false, true) => only_b += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total: f64 = both + only_a + only_b + neither;
    let expected = (both + only_a) * (both + only_b) / total;
    let max = 0.5 * ((both + only_a) + (both + only_b));
    (both - expected) / (max - expected)
}

/// Sample Pearson correlation from the covariance definition.
pub fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
    let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    cov / (sx * sy)
}
