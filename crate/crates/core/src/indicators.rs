//! Corpus-level descriptive indicators: length and state distributions,
//! origin-destination counts, daily-pattern motifs, entropy and
//! predictability, distinct-activity statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{aggregate_sequence, stop_projection, Corpus, SemanticSequence};
use crate::ontology::{AggregationLevel, ConceptId, KnowledgeGraph, OntologyError};

/// Largest daily-pattern graph the canonical labeller accepts.
pub const MAX_MOTIF_NODES: usize = 12;

#[derive(Debug, Error)]
pub enum IndicatorError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("daily pattern has {0} nodes, more than the supported {MAX_MOTIF_NODES}")]
    TooManyNodes(usize),
    #[error("breakpoints must be strictly increasing")]
    Breakpoints,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram<K: Ord> {
    pub bins: BTreeMap<K, usize>,
    pub total: usize,
}

impl<K: Ord> Histogram<K> {
    pub fn from_counts(bins: BTreeMap<K, usize>) -> Self {
        let total = bins.values().sum();
        Histogram { bins, total }
    }

    pub fn count(&self, k: &K) -> usize {
        self.bins.get(k).copied().unwrap_or(0)
    }
}

/// Maps a sequence length to a length-interval index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum IntervalBinning {
    /// `k = max(1, ceil((n - 3) / 2))`.
    #[default]
    Default,
    /// `k` is the number of breakpoints strictly below `n` (so it starts at 0).
    Breakpoints(Vec<usize>),
}

impl IntervalBinning {
    pub fn breakpoints(b: Vec<usize>) -> Result<Self, IndicatorError> {
        if b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IndicatorError::Breakpoints);
        }
        Ok(IntervalBinning::Breakpoints(b))
    }

    pub fn interval(&self, n: usize) -> usize {
        match self {
            IntervalBinning::Default => n.saturating_sub(3).div_ceil(2).max(1),
            IntervalBinning::Breakpoints(b) => b.partition_point(|&x| x < n),
        }
    }

    /// Interval of a possibly fractional length, such as a median.
    pub fn interval_of(&self, x: f64) -> usize {
        match self {
            IntervalBinning::Default => ((x - 3.0) / 2.0).ceil().max(1.0) as usize,
            IntervalBinning::Breakpoints(b) => b.partition_point(|&v| (v as f64) < x),
        }
    }

    /// Smallest index this binning can produce.
    pub fn first(&self) -> usize {
        match self {
            IntervalBinning::Default => 1,
            IntervalBinning::Breakpoints(_) => 0,
        }
    }
}

impl fmt::Display for IntervalBinning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntervalBinning::Default => f.write_str("default"),
            IntervalBinning::Breakpoints(b) => {
                let parts: Vec<String> = b.iter().map(usize::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl std::str::FromStr for IntervalBinning {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "default" {
            return Ok(IntervalBinning::Default);
        }
        let b = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad breakpoint `{p}`")))
            .collect::<Result<Vec<_>, _>>()?;
        IntervalBinning::breakpoints(b).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthDistribution {
    pub histogram: Histogram<usize>,
    pub poisson_lambda: f64,
}

pub fn length_distribution(sequences: &[SemanticSequence], binning: &IntervalBinning) -> Result<LengthDistribution, IndicatorError> {
    if sequences.is_empty() {
        return Err(IndicatorError::EmptyCorpus);
    }
    let ks: Vec<usize> = sequences.iter().map(|s| binning.interval(s.len())).collect();
    let max = *ks.iter().max().expect("non-empty");
    let mut bins: BTreeMap<usize, usize> = (binning.first()..=max).map(|k| (k, 0)).collect();
    for &k in &ks {
        *bins.entry(k).or_default() += 1;
    }
    Ok(LengthDistribution {
        histogram: Histogram::from_counts(bins),
        poisson_lambda: poisson_mle(&ks),
    })
}

/// Maximum-likelihood Poisson rate: the sample mean.
pub fn poisson_mle(ks: &[usize]) -> f64 {
    ks.iter().sum::<usize>() as f64 / ks.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZipfFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDistribution {
    pub histogram: Histogram<ConceptId>,
    /// `None` with fewer than three distinct activities.
    pub zipf: Option<ZipfFit>,
}

pub fn state_distribution(
    graph: &KnowledgeGraph,
    sequences: &[SemanticSequence],
    lvl: &AggregationLevel,
) -> Result<StateDistribution, IndicatorError> {
    if sequences.is_empty() {
        return Err(IndicatorError::EmptyCorpus);
    }
    let mut bins: BTreeMap<ConceptId, usize> = BTreeMap::new();
    for s in sequences {
        for &a in aggregate_sequence(graph, s, lvl)?.activities() {
            *bins.entry(a).or_default() += 1;
        }
    }
    let mut ranked: Vec<(ConceptId, usize)> = bins.iter().map(|(&c, &n)| (c, n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let counts: Vec<usize> = ranked.iter().map(|&(_, n)| n).collect();
    let zipf = zipf_fit(&counts);
    if zipf.is_none() {
        log::info!("Zipf fit skipped: fewer than 3 distinct activities");
    }
    Ok(StateDistribution {
        histogram: Histogram::from_counts(bins),
        zipf,
    })
}

/// Least-squares line through `(ln rank, ln frequency)`; `counts` are in
/// rank order and zero counts are dropped.
pub fn zipf_fit(counts: &[usize]) -> Option<ZipfFit> {
    let pts: Vec<(f64, f64)> = counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(r, &c)| (((r + 1) as f64).ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(ZipfFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Transition counts between consecutive activities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdMatrix {
    pub concepts: Vec<ConceptId>,
    /// Row = origin, column = destination.
    pub counts: Vec<Vec<u64>>,
}

impl OdMatrix {
    pub fn from_sequences<'a>(sequences: impl IntoIterator<Item = &'a SemanticSequence>) -> Self {
        let mut pairs: BTreeMap<(ConceptId, ConceptId), u64> = BTreeMap::new();
        let mut concepts = std::collections::BTreeSet::new();
        for s in sequences {
            concepts.extend(s.activities().iter().copied());
            for w in s.activities().windows(2) {
                *pairs.entry((w[0], w[1])).or_default() += 1;
            }
        }
        let concepts: Vec<ConceptId> = concepts.into_iter().collect();
        let pos: HashMap<ConceptId, usize> = concepts.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut counts = vec![vec![0; concepts.len()]; concepts.len()];
        for ((a, b), n) in pairs {
            counts[pos[&a]][pos[&b]] = n;
        }
        OdMatrix { concepts, counts }
    }

    pub fn get(&self, from: ConceptId, to: ConceptId) -> u64 {
        match (self.concepts.binary_search(&from), self.concepts.binary_search(&to)) {
            (Ok(i), Ok(j)) => self.counts[i][j],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Applies the optional stop projection, then aggregation. Sequences left
/// without any stop are dropped.
pub fn prepare_sequences(
    graph: &KnowledgeGraph,
    sequences: &[SemanticSequence],
    stops_only: bool,
    lvl: &AggregationLevel,
) -> Result<Vec<SemanticSequence>, IndicatorError> {
    let mut out = Vec::with_capacity(sequences.len());
    for s in sequences {
        let projected = if stops_only {
            match stop_projection(graph, s) {
                Some(p) => p,
                None => continue,
            }
        } else {
            s.clone()
        };
        out.push(aggregate_sequence(graph, &projected, lvl)?);
    }
    Ok(out)
}

pub fn od_matrix(corpus: &Corpus, stops_only: bool, lvl: &AggregationLevel) -> Result<OdMatrix, IndicatorError> {
    if corpus.is_empty() {
        return Err(IndicatorError::EmptyCorpus);
    }
    let prepared = prepare_sequences(corpus.graph(), corpus.sequences(), stops_only, lvl)?;
    Ok(OdMatrix::from_sequences(&prepared))
}

/// Directed graph on `nodes` vertices, adjacency stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotifGraph {
    nodes: usize,
    adj: Vec<bool>,
}

impl MotifGraph {
    pub fn new(nodes: usize) -> Self {
        MotifGraph {
            nodes,
            adj: vec![false; nodes * nodes],
        }
    }

    pub fn from_edges(nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = MotifGraph::new(nodes);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    /// Distinct activities become vertices, numbered by first appearance.
    pub fn from_sequence(activities: &[ConceptId]) -> Self {
        let mut order: Vec<ConceptId> = Vec::new();
        for &a in activities {
            if !order.contains(&a) {
                order.push(a);
            }
        }
        let pos = |c: ConceptId| order.iter().position(|&x| x == c).expect("seen");
        MotifGraph::from_edges(order.len(), activities.windows(2).map(|w| (pos(w[0]), pos(w[1]))))
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        self.adj[a * self.nodes + b] = true;
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.nodes + b]
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    /// Copy with vertex `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut g = MotifGraph::new(self.nodes);
        for a in 0..self.nodes {
            for b in 0..self.nodes {
                if self.has_edge(a, b) {
                    g.add_edge(perm[a], perm[b]);
                }
            }
        }
        g
    }

    pub fn canonical_key(&self) -> Result<MotifKey, IndicatorError> {
        if self.nodes > MAX_MOTIF_NODES {
            return Err(IndicatorError::TooManyNodes(self.nodes));
        }
        let bits = canonical_code(self);
        let mut code = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                code[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Ok(MotifKey {
            nodes: self.nodes as u8,
            edges: self.edges() as u16,
            code,
        })
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut s = format!("digraph \"{name}\" {{\n");
        for v in 0..self.nodes {
            s.push_str(&format!("  n{v};\n"));
        }
        for a in 0..self.nodes {
            for b in 0..self.nodes {
                if self.has_edge(a, b) {
                    s.push_str(&format!("  n{a} -> n{b};\n"));
                }
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Isomorphism-invariant identifier of a daily-pattern graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MotifKey {
    nodes: u8,
    edges: u16,
    code: Vec<u8>,
}

impl MotifKey {
    pub fn nodes(&self) -> usize {
        usize::from(self.nodes)
    }

    pub fn edges(&self) -> usize {
        usize::from(self.edges)
    }

    /// The canonical representative.
    pub fn graph(&self) -> MotifGraph {
        let n = self.nodes();
        let bit = |i: usize| self.code[i / 8] & (0x80 >> (i % 8)) != 0;
        let mut g = MotifGraph::new(n);
        let mut i = 0;
        for t in 0..n {
            if bit(i) {
                g.add_edge(t, t);
            }
            i += 1;
            for s in 0..t {
                if bit(i) {
                    g.add_edge(s, t);
                }
                if bit(i + 1) {
                    g.add_edge(t, s);
                }
                i += 2;
            }
        }
        g
    }
}

impl fmt::Display for MotifKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}e{}-", self.nodes, self.edges)?;
        if self.code.is_empty() {
            return f.write_str("0");
        }
        for b in &self.code {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl Serialize for MotifKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Colour refinement on (out-degree, in-degree, loop), iterated with sorted
/// neighbour colours until the partition is stable. Colours are ranks of
/// sorted signatures, so they are invariant under relabelling.
fn refine_colours(g: &MotifGraph) -> Vec<usize> {
    let n = g.nodes;
    let rank = |sigs: &[Vec<usize>]| -> Vec<usize> {
        let mut uniq: Vec<&Vec<usize>> = sigs.iter().collect();
        uniq.sort();
        uniq.dedup();
        sigs.iter().map(|s| uniq.binary_search(&s).expect("present")).collect()
    };
    let initial: Vec<Vec<usize>> = (0..n)
        .map(|v| {
            let out = (0..n).filter(|&u| u != v && g.has_edge(v, u)).count();
            let inn = (0..n).filter(|&u| u != v && g.has_edge(u, v)).count();
            vec![out, inn, usize::from(g.has_edge(v, v))]
        })
        .collect();
    let mut colours = rank(&initial);
    loop {
        let classes = colours.iter().collect::<std::collections::BTreeSet<_>>().len();
        let sigs: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                let mut outs: Vec<usize> = (0..n).filter(|&u| u != v && g.has_edge(v, u)).map(|u| colours[u]).collect();
                let mut ins: Vec<usize> = (0..n).filter(|&u| u != v && g.has_edge(u, v)).map(|u| colours[u]).collect();
                outs.sort_unstable();
                ins.sort_unstable();
                let mut sig = vec![colours[v], outs.len()];
                sig.extend(outs);
                sig.push(usize::MAX);
                sig.extend(ins);
                sig
            })
            .collect();
        let next = rank(&sigs);
        let next_classes = next.iter().collect::<std::collections::BTreeSet<_>>().len();
        colours = next;
        if next_classes == classes {
            return colours;
        }
    }
}

/// Exchanging `u` and `v` is an automorphism.
fn twins(g: &MotifGraph, u: usize, v: usize) -> bool {
    g.has_edge(u, u) == g.has_edge(v, v)
        && g.has_edge(u, v) == g.has_edge(v, u)
        && (0..g.nodes)
            .filter(|&w| w != u && w != v)
            .all(|w| g.has_edge(u, w) == g.has_edge(v, w) && g.has_edge(w, u) == g.has_edge(w, v))
}

/// Minimum adjacency code over all vertex orders that list colour classes in
/// ascending colour. Position `t` contributes its loop bit, then the pair
/// `(edge s->t, edge t->s)` for every earlier position `s`, so prefixes can be
/// compared while the order is still being built.
fn canonical_code(g: &MotifGraph) -> Vec<bool> {
    let n = g.nodes;
    if n == 0 {
        return Vec::new();
    }
    let colours = refine_colours(g);
    let mut slot_colour = colours.clone();
    slot_colour.sort_unstable();

    struct Search<'a> {
        g: &'a MotifGraph,
        colours: Vec<usize>,
        slot_colour: Vec<usize>,
        order: Vec<usize>,
        used: Vec<bool>,
        code: Vec<bool>,
        best: Option<Vec<bool>>,
    }

    impl Search<'_> {
        fn go(&mut self) {
            let t = self.order.len();
            if t == self.g.nodes {
                if self.best.as_ref().is_none_or(|b| self.code < *b) {
                    self.best = Some(self.code.clone());
                }
                return;
            }
            let mut tried: Vec<usize> = Vec::new();
            for v in 0..self.g.nodes {
                if self.used[v] || self.colours[v] != self.slot_colour[t] {
                    continue;
                }
                // Swapping twins fixes the prefix, so their subtrees yield the same codes.
                if tried.iter().any(|&u| twins(self.g, u, v)) {
                    continue;
                }
                tried.push(v);
                let mark = self.code.len();
                self.code.push(self.g.has_edge(v, v));
                for s in 0..t {
                    let u = self.order[s];
                    self.code.push(self.g.has_edge(u, v));
                    self.code.push(self.g.has_edge(v, u));
                }
                let worse = self.best.as_ref().is_some_and(|b| self.code[..] > b[..self.code.len()]);
                if !worse {
                    self.used[v] = true;
                    self.order.push(v);
                    self.go();
                    self.order.pop();
                    self.used[v] = false;
                }
                self.code.truncate(mark);
            }
        }
    }

    let mut search = Search {
        g,
        colours,
        slot_colour,
        order: Vec::with_capacity(n),
        used: vec![false; n],
        code: Vec::with_capacity(n * n),
        best: None,
    };
    search.go();
    search.best.expect("at least one order")
}

/// Canonical key of one sequence's daily pattern. `None` when the stop
/// projection is requested and the sequence has no stop.
pub fn daily_pattern(graph: &KnowledgeGraph, s: &SemanticSequence, stops_only: bool) -> Result<Option<MotifKey>, IndicatorError> {
    let projected = if stops_only {
        match stop_projection(graph, s) {
            Some(p) => p,
            None => return Ok(None),
        }
    } else {
        s.clone()
    };
    MotifGraph::from_sequence(projected.activities()).canonical_key().map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotifCount {
    pub key: MotifKey,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotifCensus {
    pub counts: BTreeMap<MotifKey, usize>,
    /// Sequences with a pattern.
    pub total: usize,
    /// Sequences without a stop under the stop projection.
    pub skipped: usize,
}

impl MotifCensus {
    /// By count descending, then key.
    pub fn ranked(&self) -> Vec<MotifCount> {
        let mut v: Vec<MotifCount> = self
            .counts
            .iter()
            .map(|(k, &c)| MotifCount {
                key: k.clone(),
                count: c,
                share: if self.total == 0 { 0.0 } else { c as f64 / self.total as f64 },
            })
            .collect();
        v.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
        v
    }

    /// Share of sequences following one of the `top` most frequent motifs.
    pub fn coverage(&self, top: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.ranked().iter().take(top).map(|m| m.count).sum::<usize>() as f64 / self.total as f64
    }
}

pub fn motif_census(graph: &KnowledgeGraph, sequences: &[SemanticSequence], stops_only: bool) -> Result<MotifCensus, IndicatorError> {
    let mut counts = BTreeMap::new();
    let mut skipped = 0;
    for s in sequences {
        match daily_pattern(graph, s, stops_only)? {
            Some(k) => *counts.entry(k).or_default() += 1,
            None => skipped += 1,
        }
    }
    Ok(MotifCensus {
        total: counts.values().sum(),
        counts,
        skipped,
    })
}

/// Match lengths of the Lempel-Ziv estimator. `λ_i` is the length of the
/// shortest substring starting at `i` that does not occur inside the history
/// `x_1..x_{i-1}`; if every prefix of the remainder occurs there, it is the
/// remainder length plus one.
pub fn lz_lambdas<T: PartialEq>(s: &[T]) -> Vec<usize> {
    let n = s.len();
    let mut lambdas = vec![0; n];
    // next[j] = longest common prefix of s[j..] and s[i+1..]
    let mut next = vec![0usize; n + 1];
    let mut cur = vec![0usize; n + 1];
    for i in (0..n).rev() {
        let mut best = 0;
        for j in 0..i {
            cur[j] = if s[j] == s[i] { 1 + next[j + 1] } else { 0 };
            best = best.max(cur[j].min(i - j));
        }
        lambdas[i] = best + 1;
        std::mem::swap(&mut next, &mut cur);
    }
    lambdas
}

/// `h_est = n / Σλ_i · log2 n`, in bits.
pub fn lz_entropy<T: PartialEq>(s: &[T]) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    let total: usize = lz_lambdas(s).iter().sum();
    n as f64 / total as f64 * (n as f64).log2()
}

/// `log2` of the number of distinct symbols.
pub fn random_entropy<T: Ord>(s: &[T]) -> f64 {
    (distinct(s) as f64).log2()
}

/// Shannon entropy of the symbol frequencies, ignoring order.
pub fn uncorrelated_entropy<T: Ord>(s: &[T]) -> f64 {
    let mut freq: BTreeMap<&T, usize> = BTreeMap::new();
    for x in s {
        *freq.entry(x).or_default() += 1;
    }
    let n = s.len() as f64;
    let h: f64 = freq
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

pub fn distinct<T: Ord>(s: &[T]) -> usize {
    s.iter().collect::<std::collections::BTreeSet<_>>().len()
}

pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// `H(Π) + (1 - Π) log2(N - 1)`.
pub fn fano_entropy(pi: f64, support: usize) -> f64 {
    let tail = if support > 1 { (1.0 - pi) * ((support - 1) as f64).log2() } else { 0.0 };
    binary_entropy(pi) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Predictability {
    pub value: f64,
    /// `h` exceeded `log2 N`, so the value is the uniform floor `1/N`.
    pub clamped: bool,
}

/// Root of `fano_entropy(Π, N) = h` on `[1/N, 1]`, by bisection.
pub fn solve_fano(h: f64, support: usize) -> Predictability {
    let exact = |value| Predictability { value, clamped: false };
    if support <= 1 || h <= 0.0 {
        return exact(1.0);
    }
    let lo0 = 1.0 / support as f64;
    let f = |pi: f64| fano_entropy(pi, support) - h;
    let f_lo = f(lo0);
    if f_lo.abs() < 1e-9 {
        return exact(lo0);
    }
    if f_lo < 0.0 {
        return Predictability {
            value: lo0,
            clamped: true,
        };
    }
    let (mut lo, mut hi) = (lo0, 1.0);
    // f decreases from f(lo) > 0 to f(1) = -h < 0
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < 1e-9 {
            return exact(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    exact(0.5 * (lo + hi))
}

/// Upper bound on next-activity predictability at entropy `h` over `support`
/// outcomes.
pub fn predictability_max(h: f64, support: usize) -> f64 {
    let p = solve_fano(h, support);
    if p.clamped {
        log::warn!("entropy {h} exceeds log2({support}); predictability clamped to 1/{support}");
    }
    p.value
}

/// Outcome count used in the Fano inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FanoSupport {
    /// Distinct activities of the sequence.
    #[default]
    Distinct,
    /// Sequence length.
    Length,
}

impl std::str::FromStr for FanoSupport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distinct" => Ok(FanoSupport::Distinct),
            "length" => Ok(FanoSupport::Length),
            _ => Err(format!("unknown Fano support `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyProfile {
    pub h_rand: f64,
    pub h_unc: f64,
    pub h_est: f64,
    pub pi_rand: f64,
    pub pi_unc: f64,
    pub pi_max: f64,
    pub delta: usize,
    /// `h_est` exceeded `log2 N` and `pi_max` sits at the uniform floor.
    pub clamped: bool,
}

pub fn entropy_profile<T: Ord>(s: &[T], support: FanoSupport) -> EntropyProfile {
    let delta = distinct(s);
    let n = match support {
        FanoSupport::Distinct => delta,
        FanoSupport::Length => s.len(),
    };
    let h_rand = random_entropy(s);
    let h_unc = uncorrelated_entropy(s);
    let h_est = lz_entropy(s);
    let pi_max = solve_fano(h_est, n);
    EntropyProfile {
        h_rand,
        h_unc,
        h_est,
        pi_rand: solve_fano(h_rand, n).value,
        pi_unc: solve_fano(h_unc, n).value,
        pi_max: pi_max.value,
        delta,
        clamped: pi_max.clamped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistinctRow {
    pub person_id: String,
    pub length: usize,
    pub interval: usize,
    pub delta: usize,
    pub delta_move: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistinctStats {
    pub rows: Vec<DistinctRow>,
    /// Correlation of interval index with distinct activities; `None` on zero variance.
    pub rho_delta: Option<f64>,
    pub rho_delta_move: Option<f64>,
}

pub fn distinct_stats(graph: &KnowledgeGraph, sequences: &[SemanticSequence], binning: &IntervalBinning) -> Result<DistinctStats, IndicatorError> {
    if sequences.is_empty() {
        return Err(IndicatorError::EmptyCorpus);
    }
    let rows: Vec<DistinctRow> = sequences
        .iter()
        .map(|s| {
            let moves: Vec<ConceptId> = s.activities().iter().copied().filter(|&a| graph.is_move(a)).collect();
            DistinctRow {
                person_id: s.person_id.clone(),
                length: s.len(),
                interval: binning.interval(s.len()),
                delta: s.distinct(),
                delta_move: distinct(&moves),
            }
        })
        .collect();
    let k: Vec<f64> = rows.iter().map(|r| r.interval as f64).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.delta as f64).collect();
    let dm: Vec<f64> = rows.iter().map(|r| r.delta_move as f64).collect();
    Ok(DistinctStats {
        rho_delta: pearson(&k, &d),
        rho_delta_move: pearson(&k, &dm),
        rows,
    })
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::reference_ontology;

    fn seq(id: &str, v: &[u32]) -> SemanticSequence {
        SemanticSequence::new(id, v.iter().map(|&c| ConceptId(c))).unwrap()
    }

    #[test]
    fn default_binning() {
        let b = IntervalBinning::Default;
        let ks: Vec<usize> = (1..=10).map(|n| b.interval(n)).collect();
        assert_eq!(ks, [1, 1, 1, 1, 1, 2, 2, 3, 3, 4]);
        let custom: IntervalBinning = "1,3,5".parse().unwrap();
        assert_eq!([1, 2, 3, 4, 7].map(|n| custom.interval(n)), [0, 1, 1, 2, 3]);
        assert!("3,1".parse::<IntervalBinning>().is_err());
    }

    #[test]
    fn constant_sample_lambda() {
        let s = vec![seq("a", &[1, 100, 11, 100, 1, 100]), seq("b", &[1, 100, 11, 100, 1, 100, 1])];
        let d = length_distribution(&s, &IntervalBinning::Default).unwrap();
        assert_eq!(d.poisson_lambda, 2.0);
        assert_eq!(d.histogram.count(&1), 0);
        assert_eq!(d.histogram.count(&2), 2);
        assert_eq!(d.histogram.total, 2);
    }

    #[test]
    fn state_counts_and_skipped_fit() {
        let g = reference_ontology();
        let s: Vec<_> = (0..10).map(|i| seq(&format!("p{i}"), &[1, 100])).collect();
        let d = state_distribution(&g, &s, &AggregationLevel::Leaf).unwrap();
        assert_eq!(d.histogram.count(&ConceptId(1)), 10);
        assert_eq!(d.histogram.count(&ConceptId(100)), 10);
        assert!(d.zipf.is_none());
    }

    #[test]
    fn zipf_exact_law() {
        let counts: Vec<usize> = (1..=20).map(|r| 1000 / r).collect();
        let fit = zipf_fit(&counts).unwrap();
        assert!((fit.slope + 1.0).abs() <= 0.02, "{fit:?}");
        assert!(fit.r2 >= 0.99);
    }

    #[test]
    fn od_counts() {
        let g = std::sync::Arc::new(reference_ontology());
        let c = Corpus::new(g, vec![seq("s", &[1, 100, 131, 11, 100, 1])]).unwrap();
        let od = od_matrix(&c, true, &AggregationLevel::Leaf).unwrap();
        assert_eq!(od.get(ConceptId(1), ConceptId(11)), 1);
        assert_eq!(od.get(ConceptId(11), ConceptId(1)), 1);
        assert_eq!(od.total(), 2);
        let full = od_matrix(&c, false, &AggregationLevel::Leaf).unwrap();
        assert_eq!(full.total(), 5);
    }

    #[test]
    fn oscillations_share_a_key() {
        let g = reference_ontology();
        let a = daily_pattern(&g, &seq("a", &[1, 11, 1]), true).unwrap().unwrap();
        let b = daily_pattern(&g, &seq("b", &[2, 33, 2]), true).unwrap().unwrap();
        assert_eq!(a, b);
        assert_eq!((a.nodes(), a.edges()), (2, 2));
        let single = daily_pattern(&g, &seq("c", &[1, 100, 1]), true).unwrap().unwrap();
        assert_eq!((single.nodes(), single.edges()), (1, 0));
        assert!(daily_pattern(&g, &seq("d", &[100]), true).unwrap().is_none());
    }

    #[test]
    fn key_graph_round_trip() {
        let g = MotifGraph::from_edges(4, [(0, 1), (1, 2), (2, 0), (0, 3), (3, 3)]);
        let k = g.canonical_key().unwrap();
        assert_eq!(k.graph().canonical_key().unwrap(), k);
        assert_eq!(k.graph().edges(), 5);
    }

    #[test]
    fn motif_node_cap() {
        let acts: Vec<u32> = (0..13).collect();
        let g = MotifGraph::from_sequence(&acts.iter().map(|&c| ConceptId(c)).collect::<Vec<_>>());
        assert!(matches!(g.canonical_key(), Err(IndicatorError::TooManyNodes(13))));
    }

    #[test]
    fn lz_hand_example() {
        let s = b"abababab";
        assert_eq!(lz_lambdas(s), [1, 1, 3, 3, 5, 4, 3, 2]);
        assert!((lz_entropy(s) - 12.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_basics() {
        let s = [1, 2, 3, 4];
        assert_eq!(random_entropy(&s), 2.0);
        assert_eq!(uncorrelated_entropy(&[1, 2, 3, 4, 4, 3, 2, 1]), 2.0);
        assert!(uncorrelated_entropy(&[1, 1, 1, 2]) < random_entropy(&[1, 1, 1, 2]));
        assert_eq!(lz_entropy(&[7]), 0.0);
    }

    #[test]
    fn fano_anchors() {
        assert_eq!(predictability_max(0.0, 7), 1.0);
        assert_eq!(predictability_max(1.0, 2), 0.5);
        assert_eq!(predictability_max(0.3, 1), 1.0);
        let p = solve_fano(5.0, 4);
        assert!(p.clamped);
        assert_eq!(p.value, 0.25);
    }

    #[test]
    fn distinct_and_correlation() {
        assert_eq!(distinct(&[1, 2, 1]), 2);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), None);
    }
}
