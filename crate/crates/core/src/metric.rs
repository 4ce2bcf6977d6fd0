//! Contextual edit distance (CED) and pairwise distance matrices.
//!
//! Edit costs shrink when the edited symbol resembles symbols close to the
//! edit position in the source sequence. Proximity is weighted by a Gaussian
//! kernel of width `sigma`; `alpha` blends in the plain substitution-cost
//! Levenshtein term. Context is always read from the original source at its
//! original indices, which keeps the Wagner-Fischer recurrence exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, SemanticSequence};
use crate::ontology::{ConceptId, KnowledgeGraph};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("sigma must be positive and finite, got {0}")]
    Sigma(f64),
    #[error("cannot resolve sigma=auto on an empty corpus")]
    EmptyCorpus,
    #[error("malformed distance matrix: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Similarity between two concepts, in `[0, 1]`.
pub trait Similarity: Sync {
    fn similarity(&self, a: ConceptId, b: ConceptId) -> f64;
}

/// Wu-Palmer over the graph. Two copies of the root (only reachable after
/// aggregating to depth 0) count as identical.
impl Similarity for KnowledgeGraph {
    fn similarity(&self, a: ConceptId, b: ConceptId) -> f64 {
        match self.wu_palmer(a, b) {
            Ok(s) => s,
            Err(_) if a == b => 1.0,
            Err(_) => 0.0,
        }
    }
}

impl<S: Similarity + ?Sized> Similarity for &S {
    fn similarity(&self, a: ConceptId, b: ConceptId) -> f64 {
        (**self).similarity(a, b)
    }
}

/// Dense similarity lookup over a fixed alphabet.
#[derive(Debug, Clone)]
pub struct SimilarityTable {
    index: HashMap<ConceptId, usize>,
    values: Vec<f64>,
}

impl SimilarityTable {
    pub fn build<S: Similarity>(alphabet: impl IntoIterator<Item = ConceptId>, sim: &S) -> Self {
        let mut symbols: Vec<ConceptId> = alphabet.into_iter().collect();
        symbols.sort();
        symbols.dedup();
        let m = symbols.len();
        let mut values = vec![0.0; m * m];
        for (i, &a) in symbols.iter().enumerate() {
            for (j, &b) in symbols.iter().enumerate() {
                values[i * m + j] = sim.similarity(a, b);
            }
        }
        SimilarityTable {
            index: symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect(),
            values,
        }
    }

    /// Explicit table, mostly for tests. `values` is row-major over `symbols`.
    pub fn from_values(symbols: &[ConceptId], values: Vec<f64>) -> Self {
        assert_eq!(values.len(), symbols.len() * symbols.len());
        SimilarityTable {
            index: symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect(),
            values,
        }
    }
}

impl Similarity for SimilarityTable {
    fn similarity(&self, a: ConceptId, b: ConceptId) -> f64 {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) => self.values[i * self.index.len() + j],
            _ if a == b => 1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    /// Half the corpus median sequence length.
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for Sigma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Sigma::Auto);
        }
        s.parse::<f64>()
            .map(Sigma::Fixed)
            .map_err(|_| format!("sigma must be `auto` or a number, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CedParams {
    pub alpha: f64,
    pub sigma: Sigma,
}

impl Default for CedParams {
    fn default() -> Self {
        CedParams {
            alpha: 0.0,
            sigma: Sigma::Auto,
        }
    }
}

impl CedParams {
    pub fn resolve_sigma(&self, corpus: &Corpus) -> Result<f64, MetricError> {
        let sigma = match self.sigma {
            Sigma::Fixed(s) => s,
            Sigma::Auto => median_length(corpus.sequences()).ok_or(MetricError::EmptyCorpus)? / 2.0,
        };
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(MetricError::Sigma(sigma));
        }
        Ok(sigma)
    }
}

pub fn median_length(sequences: &[SemanticSequence]) -> Option<f64> {
    let mut lens: Vec<usize> = sequences.iter().map(SemanticSequence::len).collect();
    if lens.is_empty() {
        return None;
    }
    lens.sort_unstable();
    let mid = lens.len() / 2;
    Some(if lens.len() % 2 == 0 {
        (lens[mid - 1] + lens[mid]) as f64 / 2.0
    } else {
        lens[mid] as f64
    })
}

/// Gaussian proximity weight of source position `i` seen from edit position
/// `k`: `exp(-((i - k) / sigma)^2 / 2)`.
pub fn context_kernel(k: usize, i: usize, sigma: f64) -> f64 {
    let d = k.abs_diff(i) as f64 / sigma;
    (-0.5 * d * d).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Mod,
    Del,
}

/// One contextual edit applied to a source sequence of length `n`.
///
/// `position` is 1-based. For `Mod` and `Del` it is the edited source index.
/// For `Add` it is the source index after which the symbol is inserted
/// (`0` inserts in front); the kernel is centred on it, clamped to `[1, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EditOp {
    pub kind: OpKind,
    pub position: usize,
    pub symbol: ConceptId,
}

impl EditOp {
    pub fn add(after: usize, symbol: ConceptId) -> Self {
        EditOp {
            kind: OpKind::Add,
            position: after,
            symbol,
        }
    }

    pub fn modify(position: usize, symbol: ConceptId) -> Self {
        EditOp {
            kind: OpKind::Mod,
            position,
            symbol,
        }
    }

    pub fn delete(position: usize, source: &[ConceptId]) -> Self {
        EditOp {
            kind: OpKind::Del,
            position,
            symbol: source[position - 1],
        }
    }

    pub fn is_valid_for(&self, source: &[ConceptId]) -> bool {
        let n = source.len();
        match self.kind {
            OpKind::Add => self.position <= n,
            OpKind::Mod => (1..=n).contains(&self.position),
            OpKind::Del => (1..=n).contains(&self.position) && source[self.position - 1] == self.symbol,
        }
    }
}

/// Contextual edit distance with resolved parameters.
#[derive(Debug, Clone)]
pub struct Ced<S> {
    alpha: f64,
    sigma: f64,
    sim: S,
}

impl<S: Similarity> Ced<S> {
    pub fn new(alpha: f64, sigma: f64, sim: S) -> Result<Self, MetricError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(MetricError::Alpha(alpha));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(MetricError::Sigma(sigma));
        }
        Ok(Ced { alpha, sigma, sim })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn similarity(&self) -> &S {
        &self.sim
    }

    /// Cost of a single edit against `source`, in `[0, 1]`.
    ///
    /// The context term takes the best `sim(x, s_i) * kernel(i)` over the
    /// source. For deletions `x` is the deleted symbol itself and its own
    /// position is skipped, so only a nearby repeat makes a deletion cheap.
    ///
    /// # Panics
    /// If `op` is not valid for `source`.
    pub fn edit_cost(&self, op: &EditOp, source: &[ConceptId]) -> f64 {
        assert!(op.is_valid_for(source), "edit {op:?} out of range");
        let n = source.len();
        let (centre, lev, skip) = match op.kind {
            OpKind::Mod => (
                op.position,
                1.0 - self.sim.similarity(source[op.position - 1], op.symbol),
                None,
            ),
            OpKind::Del => (op.position, 1.0, Some(op.position)),
            OpKind::Add => (op.position.clamp(1, n.max(1)), 1.0, None),
        };
        let context = (1..=n)
            .filter(|&i| Some(i) != skip)
            .map(|i| self.sim.similarity(op.symbol, source[i - 1]) * context_kernel(centre, i, self.sigma))
            .fold(0.0, f64::max);
        self.alpha * lev + (1.0 - self.alpha) * (1.0 - context)
    }

    /// Minimum total edit cost turning `s1` into `s2`.
    pub fn one_sided(&self, s1: &[ConceptId], s2: &[ConceptId]) -> f64 {
        let (n, p) = (s1.len(), s2.len());
        let alpha = self.alpha;
        let kernel: Vec<f64> = (0..=n).map(|d| context_kernel(0, d, self.sigma)).collect();

        // cross[i * p + j] = sim(s1[i], s2[j])
        let cross: Vec<f64> = s1
            .iter()
            .flat_map(|&a| s2.iter().map(move |&b| (a, b)))
            .map(|(a, b)| self.sim.similarity(a, b))
            .collect();

        // context[k * p + j]: best kernel-weighted similarity of s2[j] to the
        // source seen from position k.
        let context: Vec<f64> = if alpha < 1.0 {
            let mut ctx = vec![0.0; n * p];
            for k in 0..n {
                for j in 0..p {
                    ctx[k * p + j] = (0..n)
                        .map(|i| cross[i * p + j] * kernel[i.abs_diff(k)])
                        .fold(0.0, f64::max);
                }
            }
            ctx
        } else {
            Vec::new()
        };
        let del: Vec<f64> = (0..n)
            .map(|k| {
                if alpha >= 1.0 {
                    return 1.0;
                }
                let best = (0..n)
                    .filter(|&i| i != k)
                    .map(|i| self.sim.similarity(s1[k], s1[i]) * kernel[i.abs_diff(k)])
                    .fold(0.0, f64::max);
                alpha + (1.0 - alpha) * (1.0 - best)
            })
            .collect();
        let ctx = |k: usize, j: usize| if alpha < 1.0 { context[k * p + j] } else { 0.0 };
        let ins = |anchor: usize, j: usize| {
            let centre = anchor.clamp(1, n.max(1)) - 1;
            alpha + (1.0 - alpha) * (1.0 - if n == 0 { 0.0 } else { ctx(centre, j) })
        };
        let sub = |k: usize, j: usize| alpha * (1.0 - cross[k * p + j]) + (1.0 - alpha) * (1.0 - ctx(k, j));

        let mut prev = vec![0.0; p + 1];
        for j in 1..=p {
            prev[j] = prev[j - 1] + ins(0, j - 1);
        }
        let mut cur = vec![0.0; p + 1];
        for i in 1..=n {
            cur[0] = prev[0] + del[i - 1];
            for j in 1..=p {
                let d = prev[j] + del[i - 1];
                let a = cur[j - 1] + ins(i, j - 1);
                let m = prev[j - 1] + sub(i - 1, j - 1);
                cur[j] = d.min(a).min(m);
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        prev[p]
    }

    /// Symmetrised distance: the larger of the two one-sided values.
    pub fn distance(&self, s1: &[ConceptId], s2: &[ConceptId]) -> f64 {
        self.one_sided(s1, s2).max(self.one_sided(s2, s1))
    }
}

/// Symmetric pairwise distances over a corpus, stored as the strict lower
/// triangle in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
    fingerprint: String,
}

#[inline]
fn tri(i: usize, j: usize) -> usize {
    debug_assert!(i > j);
    i * (i - 1) / 2 + j
}

impl DistanceMatrix {
    /// Builds from a full square matrix, checking symmetry, a zero diagonal
    /// and non-negative finite entries.
    pub fn from_square(ids: Vec<String>, rows: &[Vec<f64>], fingerprint: impl Into<String>) -> Result<Self, MetricError> {
        let n = ids.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(MetricError::Malformed(format!("expected a {n}x{n} matrix")));
        }
        let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return Err(MetricError::Malformed(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let (a, b) = (rows[i][j], rows[j][i]);
                if a != b {
                    return Err(MetricError::Malformed(format!("asymmetric at ({i}, {j})")));
                }
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(MetricError::Malformed(format!("invalid entry {a} at ({i}, {j})")));
                }
                values.push(a);
            }
        }
        Ok(DistanceMatrix {
            ids,
            values,
            fingerprint: fingerprint.into(),
        })
    }

    pub fn from_fn(ids: Vec<String>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = ids.len();
        let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 1..n {
            for j in 0..i {
                values.push(f(i, j));
            }
        }
        DistanceMatrix {
            ids,
            values,
            fingerprint: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => self.values[tri(i, j)],
            std::cmp::Ordering::Less => self.values[tri(j, i)],
        }
    }

    /// Strict lower triangle, row-major.
    pub fn condensed(&self) -> &[f64] {
        &self.values
    }

    /// Square CSV with a header row and column of ids, nine significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string()];
        header.extend(self.ids.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.ids[i].clone()];
            row.extend((0..self.len()).map(|j| format_sig(self.get(i, j), 9)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self, MetricError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let ids: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::with_capacity(ids.len());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.get(0) != ids.get(i).map(String::as_str) {
                return Err(MetricError::Malformed(format!("row {i} id does not match header")));
            }
            let row = rec
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().map_err(|_| MetricError::Malformed(format!("bad number `{v}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        DistanceMatrix::from_square(ids, &rows, "")
    }
}

/// `%.<digits>g`-style formatting.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    }
}

const CACHE_MAGIC: &[u8; 8] = b"SEMSEQDM";
const CACHE_VERSION: u32 = 1;

/// Where a matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixSource {
    Computed,
    CacheHit,
    /// A cache existed but did not match (stale or unreadable); recomputed.
    CacheStale,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOptions<'a> {
    pub cache: Option<&'a Path>,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

/// Digest of everything the matrix depends on: parameters, similarity source
/// and corpus content.
pub fn fingerprint(corpus: &Corpus, alpha: f64, sigma: f64) -> String {
    let mut h = Sha256::new();
    h.update(b"semseq distance matrix v1\n");
    h.update(alpha.to_bits().to_le_bytes());
    h.update(sigma.to_bits().to_le_bytes());
    h.update(b"wu-palmer\n");
    h.update(corpus.graph().canonical_text().as_bytes());
    h.update(b"\n--\n");
    h.update(corpus.canonical_text().as_bytes());
    to_hex(&h.finalize())
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn from_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

/// All pairwise CED values over `corpus`, optionally cached on disk.
pub fn distance_matrix(
    corpus: &Corpus,
    params: &CedParams,
    opts: &MatrixOptions<'_>,
) -> Result<(DistanceMatrix, MatrixSource), MetricError> {
    let sigma = params.resolve_sigma(corpus)?;
    let fp = fingerprint(corpus, params.alpha, sigma);
    let mut source = MatrixSource::Computed;
    if let Some(path) = opts.cache {
        if path.exists() {
            match read_cache(path, corpus.ids(), &fp) {
                Ok(Some(m)) => return Ok((m, MatrixSource::CacheHit)),
                Ok(None) => {
                    log::warn!("distance cache {} does not match the inputs; recomputing", path.display());
                    source = MatrixSource::CacheStale;
                }
                Err(MetricError::Io(e)) if e.kind() != std::io::ErrorKind::UnexpectedEof => {
                    return Err(MetricError::Io(e))
                }
                Err(e) => {
                    log::warn!("distance cache {} is unreadable ({e}); recomputing", path.display());
                    source = MatrixSource::CacheStale;
                }
            }
        }
    }

    let table = SimilarityTable::build(
        corpus.sequences().iter().flat_map(|s| s.activities().iter().copied()),
        corpus.graph().as_ref(),
    );
    let ced = Ced::new(params.alpha, sigma, table)?;
    let mut matrix = compute_matrix(&ced, corpus.sequences(), opts.workers)?;
    matrix.fingerprint = fp;
    if let Some(path) = opts.cache {
        write_cache(path, &matrix)?;
    }
    Ok((matrix, source))
}

/// Pairwise distances for any similarity; rows are evaluated in parallel but
/// each entry is a pure function of its pair, so the result does not depend on
/// the worker count.
pub fn compute_matrix<S: Similarity>(
    ced: &Ced<S>,
    sequences: &[SemanticSequence],
    workers: Option<usize>,
) -> Result<DistanceMatrix, MetricError> {
    let n = sequences.len();
    let row = |i: usize| -> Vec<f64> {
        (0..i)
            .map(|j| ced.distance(sequences[i].activities(), sequences[j].activities()))
            .collect()
    };
    let rows: Vec<Vec<f64>> = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| MetricError::Pool(e.to_string()))?
            .install(|| (0..n).into_par_iter().map(row).collect()),
        None => (0..n).into_par_iter().map(row).collect(),
    };
    Ok(DistanceMatrix {
        ids: sequences.iter().map(|s| s.person_id.clone()).collect(),
        values: rows.into_iter().flatten().collect(),
        fingerprint: String::new(),
    })
}

pub fn write_cache(path: &Path, m: &DistanceMatrix) -> Result<(), MetricError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    let fp = from_hex(&m.fingerprint).filter(|b| b.len() == 32).unwrap_or_else(|| vec![0; 32]);
    w.write_all(&fp)?;
    w.write_all(&(m.len() as u64).to_le_bytes())?;
    for v in &m.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// `Ok(None)` when the file is a valid cache for different inputs.
pub fn read_cache(path: &Path, ids: Vec<String>, expected_fp: &str) -> Result<Option<DistanceMatrix>, MetricError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(MetricError::Malformed("not a distance cache".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if u32::from_le_bytes(word) != CACHE_VERSION {
        return Ok(None);
    }
    let mut fp = [0u8; 32];
    r.read_exact(&mut fp)?;
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let n = u64::from_le_bytes(len) as usize;
    if to_hex(&fp) != expected_fp || n != ids.len() {
        return Ok(None);
    }
    let count = n * n.saturating_sub(1) / 2;
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok(Some(DistanceMatrix {
        ids,
        values,
        fingerprint: expected_fp.to_string(),
    }))
}
