//! Cluster explanation: contingency analysis, per-cluster profiles and
//! behavior summaries.

pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use statrs::distribution::{ChiSquared as ChiSquaredDist, ContinuousCDF};
use thiserror::Error;

use crate::clustering::{medoid, mode, scatter, silhouette, ClusterError, Clustering, Scatter};
use crate::corpus::{aggregate_sequence, Corpus, SemanticSequence};
use crate::indicators::{
    daily_pattern, motif_census, prepare_sequences, Histogram, IndicatorError, IntervalBinning, MotifCensus, MotifKey,
    OdMatrix,
};
use crate::metric::DistanceMatrix;
use crate::ontology::{AggregationLevel, ConceptId, OntologyError};

/// Residual magnitude flagged as significant.
pub const SIGNIFICANCE: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("feature domain is empty")]
    EmptyDomain,
    #[error("table is degenerate: {0}")]
    Degenerate(&'static str),
    #[error("{got} labels for {expected} sequences")]
    LabelCount { got: usize, expected: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<crate::metric::MetricError> for ExplainError {
    fn from(e: crate::metric::MetricError) -> Self {
        match e {
            crate::metric::MetricError::Io(io) => ExplainError::Io(io),
            crate::metric::MetricError::Csv(c) => ExplainError::Csv(c),
            other => ExplainError::Io(std::io::Error::other(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// A sequence counts once per occurrence.
    #[default]
    Occurrence,
    /// A sequence counts once per distinct value.
    Presence,
}

/// Feature counts with categories as rows and clusters as columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContingencyTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(rows: Vec<String>, cols: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        assert_eq!(counts.len(), rows.len());
        assert!(counts.iter().all(|r| r.len() == cols.len()));
        ContingencyTable { rows, cols, counts }
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.cols.len()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `n_i+ · n_+j / N`.
    pub fn expected(&self) -> Vec<Vec<f64>> {
        let (rt, ct, n) = (self.row_totals(), self.col_totals(), self.total() as f64);
        rt.iter()
            .map(|&r| {
                ct.iter()
                    .map(|&c| if n == 0.0 { 0.0 } else { r as f64 * c as f64 / n })
                    .collect()
            })
            .collect()
    }

    pub fn row_index(&self, label: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == label)
    }
}

/// Tallies per-sequence feature values by cluster. Row order follows `L`.
pub fn contingency<L: Ord + ToString>(
    cl: &Clustering,
    features: &[Vec<L>],
    weighting: Weighting,
) -> Result<ContingencyTable, ExplainError> {
    if features.len() != cl.labels.len() {
        return Err(ExplainError::LabelCount {
            got: cl.labels.len(),
            expected: features.len(),
        });
    }
    let mut cells: BTreeMap<&L, Vec<u64>> = BTreeMap::new();
    for (values, &c) in features.iter().zip(&cl.labels) {
        let picked: Vec<&L> = match weighting {
            Weighting::Occurrence => values.iter().collect(),
            Weighting::Presence => values.iter().collect::<BTreeSet<_>>().into_iter().collect(),
        };
        for v in picked {
            cells.entry(v).or_insert_with(|| vec![0; cl.k])[c - 1] += 1;
        }
    }
    if cells.is_empty() {
        return Err(ExplainError::EmptyDomain);
    }
    let (rows, counts): (Vec<String>, Vec<Vec<u64>>) = cells.into_iter().map(|(l, v)| (l.to_string(), v)).unzip();
    Ok(ContingencyTable::new(rows, (1..=cl.k).map(|c| c.to_string()).collect(), counts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    /// `None` where the expected count is zero.
    pub values: Vec<Vec<Option<f64>>>,
    /// `|r| >= 2`.
    pub significant: Vec<Vec<bool>>,
}

impl Residuals {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row][col]
    }
}

/// `(n_ij - e_ij) / sqrt(e_ij)`.
pub fn pearson_residuals(t: &ContingencyTable) -> Residuals {
    let e = t.expected();
    let mut excluded = 0;
    let values: Vec<Vec<Option<f64>>> = t
        .counts
        .iter()
        .zip(&e)
        .map(|(row, erow)| {
            row.iter()
                .zip(erow)
                .map(|(&n, &ex)| {
                    if ex > 0.0 {
                        Some((n as f64 - ex) / ex.sqrt())
                    } else {
                        excluded += 1;
                        None
                    }
                })
                .collect()
        })
        .collect();
    if excluded > 0 {
        log::info!("{excluded} contingency cells with a zero marginal excluded from residuals");
    }
    let significant = values
        .iter()
        .map(|r| r.iter().map(|v| v.is_some_and(|x| x.abs() >= SIGNIFICANCE)).collect())
        .collect();
    Residuals { values, significant }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquared {
    pub statistic: f64,
    pub dof: usize,
    /// Asymptotic; `None` with zero degrees of freedom.
    pub p_value: Option<f64>,
    /// Cells with expected count below 5.
    pub low_expected: usize,
}

fn effective_shape(t: &ContingencyTable) -> (usize, usize) {
    let p = t.row_totals().iter().filter(|&&v| v > 0).count();
    let q = t.col_totals().iter().filter(|&&v| v > 0).count();
    (p, q)
}

/// Pearson's chi-squared over cells with non-zero marginals.
pub fn chi_squared(t: &ContingencyTable) -> ChiSquared {
    let statistic: f64 = t
        .counts
        .iter()
        .flatten()
        .zip(t.expected().iter().flatten())
        .filter(|&(_, &e)| e > 0.0)
        .map(|(&n, &e)| (n as f64 - e).powi(2) / e)
        .sum();
    let (p, q) = effective_shape(t);
    let dof = p.saturating_sub(1) * q.saturating_sub(1);
    let low_expected = t.expected().iter().flatten().filter(|&&e| e > 0.0 && e < 5.0).count();
    if low_expected > 0 {
        log::warn!("{low_expected} cells have expected count below 5; chi-squared p-value is unreliable");
    }
    let p_value = (dof > 0).then(|| {
        ChiSquaredDist::new(dof as f64)
            .map(|d| d.sf(statistic))
            .unwrap_or(f64::NAN)
    });
    ChiSquared {
        statistic,
        dof,
        p_value,
        low_expected,
    }
}

/// Every non-empty row and column holds exactly one non-zero cell.
fn perfectly_associated(t: &ContingencyTable) -> bool {
    let rows_ok = t.counts.iter().all(|r| r.iter().filter(|&&v| v > 0).count() <= 1);
    let cols_ok = (0..t.cols.len()).all(|j| t.counts.iter().filter(|r| r[j] > 0).count() <= 1);
    rows_ok && cols_ok
}

/// `sqrt(chi2 / (N · min(p - 1, q - 1)))` over non-empty rows and columns.
/// Perfectly associated square tables give exactly 1.
pub fn cramers_v(t: &ContingencyTable) -> Result<f64, ExplainError> {
    let n = t.total();
    if n == 0 {
        return Err(ExplainError::Degenerate("empty table"));
    }
    let (p, q) = effective_shape(t);
    let m = p.min(q).saturating_sub(1);
    if m == 0 {
        return Err(ExplainError::Degenerate("fewer than two non-empty rows or columns"));
    }
    if p == q && perfectly_associated(t) {
        return Ok(1.0);
    }
    let chi = chi_squared(t).statistic;
    Ok((chi / (n as f64 * m as f64)).sqrt().min(1.0))
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme observations within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence).collect();
    Some(BoxStats {
        min: v[0],
        q1,
        median,
        q3,
        max: v[v.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: v.iter().copied().filter(|&x| x < lo_fence || x > hi_fence).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    pub level: AggregationLevel,
    pub stops_only: bool,
    pub trim: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            level: AggregationLevel::Meta,
            stops_only: true,
            trim: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    pub share: f64,
    pub lengths: BoxStats,
    pub states: Histogram<ConceptId>,
    pub od: OdMatrix,
    pub motifs: MotifCensus,
    /// `None` when the partition has a single cluster.
    pub silhouette: Option<f64>,
    pub scatter: Scatter,
    pub medoid: String,
    pub medoid_sequence: Vec<ConceptId>,
    /// At the profile aggregation level.
    pub mode: Vec<ConceptId>,
}

fn check_alignment(corpus: &Corpus, cl: &Clustering, m: &DistanceMatrix) -> Result<(), ExplainError> {
    if cl.labels.len() != corpus.len() || m.len() != corpus.len() {
        return Err(ExplainError::LabelCount {
            got: cl.labels.len(),
            expected: corpus.len(),
        });
    }
    Ok(())
}

/// Per-cluster indicator bundle; states, OD counts and motifs are taken at
/// the configured level and projection.
pub fn cluster_profiles(
    corpus: &Corpus,
    cl: &Clustering,
    m: &DistanceMatrix,
    opts: &ProfileOptions,
) -> Result<Vec<ClusterProfile>, ExplainError> {
    check_alignment(corpus, cl, m)?;
    let graph = corpus.graph();
    let sil = if cl.k >= 2 { Some(silhouette(m, cl)?) } else { None };
    let aggregated: Vec<SemanticSequence> = corpus
        .sequences()
        .iter()
        .map(|s| aggregate_sequence(graph, s, &opts.level))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(cl.k);
    for c in 1..=cl.k {
        let members = cl.members(c);
        let seqs: Vec<SemanticSequence> = members.iter().map(|&i| corpus.sequences()[i].clone()).collect();
        let lengths: Vec<f64> = seqs.iter().map(|s| s.len() as f64).collect();
        let mut states = BTreeMap::new();
        for &i in &members {
            for &a in aggregated[i].activities() {
                *states.entry(a).or_default() += 1;
            }
        }
        let prepared = prepare_sequences(graph, &seqs, opts.stops_only, &opts.level)?;
        let centre = medoid(m, &members);
        let agg_members: Vec<&SemanticSequence> = members.iter().map(|&i| &aggregated[i]).collect();
        out.push(ClusterProfile {
            cluster: c,
            size: members.len(),
            share: members.len() as f64 / corpus.len() as f64,
            lengths: box_stats(&lengths).expect("clusters are non-empty"),
            states: Histogram::from_counts(states),
            od: OdMatrix::from_sequences(&prepared),
            motifs: motif_census(graph, &seqs, opts.stops_only)?,
            silhouette: sil.as_ref().map(|s| s.per_cluster[c - 1]),
            scatter: scatter(m, &members, opts.trim),
            medoid: m.ids()[centre].clone(),
            medoid_sequence: corpus.sequences()[centre].activities().to_vec(),
            mode: mode(&agg_members).expect("clusters are non-empty"),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LengthClass {
    Short,
    Medium,
    Long,
}

impl LengthClass {
    /// Interval 1 is short, interval 2 medium, anything else long.
    pub fn from_median(median: f64, binning: &IntervalBinning) -> Self {
        match binning.interval_of(median) {
            1 => LengthClass::Short,
            2 => LengthClass::Medium,
            _ => LengthClass::Long,
        }
    }
}

impl std::fmt::Display for LengthClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LengthClass::Short => "Short",
            LengthClass::Medium => "Medium",
            LengthClass::Long => "Long",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOptions {
    pub threshold: f64,
    /// Level at which typical activities are read.
    pub level: AggregationLevel,
    pub stops_only: bool,
    pub binning: IntervalBinning,
    pub weighting: Weighting,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            threshold: 4.0,
            level: AggregationLevel::Meta,
            stops_only: true,
            binning: IntervalBinning::Default,
            weighting: Weighting::Occurrence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorSummary {
    pub cluster: usize,
    /// Percentage of the corpus.
    pub share: f64,
    pub typical_activities: Vec<ConceptId>,
    pub length_class: LengthClass,
    pub daily_patterns: Vec<MotifKey>,
    pub medoid: String,
    pub medoid_sequence: Vec<ConceptId>,
    pub mode: Vec<ConceptId>,
    /// Left for a human to fill in.
    pub label: Option<String>,
}

/// Contingency tables behind the summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureTables {
    pub activities: ContingencyTable,
    pub motifs: Option<ContingencyTable>,
}

pub fn feature_tables(corpus: &Corpus, cl: &Clustering, opts: &SummaryOptions) -> Result<FeatureTables, ExplainError> {
    let graph = corpus.graph();
    let activities: Vec<Vec<ConceptId>> = corpus
        .sequences()
        .iter()
        .map(|s| aggregate_sequence(graph, s, &opts.level).map(|a| a.activities().to_vec()))
        .collect::<Result<_, _>>()?;
    let motifs: Vec<Vec<MotifKey>> = corpus
        .sequences()
        .iter()
        .map(|s| daily_pattern(graph, s, opts.stops_only).map(|k| k.into_iter().collect()))
        .collect::<Result<_, _>>()?;
    Ok(FeatureTables {
        activities: contingency(cl, &activities, opts.weighting)?,
        motifs: match contingency(cl, &motifs, opts.weighting) {
            Ok(t) => Some(t),
            Err(ExplainError::EmptyDomain) => None,
            Err(e) => return Err(e),
        },
    })
}

/// One summary per cluster: activities whose residual reaches the threshold
/// and that occur in the cluster medoid or mode, the length class of the
/// median length, and motifs whose residual reaches the threshold.
pub fn behavior_summary(
    corpus: &Corpus,
    cl: &Clustering,
    m: &DistanceMatrix,
    opts: &SummaryOptions,
) -> Result<Vec<BehaviorSummary>, ExplainError> {
    check_alignment(corpus, cl, m)?;
    let graph = corpus.graph();
    let tables = feature_tables(corpus, cl, opts)?;
    let act_res = pearson_residuals(&tables.activities);
    let motif_res = tables.motifs.as_ref().map(pearson_residuals);
    let motif_keys: BTreeMap<String, MotifKey> = corpus
        .sequences()
        .iter()
        .filter_map(|s| daily_pattern(graph, s, opts.stops_only).ok().flatten())
        .map(|k| (k.to_string(), k))
        .collect();

    let mut out = Vec::with_capacity(cl.k);
    for c in 1..=cl.k {
        let members = cl.members(c);
        let centre = medoid(m, &members);
        let agg: Vec<SemanticSequence> = members
            .iter()
            .map(|&i| aggregate_sequence(graph, &corpus.sequences()[i], &opts.level))
            .collect::<Result<_, _>>()?;
        let agg_refs: Vec<&SemanticSequence> = agg.iter().collect();
        let mode_seq = mode(&agg_refs).expect("clusters are non-empty");
        let medoid_agg = aggregate_sequence(graph, &corpus.sequences()[centre], &opts.level)?;
        let central: BTreeSet<ConceptId> = medoid_agg.activities().iter().chain(&mode_seq).copied().collect();

        let typical: Vec<ConceptId> = central
            .iter()
            .copied()
            .filter(|x| {
                tables
                    .activities
                    .row_index(&x.to_string())
                    .and_then(|r| act_res.get(r, c - 1))
                    .is_some_and(|v| v >= opts.threshold)
            })
            .collect();

        let mut lengths: Vec<f64> = members.iter().map(|&i| corpus.sequences()[i].len() as f64).collect();
        lengths.sort_by(f64::total_cmp);
        let median = quantile(&lengths, 0.5);

        let daily_patterns: Vec<MotifKey> = match (&tables.motifs, &motif_res) {
            (Some(t), Some(r)) => t
                .rows
                .iter()
                .enumerate()
                .filter(|&(i, _)| r.get(i, c - 1).is_some_and(|v| v >= opts.threshold))
                .map(|(_, label)| motif_keys[label].clone())
                .collect(),
            _ => Vec::new(),
        };

        out.push(BehaviorSummary {
            cluster: c,
            share: 100.0 * members.len() as f64 / corpus.len() as f64,
            typical_activities: typical,
            length_class: LengthClass::from_median(median, &opts.binning),
            daily_patterns,
            medoid: m.ids()[centre].clone(),
            medoid_sequence: corpus.sequences()[centre].activities().to_vec(),
            mode: mode_seq,
            label: None,
        });
    }
    Ok(out)
}
