//! Report assembly and file emission.
//!
//! Every artifact is a pure function of its inputs: maps are ordered, floats
//! use a fixed format and no wall-clock time is read, so reruns are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    chi_squared, cramers_v, pearson_residuals, BehaviorSummary, BoxStats, ChiSquared, ClusterProfile, ContingencyTable,
    ExplainError, FeatureTables,
};
use crate::clustering::{Clustering, Dendrogram, KSuggestion, Scatter};
use crate::corpus::Corpus;
use crate::indicators::{
    distinct_stats, entropy_profile, length_distribution, motif_census, od_matrix, state_distribution, DistinctStats,
    EntropyProfile, FanoSupport, IntervalBinning, LengthDistribution, MotifCensus, OdMatrix, StateDistribution, ZipfFit,
};
use crate::metric::format_sig;
use crate::ontology::{AggregationLevel, ConceptId, KnowledgeGraph};

/// JSON schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

pub const TOOL: &str = "semseq";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Motifs listed in the report and used for the coverage share.
pub const TOP_MOTIFS: usize = 11;

fn num(x: f64) -> String {
    format_sig(x, 9)
}

/// `<out>/<section>_<name>.<ext>`
pub fn artifact_path(out: &Path, section: &str, name: &str, ext: &str) -> PathBuf {
    out.join(format!("{section}_{name}.{ext}"))
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf, ExplainError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

fn label(graph: &KnowledgeGraph, c: ConceptId) -> String {
    graph.concept(c).map(|x| x.label.clone()).unwrap_or_default()
}

fn join_ids(v: &[ConceptId]) -> String {
    v.iter().map(ConceptId::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOptions {
    pub level: AggregationLevel,
    pub stops_only: bool,
    pub binning: IntervalBinning,
    pub fano_support: FanoSupport,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        GlobalOptions {
            level: AggregationLevel::Leaf,
            stops_only: true,
            binning: IntervalBinning::Default,
            fano_support: FanoSupport::Distinct,
        }
    }
}

/// Whole-corpus indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalIndicators {
    pub sequences: usize,
    pub removed_immobile: usize,
    pub singletons: Vec<String>,
    pub lengths: LengthDistribution,
    pub states: StateDistribution,
    pub od: OdMatrix,
    pub motifs: MotifCensus,
    pub entropy: Vec<(String, usize, EntropyProfile)>,
    pub distinct: DistinctStats,
}

pub fn global_indicators(corpus: &Corpus, removed_immobile: usize, opts: &GlobalOptions) -> Result<GlobalIndicators, ExplainError> {
    let graph = corpus.graph();
    let seqs = corpus.sequences();
    let mut clamped = 0;
    let entropy = seqs
        .iter()
        .map(|s| {
            let p = entropy_profile(s.activities(), opts.fano_support);
            clamped += usize::from(p.clamped);
            (s.person_id.clone(), s.len(), p)
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} sequences have an entropy estimate above log2 of their support; predictability clamped");
    }
    Ok(GlobalIndicators {
        sequences: corpus.len(),
        removed_immobile,
        singletons: corpus.singletons().into_iter().map(str::to_string).collect(),
        lengths: length_distribution(seqs, &opts.binning)?,
        states: state_distribution(graph, seqs, &opts.level)?,
        od: od_matrix(corpus, opts.stops_only, &opts.level)?,
        motifs: motif_census(graph, seqs, opts.stops_only)?,
        entropy,
        distinct: distinct_stats(graph, seqs, &opts.binning)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinCount {
    pub k: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateCount {
    pub concept: ConceptId,
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotifRow {
    pub key: String,
    pub nodes: usize,
    pub edges: usize,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySummary {
    pub mean_h_rand: f64,
    pub mean_h_unc: f64,
    pub mean_h_est: f64,
    pub mean_pi_max: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Association {
    pub chi_squared: ChiSquared,
    /// `None` when the table is degenerate.
    pub cramers_v: Option<f64>,
}

impl Association {
    pub fn of(t: &ContingencyTable) -> Self {
        Association {
            chi_squared: chi_squared(t),
            cramers_v: cramers_v(t).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalSection {
    pub sequences: usize,
    pub removed_immobile: usize,
    pub singletons: Vec<String>,
    pub length_bins: Vec<BinCount>,
    pub poisson_lambda: f64,
    pub states: Vec<StateCount>,
    pub zipf: Option<ZipfFit>,
    pub od_total: u64,
    pub motif_count: usize,
    pub motifs_top: Vec<MotifRow>,
    pub motif_coverage_top: f64,
    pub motif_skipped: usize,
    pub entropy: EntropySummary,
    pub rho_delta: Option<f64>,
    pub rho_delta_move: Option<f64>,
    /// Feature-by-cluster association, present once a partition exists.
    pub association: BTreeMap<String, Association>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl GlobalIndicators {
    pub fn section(&self, graph: &KnowledgeGraph) -> GlobalSection {
        GlobalSection {
            sequences: self.sequences,
            removed_immobile: self.removed_immobile,
            singletons: self.singletons.clone(),
            length_bins: self.lengths.histogram.bins.iter().map(|(&k, &count)| BinCount { k, count }).collect(),
            poisson_lambda: self.lengths.poisson_lambda,
            states: self
                .states
                .histogram
                .bins
                .iter()
                .map(|(&c, &count)| StateCount {
                    concept: c,
                    label: label(graph, c),
                    count,
                })
                .collect(),
            zipf: self.states.zipf,
            od_total: self.od.total(),
            motif_count: self.motifs.counts.len(),
            motifs_top: motif_rows(&self.motifs).into_iter().take(TOP_MOTIFS).collect(),
            motif_coverage_top: self.motifs.coverage(TOP_MOTIFS),
            motif_skipped: self.motifs.skipped,
            entropy: EntropySummary {
                mean_h_rand: mean(self.entropy.iter().map(|e| e.2.h_rand)),
                mean_h_unc: mean(self.entropy.iter().map(|e| e.2.h_unc)),
                mean_h_est: mean(self.entropy.iter().map(|e| e.2.h_est)),
                mean_pi_max: mean(self.entropy.iter().map(|e| e.2.pi_max)),
                clamped: self.entropy.iter().filter(|e| e.2.clamped).count(),
            },
            rho_delta: self.distinct.rho_delta,
            rho_delta_move: self.distinct.rho_delta_move,
            association: BTreeMap::new(),
        }
    }
}

fn motif_rows(c: &MotifCensus) -> Vec<MotifRow> {
    c.ranked()
        .into_iter()
        .map(|m| MotifRow {
            key: m.key.to_string(),
            nodes: m.key.nodes(),
            edges: m.key.edges(),
            count: m.count,
            share: m.share,
        })
        .collect()
}

fn write_od(path: &Path, od: &OdMatrix) -> Result<PathBuf, ExplainError> {
    let mut header = vec!["from".to_string()];
    header.extend(od.concepts.iter().map(ConceptId::to_string));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        path,
        &header_refs,
        od.concepts.iter().zip(&od.counts).map(|(c, row)| {
            let mut r = vec![c.to_string()];
            r.extend(row.iter().map(u64::to_string));
            r
        }),
    )
}

fn write_motifs(path: &Path, c: &MotifCensus) -> Result<PathBuf, ExplainError> {
    write_rows(
        path,
        &["key", "nodes", "edges", "count", "share"],
        motif_rows(c)
            .into_iter()
            .map(|m| vec![m.key, m.nodes.to_string(), m.edges.to_string(), m.count.to_string(), num(m.share)]),
    )
}

fn write_states(path: &Path, graph: &KnowledgeGraph, bins: &BTreeMap<ConceptId, usize>) -> Result<PathBuf, ExplainError> {
    write_rows(
        path,
        &["concept", "label", "count"],
        bins.iter().map(|(&c, &n)| vec![c.to_string(), label(graph, c), n.to_string()]),
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, ExplainError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(path.to_path_buf())
}

/// Descriptive statistics stage: `global_*` tables, one DOT file per motif
/// and `global_summary.json`.
pub fn write_global(out: &Path, g: &GlobalIndicators, graph: &KnowledgeGraph) -> Result<Vec<PathBuf>, ExplainError> {
    fs::create_dir_all(out)?;
    let mut files = vec![
        write_rows(
            &artifact_path(out, "global", "lengths", "csv"),
            &["k", "count"],
            g.lengths.histogram.bins.iter().map(|(k, n)| vec![k.to_string(), n.to_string()]),
        )?,
        write_states(&artifact_path(out, "global", "states", "csv"), graph, &g.states.histogram.bins)?,
        write_od(&artifact_path(out, "global", "od", "csv"), &g.od)?,
        write_motifs(&artifact_path(out, "global", "motifs", "csv"), &g.motifs)?,
        write_rows(
            &artifact_path(out, "global", "entropy", "csv"),
            &["id", "length", "delta", "h_rand", "h_unc", "h_est", "pi_rand", "pi_unc", "pi_max", "clamped"],
            g.entropy.iter().map(|(id, len, p)| {
                vec![
                    id.clone(),
                    len.to_string(),
                    p.delta.to_string(),
                    num(p.h_rand),
                    num(p.h_unc),
                    num(p.h_est),
                    num(p.pi_rand),
                    num(p.pi_unc),
                    num(p.pi_max),
                    p.clamped.to_string(),
                ]
            }),
        )?,
        write_rows(
            &artifact_path(out, "global", "distinct", "csv"),
            &["id", "length", "interval", "delta", "delta_move"],
            g.distinct.rows.iter().map(|r| {
                vec![
                    r.person_id.clone(),
                    r.length.to_string(),
                    r.interval.to_string(),
                    r.delta.to_string(),
                    r.delta_move.to_string(),
                ]
            }),
        )?,
    ];
    for key in g.motifs.counts.keys() {
        let path = artifact_path(out, "motif", &key.to_string(), "dot");
        fs::write(&path, key.graph().to_dot(&key.to_string()))?;
        files.push(path);
    }
    files.push(write_json(&artifact_path(out, "global", "summary", "json"), &g.section(graph))?);
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStatsRow {
    pub cluster: usize,
    pub size: usize,
    pub share: f64,
    pub silhouette: Option<f64>,
    pub scatter: Scatter,
    pub medoid: String,
    pub mode: Vec<ConceptId>,
}

/// Clustering stage: dendrogram, labels, per-cluster statistics and the
/// validity tables.
pub fn write_clustering(
    out: &Path,
    ids: &[String],
    dendrogram: &Dendrogram,
    clustering: &Clustering,
    stats: &[ClusterStatsRow],
    suggestion: Option<&KSuggestion>,
) -> Result<Vec<PathBuf>, ExplainError> {
    fs::create_dir_all(out)?;
    let mut files = vec![
        write_rows(
            &artifact_path(out, "clustering", "dendrogram", "csv"),
            &["step", "left", "right", "height", "size"],
            dendrogram.merges.iter().enumerate().map(|(t, m)| {
                vec![
                    (t + 1).to_string(),
                    m.left.to_string(),
                    m.right.to_string(),
                    num(m.height),
                    m.size.to_string(),
                ]
            }),
        )?,
        write_labels(&artifact_path(out, "clustering", "labels", "csv"), ids, clustering)?,
        write_rows(
            &artifact_path(out, "clustering", "stats", "csv"),
            &["cluster", "size", "share", "silhouette", "diameter", "diameter95", "radius", "radius95", "medoid", "mode"],
            stats.iter().map(|s| {
                vec![
                    s.cluster.to_string(),
                    s.size.to_string(),
                    num(s.share),
                    s.silhouette.map(num).unwrap_or_default(),
                    num(s.scatter.diameter),
                    num(s.scatter.diameter95),
                    num(s.scatter.radius),
                    num(s.scatter.radius95),
                    s.medoid.clone(),
                    join_ids(&s.mode),
                ]
            }),
        )?,
        write_rows(
            &artifact_path(out, "validity", "gaps", "csv"),
            &["k", "gap"],
            dendrogram.inertia_gaps().into_iter().map(|(k, g)| vec![k.to_string(), num(g)]),
        )?,
    ];
    if let Some(s) = suggestion {
        files.push(write_rows(
            &artifact_path(out, "validity", "k", "csv"),
            &["k", "mean_silhouette", "inertia_gap", "silhouette_rank", "gap_rank"],
            s.table.iter().map(|c| {
                let pos = |v: &[usize]| v.iter().position(|&k| k == c.k).map(|p| p + 1).unwrap_or(0).to_string();
                vec![
                    c.k.to_string(),
                    num(c.mean_silhouette),
                    num(c.inertia_gap),
                    pos(&s.by_silhouette),
                    pos(&s.by_inertia_gap),
                ]
            }),
        )?);
    }
    Ok(files)
}

pub fn write_labels(path: &Path, ids: &[String], cl: &Clustering) -> Result<PathBuf, ExplainError> {
    write_rows(
        path,
        &["id", "cluster"],
        ids.iter().zip(&cl.labels).map(|(id, c)| vec![id.clone(), c.to_string()]),
    )
}

/// Reads `id,cluster` rows back, in file order.
pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<usize>), ExplainError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let (Some(id), Some(c)) = (rec.get(0), rec.get(1)) else {
            return Err(ExplainError::Io(std::io::Error::other("labels row needs id and cluster")));
        };
        ids.push(id.to_string());
        labels.push(
            c.trim()
                .parse()
                .map_err(|_| ExplainError::Io(std::io::Error::other(format!("bad cluster label `{c}`"))))?,
        );
    }
    Ok((ids, labels))
}

fn write_table(path: &Path, t: &ContingencyTable) -> Result<PathBuf, ExplainError> {
    let mut header = vec!["category"];
    header.extend(t.cols.iter().map(String::as_str));
    write_rows(
        path,
        &header,
        t.rows.iter().zip(&t.counts).map(|(r, c)| {
            let mut row = vec![r.clone()];
            row.extend(c.iter().map(u64::to_string));
            row
        }),
    )
}

fn write_residuals(path: &Path, t: &ContingencyTable) -> Result<PathBuf, ExplainError> {
    let r = pearson_residuals(t);
    let mut header = vec!["category"];
    header.extend(t.cols.iter().map(String::as_str));
    write_rows(
        path,
        &header,
        t.rows.iter().zip(&r.values).map(|(label, vals)| {
            let mut row = vec![label.clone()];
            row.extend(vals.iter().map(|v| v.map(num).unwrap_or_default()));
            row
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSection {
    pub cluster: usize,
    pub size: usize,
    pub share: f64,
    pub silhouette: Option<f64>,
    pub scatter: Scatter,
    pub lengths: BoxStats,
    pub medoid: String,
    pub medoid_sequence: Vec<ConceptId>,
    pub mode: Vec<ConceptId>,
    pub od_total: u64,
    pub motifs_top: Vec<MotifRow>,
    pub summary: SummarySection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarySection {
    pub typical_activities: Vec<StateLabel>,
    pub length_class: String,
    pub daily_patterns: Vec<String>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateLabel {
    pub concept: ConceptId,
    pub label: String,
}

pub fn cluster_sections(graph: &KnowledgeGraph, profiles: &[ClusterProfile], summaries: &[BehaviorSummary]) -> Vec<ClusterSection> {
    profiles
        .iter()
        .zip(summaries)
        .map(|(p, s)| ClusterSection {
            cluster: p.cluster,
            size: p.size,
            share: p.share,
            silhouette: p.silhouette,
            scatter: p.scatter,
            lengths: p.lengths.clone(),
            medoid: p.medoid.clone(),
            medoid_sequence: p.medoid_sequence.clone(),
            mode: p.mode.clone(),
            od_total: p.od.total(),
            motifs_top: motif_rows(&p.motifs).into_iter().take(TOP_MOTIFS).collect(),
            summary: SummarySection {
                typical_activities: s
                    .typical_activities
                    .iter()
                    .map(|&c| StateLabel {
                        concept: c,
                        label: label(graph, c),
                    })
                    .collect(),
                length_class: s.length_class.to_string(),
                daily_patterns: s.daily_patterns.iter().map(ToString::to_string).collect(),
                label: s.label.clone(),
            },
        })
        .collect()
}

/// Explanation stage: contingency and residual tables, per-cluster tables
/// and the behavior summary.
pub fn write_explain(
    out: &Path,
    graph: &KnowledgeGraph,
    tables: &FeatureTables,
    profiles: &[ClusterProfile],
    summaries: &[BehaviorSummary],
) -> Result<Vec<PathBuf>, ExplainError> {
    fs::create_dir_all(out)?;
    let mut files = vec![
        write_table(&artifact_path(out, "explain", "activities", "csv"), &tables.activities)?,
        write_residuals(&artifact_path(out, "explain", "activity_residuals", "csv"), &tables.activities)?,
    ];
    if let Some(t) = &tables.motifs {
        files.push(write_table(&artifact_path(out, "explain", "motifs", "csv"), t)?);
        files.push(write_residuals(&artifact_path(out, "explain", "motif_residuals", "csv"), t)?);
    }
    for p in profiles {
        let section = format!("cluster{}", p.cluster);
        files.push(write_states(&artifact_path(out, &section, "states", "csv"), graph, &p.states.bins)?);
        files.push(write_od(&artifact_path(out, &section, "od", "csv"), &p.od)?);
        files.push(write_motifs(&artifact_path(out, &section, "motifs", "csv"), &p.motifs)?);
        files.push(write_rows(
            &artifact_path(out, &section, "lengths", "csv"),
            &["min", "q1", "median", "q3", "max", "whisker_low", "whisker_high", "outliers"],
            [vec![
                num(p.lengths.min),
                num(p.lengths.q1),
                num(p.lengths.median),
                num(p.lengths.q3),
                num(p.lengths.max),
                num(p.lengths.whisker_low),
                num(p.lengths.whisker_high),
                p.lengths.outliers.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" "),
            ]],
        )?);
    }
    files.push(write_rows(
        &artifact_path(out, "explain", "summary", "csv"),
        &["cluster", "share", "typical_activities", "length", "daily_patterns", "medoid", "mode", "label"],
        summaries.iter().map(|s| {
            vec![
                s.cluster.to_string(),
                num(s.share),
                join_ids(&s.typical_activities),
                s.length_class.to_string(),
                s.daily_patterns.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "),
                s.medoid.clone(),
                join_ids(&s.mode),
                s.label.clone().unwrap_or_default(),
            ]
        }),
    )?);
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub alpha: f64,
    pub sigma: String,
    pub sigma_resolved: f64,
    pub k: usize,
    pub ward: String,
    pub aggregate: String,
    pub stops_only: bool,
    pub residual_threshold: f64,
    pub binning: String,
    pub fano_support: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub fingerprint: String,
    pub params: Params,
    /// Input modification times, seconds since the Unix epoch.
    pub timestamps: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub k: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validity {
    pub k: usize,
    pub mean_silhouette: Option<f64>,
    pub candidates: Option<KSuggestion>,
    pub inertia_gaps: Vec<GapRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub meta: Meta,
    pub global: GlobalSection,
    pub clusters: Vec<ClusterSection>,
    pub validity: Validity,
}

impl Report {
    pub fn associations(tables: &FeatureTables) -> BTreeMap<String, Association> {
        let mut m = BTreeMap::new();
        m.insert("activities".to_string(), Association::of(&tables.activities));
        if let Some(t) = &tables.motifs {
            m.insert("motifs".to_string(), Association::of(t));
        }
        m
    }
}

/// Writes `report.json`.
pub fn emit_report(out: &Path, report: &Report) -> Result<PathBuf, ExplainError> {
    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), report)
}
