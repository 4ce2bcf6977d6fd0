use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::UNIX_EPOCH;

use semseq_core::clustering::{medoid, mode, scatter, silhouette, suggest_k, KSuggestion};
use semseq_core::explain::report::{
    artifact_path, cluster_sections, emit_report, global_indicators, read_labels, write_clustering, write_explain,
    write_global, ClusterStatsRow, GapRow, GlobalOptions, Meta, Params, Report, Validity, TOOL, VERSION,
};
use semseq_core::explain::{cluster_profiles, feature_tables, ProfileOptions, SummaryOptions};
use semseq_core::indicators::FanoSupport;
use semseq_core::metric::format_sig;
use semseq_core::{
    behavior_summary, distance_matrix, hac_ward, load_sequences, reference_ontology, CedParams, Clustering, Corpus,
    Dendrogram, DistanceMatrix, KnowledgeGraph, MatrixOptions, MatrixSource, Severity, Sigma, WardMode,
};

use crate::{
    ClusterArgs, DistmatArgs, ExplainArgs, Failure, IndicatorArgs, InputArgs, KRange, MetricArgs, Outcome,
    PartitionArgs, PipelineArgs, StatsArgs, WardArg,
};

/// Share of the farthest members dropped for the trimmed scatter values.
const TRIM: f64 = 0.05;

struct Inputs {
    graph: Arc<KnowledgeGraph>,
    corpus: Corpus,
    removed_immobile: usize,
    timestamps: BTreeMap<String, u64>,
}

fn open(path: &Path) -> Outcome<File> {
    File::open(path).map_err(|e| Failure::from(e).context(format!("cannot open {}", path.display())))
}

fn mtime(path: &Path) -> Outcome<u64> {
    let modified = std::fs::metadata(path)?.modified()?;
    Ok(modified.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

fn load_graph(path: Option<&Path>) -> Outcome<Arc<KnowledgeGraph>> {
    match path {
        None => Ok(Arc::new(reference_ontology())),
        Some(p) => KnowledgeGraph::load(open(p)?)
            .map(Arc::new)
            .map_err(|e| Failure::from(e).context(format!("ontology {}", p.display()))),
    }
}

/// Loads both inputs, skipping bad rows and immobile sequences.
fn load_inputs(a: &InputArgs) -> Outcome<Inputs> {
    let graph = load_graph(a.ontology.as_deref())?;
    let outcome = load_sequences(open(&a.sequences)?, graph.clone())
        .map_err(|e| Failure::from(e).context(format!("sequences {}", a.sequences.display())))?;
    let skipped = outcome.diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
    if skipped > 0 {
        log::warn!("skipped {skipped} invalid sequence rows; run `validate` for details");
    }
    let (corpus, removed_immobile) = outcome.corpus.filter_immobile();
    if removed_immobile > 0 {
        log::info!("removed {removed_immobile} single-activity sequences");
    }
    if corpus.is_empty() {
        return Err(Failure::validation("no usable sequences"));
    }
    let mut timestamps = BTreeMap::new();
    if let Some(p) = &a.ontology {
        timestamps.insert("ontology".to_string(), mtime(p)?);
    }
    timestamps.insert("sequences".to_string(), mtime(&a.sequences)?);
    Ok(Inputs {
        graph,
        corpus,
        removed_immobile,
        timestamps,
    })
}

pub fn validate(a: &InputArgs) -> Outcome {
    let graph = load_graph(a.ontology.as_deref())?;
    println!("ontology: {} concepts, depth {}", graph.len(), graph.max_depth());
    let outcome = load_sequences(open(&a.sequences)?, graph)?;
    for d in &outcome.diagnostics {
        eprintln!("{}:{d}", a.sequences.display());
    }
    let errors = outcome.diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
    println!(
        "sequences: {} valid, {} invalid, {} warnings",
        outcome.corpus.len(),
        errors,
        outcome.diagnostics.len() - errors
    );
    if errors > 0 {
        return Err(Failure::validation(format!("{errors} invalid sequence rows")));
    }
    if outcome.corpus.is_empty() {
        return Err(Failure::validation("no sequences"));
    }
    Ok(())
}

fn global_options(ind: &IndicatorArgs, level: &semseq_core::AggregationLevel) -> GlobalOptions {
    GlobalOptions {
        level: level.clone(),
        stops_only: ind.stops_only,
        binning: ind.binning.clone(),
        fano_support: ind.fano_support,
    }
}

pub fn stats(a: &StatsArgs) -> Outcome {
    let inp = load_inputs(&a.input)?;
    let g = global_indicators(&inp.corpus, inp.removed_immobile, &global_options(&a.indicators, &a.aggregate))?;
    let files = write_global(&a.out.out, &g, &inp.graph)?;
    println!("sequences: {} (removed {} single-activity)", g.sequences, g.removed_immobile);
    println!("length intervals: poisson lambda {}", format_sig(g.lengths.poisson_lambda, 6));
    if let Some(z) = &g.states.zipf {
        println!("states: zipf slope {} (r2 {})", format_sig(z.slope, 6), format_sig(z.r2, 6));
    }
    println!(
        "daily patterns: {} distinct, top {} cover {}",
        g.motifs.counts.len(),
        semseq_core::explain::report::TOP_MOTIFS,
        format_sig(g.motifs.coverage(semseq_core::explain::report::TOP_MOTIFS), 4)
    );
    println!("wrote {} files to {}", files.len(), a.out.out.display());
    Ok(())
}

fn cache_path(m: &MetricArgs, out: &Path) -> PathBuf {
    m.cache.clone().unwrap_or_else(|| out.join("distmat.cache"))
}

fn matrix(inp: &Inputs, m: &MetricArgs, out: &Path) -> Outcome<(DistanceMatrix, f64)> {
    if !(0.0..=1.0).contains(&m.alpha) {
        return Err(Failure::config(format!("--alpha must lie in [0, 1], got {}", m.alpha)));
    }
    if m.workers == Some(0) {
        return Err(Failure::config("--workers must be at least 1"));
    }
    let params = CedParams {
        alpha: m.alpha,
        sigma: m.sigma,
    };
    let sigma = params.resolve_sigma(&inp.corpus)?;
    let cache = cache_path(m, out);
    let opts = MatrixOptions {
        cache: Some(&cache),
        workers: m.workers,
    };
    let (matrix, source) = distance_matrix(&inp.corpus, &params, &opts)?;
    match source {
        MatrixSource::CacheHit => log::info!("distance matrix: cache hit ({}), computation skipped", cache.display()),
        MatrixSource::Computed | MatrixSource::CacheStale => {
            log::info!("distance matrix: computed {} sequences, sigma {}", matrix.len(), format_sig(sigma, 6))
        }
    }
    Ok((matrix, sigma))
}

pub fn distmat(a: &DistmatArgs) -> Outcome<DistanceMatrix> {
    let inp = load_inputs(&a.input)?;
    let (m, sigma) = matrix(&inp, &a.metric, &a.out.out)?;
    let path = artifact_path(&a.out.out, "distmat", "matrix", "csv");
    m.write_csv(File::create(&path)?)?;
    println!("distance matrix: {} sequences, sigma {}, fingerprint {}", m.len(), format_sig(sigma, 6), m.fingerprint());
    Ok(m)
}

fn k_range(p: &PartitionArgs, n: usize) -> Outcome<KRange> {
    if n < 3 {
        return Err(Failure::config(format!("clustering needs at least 3 sequences, got {n}")));
    }
    let r = p.k_range.unwrap_or(KRange { lo: 2, hi: 10.min(n - 1) });
    if r.lo < 2 || r.lo > r.hi || r.hi > n - 1 {
        return Err(Failure::config(format!(
            "--k-range {}..{} must satisfy 2 <= lo <= hi <= {}",
            r.lo,
            r.hi,
            n - 1
        )));
    }
    Ok(r)
}

fn check_k(k: usize, n: usize) -> Outcome {
    if k < 2 {
        return Err(Failure::config(format!("k = {k}: the silhouette needs at least 2 clusters")));
    }
    if k > n - 1 {
        return Err(Failure::config(format!("k = {k} exceeds {} for {n} sequences", n - 1)));
    }
    Ok(())
}

fn dendrogram(m: &DistanceMatrix, ward: WardArg) -> Outcome<(Dendrogram, WardMode)> {
    let mode = WardMode::from(ward);
    Ok((hac_ward(m, mode)?, mode))
}

fn suggestion(d: &Dendrogram, m: &DistanceMatrix, p: &PartitionArgs) -> Outcome<KSuggestion> {
    let r = k_range(p, m.len())?;
    Ok(suggest_k(d, m, r.lo, r.hi)?)
}

pub fn cluster(a: &ClusterArgs) -> Outcome {
    let inp = load_inputs(&a.input)?;
    let n = inp.corpus.len();
    if let Some(k) = a.partition.k {
        check_k(k, n)?;
    }
    let (m, _) = matrix(&inp, &a.metric, &a.out.out)?;
    let (d, _) = dendrogram(&m, a.partition.ward)?;
    let sug = suggestion(&d, &m, &a.partition)?;
    let k = a.partition.k.unwrap_or_else(|| sug.best_silhouette());
    let cl = d.cut(k)?;
    let sil = silhouette(&m, &cl)?;
    let rows: Vec<ClusterStatsRow> = (1..=k)
        .map(|c| {
            let members = cl.members(c);
            let seqs: Vec<_> = members.iter().map(|&i| &inp.corpus.sequences()[i]).collect();
            ClusterStatsRow {
                cluster: c,
                size: members.len(),
                share: members.len() as f64 / n as f64,
                silhouette: Some(sil.per_cluster[c - 1]),
                scatter: scatter(&m, &members, TRIM),
                medoid: m.ids()[medoid(&m, &members)].clone(),
                mode: mode(&seqs).expect("clusters are non-empty"),
            }
        })
        .collect();
    write_clustering(&a.out.out, m.ids(), &d, &cl, &rows, Some(&sug))?;
    println!(
        "k = {k}{} (mean silhouette {}); sizes {:?}",
        if a.partition.k.is_some() { "" } else { " by silhouette" },
        format_sig(sil.mean, 4),
        cl.sizes()
    );
    Ok(())
}

/// Labels in corpus order, matched by id.
fn aligned_labels(path: &Path, corpus: &Corpus) -> Outcome<Clustering> {
    let (ids, labels) = read_labels(path).map_err(|e| Failure::from(e).context(format!("labels {}", path.display())))?;
    let by_id: HashMap<&str, usize> = ids.iter().map(String::as_str).zip(labels.iter().copied()).collect();
    let aligned = corpus
        .sequences()
        .iter()
        .map(|s| {
            by_id
                .get(s.person_id.as_str())
                .copied()
                .ok_or_else(|| Failure::validation(format!("no cluster label for sequence `{}`", s.person_id)))
        })
        .collect::<Outcome<Vec<usize>>>()?;
    Ok(Clustering::from_labels(aligned)?)
}

fn sigma_text(s: Sigma) -> String {
    match s {
        Sigma::Auto => "auto".to_string(),
        Sigma::Fixed(x) => format_sig(x, 9),
    }
}

pub fn explain(a: &ExplainArgs) -> Outcome {
    let inp = load_inputs(&a.input)?;
    let out = &a.out.out;
    let labels_path = a.summary.labels.clone().unwrap_or_else(|| artifact_path(out, "clustering", "labels", "csv"));
    let cl = aligned_labels(&labels_path, &inp.corpus)?;
    check_k(cl.k, inp.corpus.len())?;
    let (m, sigma) = matrix(&inp, &a.metric, out)?;

    let profile_opts = ProfileOptions {
        level: a.summary.aggregate.clone(),
        stops_only: a.indicators.stops_only,
        trim: TRIM,
    };
    let summary_opts = SummaryOptions {
        threshold: a.summary.residual_threshold,
        level: a.summary.aggregate.clone(),
        stops_only: a.indicators.stops_only,
        binning: a.indicators.binning.clone(),
        weighting: a.summary.weighting.into(),
    };
    let profiles = cluster_profiles(&inp.corpus, &cl, &m, &profile_opts)?;
    let summaries = behavior_summary(&inp.corpus, &cl, &m, &summary_opts)?;
    let tables = feature_tables(&inp.corpus, &cl, &summary_opts)?;
    write_explain(out, &inp.graph, &tables, &profiles, &summaries)?;

    let global = global_indicators(
        &inp.corpus,
        inp.removed_immobile,
        &global_options(&a.indicators, &a.summary.stats_aggregate),
    )?;
    let mut global_section = global.section(&inp.graph);
    global_section.association = Report::associations(&tables);

    let (d, ward) = dendrogram(&m, a.partition.ward)?;
    let report = Report {
        meta: Meta {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            fingerprint: m.fingerprint().to_string(),
            params: Params {
                alpha: a.metric.alpha,
                sigma: sigma_text(a.metric.sigma),
                sigma_resolved: sigma,
                k: cl.k,
                ward: match ward {
                    WardMode::Squared => "squared",
                    WardMode::Raw => "raw",
                }
                .to_string(),
                aggregate: a.summary.aggregate.to_string(),
                stops_only: a.indicators.stops_only,
                residual_threshold: a.summary.residual_threshold,
                binning: a.indicators.binning.to_string(),
                fano_support: match a.indicators.fano_support {
                    FanoSupport::Distinct => "distinct",
                    FanoSupport::Length => "length",
                }
                .to_string(),
            },
            timestamps: inp.timestamps.clone(),
        },
        global: global_section,
        clusters: cluster_sections(&inp.graph, &profiles, &summaries),
        validity: Validity {
            k: cl.k,
            mean_silhouette: Some(silhouette(&m, &cl)?.mean),
            candidates: Some(suggestion(&d, &m, &a.partition)?),
            inertia_gaps: d.inertia_gaps().into_iter().map(|(k, gap)| GapRow { k, gap }).collect(),
        },
    };
    let path = emit_report(out, &report)?;

    for s in &summaries {
        let typical: Vec<String> = s
            .typical_activities
            .iter()
            .map(|&c| inp.graph.concept(c).map(|x| x.label.clone()).unwrap_or_else(|_| c.to_string()))
            .collect();
        let patterns: Vec<String> = s.daily_patterns.iter().map(ToString::to_string).collect();
        println!(
            "cluster {} ({}%): typical [{}], {} sequences, patterns [{}], medoid {}",
            s.cluster,
            format_sig(s.share, 3),
            typical.join(", "),
            s.length_class,
            patterns.join(" "),
            s.medoid
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn pipeline(a: &PipelineArgs) -> Outcome {
    stats(&StatsArgs {
        input: a.input.clone(),
        out: a.out.clone(),
        indicators: a.indicators.clone(),
        aggregate: a.summary.stats_aggregate.clone(),
    })?;
    distmat(&DistmatArgs {
        input: a.input.clone(),
        out: a.out.clone(),
        metric: a.metric.clone(),
    })?;
    cluster(&ClusterArgs {
        input: a.input.clone(),
        out: a.out.clone(),
        metric: a.metric.clone(),
        partition: a.partition.clone(),
    })?;
    let mut a = a.clone();
    a.summary.labels = None;
    explain(&a)
}
