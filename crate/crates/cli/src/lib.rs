//! Driver for the `semseq` command: input validation, descriptive
//! statistics, the distance matrix, clustering, cluster explanation and a
//! synthetic corpus generator. Each stage reads and writes plain files under
//! `--out`, and `pipeline` runs the stages back to back.

mod failure;
mod generate;
mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semseq_core::explain::Weighting;
use semseq_core::indicators::FanoSupport;
use semseq_core::{AggregationLevel, IntervalBinning, Sigma, WardMode};

pub use failure::{Exit, Failure, Outcome};
pub use generate::{generate, planted_motif, planted_typical, Archetype, GeneratorConfig, ARCHETYPES};
pub use stages::{cluster, distmat, explain, pipeline, stats, validate};

#[derive(Debug, Parser)]
#[command(name = "semseq", version, about = "Ontology-aware analysis of activity sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the ontology and sequence files and report every problem.
    Validate(InputArgs),
    /// Whole-corpus indicators.
    Stats(StatsArgs),
    /// Pairwise distance matrix, cached on disk.
    Distmat(DistmatArgs),
    /// Ward clustering and validity indices.
    Cluster(ClusterArgs),
    /// Per-cluster profiles, behavior summaries and `report.json`.
    Explain(ExplainArgs),
    /// stats, distmat, cluster and explain in sequence.
    Pipeline(PipelineArgs),
    /// Synthetic corpus with known behavior groups.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Ontology edge list; the bundled reference ontology when omitted.
    #[arg(long, env = "SEMSEQ_ONTOLOGY")]
    pub ontology: Option<PathBuf>,
    /// Sequence CSV with `id` and `activities` columns.
    #[arg(long, env = "SEMSEQ_SEQUENCES")]
    pub sequences: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    #[arg(long, env = "SEMSEQ_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    /// Weight of the plain edit cost against the context term.
    #[arg(long, env = "SEMSEQ_ALPHA", default_value_t = 0.0)]
    pub alpha: f64,
    /// Context kernel width, or `auto` for half the median length.
    #[arg(long, env = "SEMSEQ_SIGMA", default_value = "auto")]
    pub sigma: Sigma,
    /// Threads for the distance matrix; all cores when omitted.
    #[arg(long, env = "SEMSEQ_WORKERS")]
    pub workers: Option<usize>,
    /// Matrix cache file; `<out>/distmat.cache` when omitted.
    #[arg(long, env = "SEMSEQ_CACHE")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct IndicatorArgs {
    /// Keep only stops for OD matrices and daily patterns.
    #[arg(long, env = "SEMSEQ_STOPS_ONLY", default_value_t = true, action = clap::ArgAction::Set)]
    pub stops_only: bool,
    /// Length intervals: `default` or increasing breakpoints such as `1,3,5`.
    #[arg(long, env = "SEMSEQ_BINNING", default_value = "default")]
    pub binning: IntervalBinning,
    /// Outcome count in the predictability bound.
    #[arg(long, env = "SEMSEQ_FANO_SUPPORT", default_value = "distinct")]
    pub fano_support: FanoSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum WardArg {
    #[default]
    Squared,
    Raw,
}

impl From<WardArg> for WardMode {
    fn from(w: WardArg) -> Self {
        match w {
            WardArg::Squared => WardMode::Squared,
            WardArg::Raw => WardMode::Raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum WeightingArg {
    /// Once per occurrence.
    #[default]
    Occurrence,
    /// Once per sequence.
    Presence,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Occurrence => Weighting::Occurrence,
            WeightingArg::Presence => Weighting::Presence,
        }
    }
}

/// Inclusive `lo..hi` or `lo-hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KRange {
    pub lo: usize,
    pub hi: usize,
}

impl std::str::FromStr for KRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| format!("k range must look like `2..10`, got `{s}`"))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad bound `{t}` in `{s}`"));
        Ok(KRange {
            lo: parse(a)?,
            hi: parse(b)?,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct PartitionArgs {
    /// Number of clusters; the best mean silhouette over `--k-range` when omitted.
    #[arg(long, env = "SEMSEQ_K")]
    pub k: Option<usize>,
    /// Candidate cluster counts; `2..min(10, n-1)` when omitted.
    #[arg(long, env = "SEMSEQ_K_RANGE")]
    pub k_range: Option<KRange>,
    #[arg(long, env = "SEMSEQ_WARD", value_enum, default_value_t = WardArg::Squared)]
    pub ward: WardArg,
}

#[derive(Debug, Clone, Args)]
pub struct SummaryArgs {
    /// Level of the typical activities and cluster profiles.
    #[arg(long, env = "SEMSEQ_AGGREGATE", default_value = "meta")]
    pub aggregate: AggregationLevel,
    /// Level of the whole-corpus state and OD tables in the report.
    #[arg(long, env = "SEMSEQ_STATS_AGGREGATE", default_value = "leaf")]
    pub stats_aggregate: AggregationLevel,
    /// Pearson residual an activity or motif must reach to be typical.
    #[arg(long, env = "SEMSEQ_RESIDUAL_THRESHOLD", default_value_t = 4.0)]
    pub residual_threshold: f64,
    /// How a sequence with repeated activities counts in the tables.
    #[arg(long, env = "SEMSEQ_WEIGHTING", value_enum, default_value_t = WeightingArg::Occurrence)]
    pub weighting: WeightingArg,
    /// Labels CSV; `<out>/clustering_labels.csv` when omitted.
    #[arg(long, env = "SEMSEQ_LABELS")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub indicators: IndicatorArgs,
    #[arg(long, env = "SEMSEQ_AGGREGATE", default_value = "leaf")]
    pub aggregate: AggregationLevel,
}

#[derive(Debug, Clone, Args)]
pub struct DistmatArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[command(flatten)]
    pub partition: PartitionArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[command(flatten)]
    pub indicators: IndicatorArgs,
    #[command(flatten)]
    pub summary: SummaryArgs,
}

pub type PipelineArgs = ExplainArgs;

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub out: OutArgs,
    /// Sequences per behavior group.
    #[arg(long, env = "SEMSEQ_PER_GROUP", default_value_t = 100)]
    pub per_group: usize,
    /// Per-position probability of swapping an activity for a sibling.
    #[arg(long, env = "SEMSEQ_NOISE", default_value_t = 0.1)]
    pub noise: f64,
    /// Per-sequence probability of one insertion and, separately, one
    /// deletion; equal to `--noise` when omitted.
    #[arg(long, env = "SEMSEQ_INDEL")]
    pub indel: Option<f64>,
    #[arg(long, env = "SEMSEQ_SEED", default_value_t = 0)]
    pub seed: u64,
}

/// Parses the process arguments. Help and version exit 0; any other parse
/// problem is a configuration error.
pub fn parse_args() -> Cli {
    match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Config as i32 } else { Exit::Success as i32 };
            let _ = e.print();
            std::process::exit(code);
        }
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Validate(a) => validate(&a),
        Command::Stats(a) => stats(&a),
        Command::Distmat(a) => distmat(&a).map(|_| ()),
        Command::Cluster(a) => cluster(&a),
        Command::Explain(a) => explain(&a),
        Command::Pipeline(a) => pipeline(&a),
        Command::Generate(a) => generate::run(&a),
    };
    match result {
        Ok(()) => Exit::Success as i32,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.exit as i32
        }
    }
}
