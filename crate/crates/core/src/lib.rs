//! Semantic sequence analysis: ontology-aware edit distances, mobility
//! indicators, Ward clustering and cluster explanation.

pub mod clustering;
pub mod corpus;
pub mod explain;
pub mod indicators;
pub mod metric;
pub mod ontology;

pub use corpus::{load_sequences, Corpus, CorpusError, LoadOutcome, RowDiagnostic, SemanticSequence, Severity};
pub use metric::{distance_matrix, Ced, CedParams, DistanceMatrix, MatrixOptions, MatrixSource, MetricError, Sigma, Similarity};
pub use ontology::{
    reference_ontology, AggregationLevel, Concept, ConceptId, ConceptKind, KnowledgeGraph, OntologyError,
};
pub use clustering::{hac_ward, Clustering, Dendrogram, WardMode};
pub use explain::{behavior_summary, BehaviorSummary, ContingencyTable, ExplainError};
pub use indicators::{IndicatorError, IntervalBinning, MotifKey};
