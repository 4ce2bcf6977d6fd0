//! Semantic sequence corpora: ingest, validation and the transformations
//! applied before analysis (immobile filtering, aggregation, stop projection).

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ontology::{AggregationLevel, ConceptId, KnowledgeGraph, OntologyError};

/// One person's ordered day of activities, with no consecutive repeats.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SemanticSequence {
    pub person_id: String,
    activities: Vec<ConceptId>,
}

impl SemanticSequence {
    /// Builds a sequence, collapsing consecutive repeats. Returns `None` for
    /// an empty activity list.
    pub fn new(person_id: impl Into<String>, activities: impl IntoIterator<Item = ConceptId>) -> Option<Self> {
        let activities = collapse_repeats(activities);
        (!activities.is_empty()).then(|| SemanticSequence {
            person_id: person_id.into(),
            activities,
        })
    }

    pub fn activities(&self) -> &[ConceptId] {
        &self.activities
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    /// Number of distinct activities.
    pub fn distinct(&self) -> usize {
        self.activities.iter().collect::<HashSet<_>>().len()
    }
}

impl fmt::Display for SemanticSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, a) in self.activities.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ">")
    }
}

pub fn collapse_repeats(activities: impl IntoIterator<Item = ConceptId>) -> Vec<ConceptId> {
    let mut out: Vec<ConceptId> = Vec::new();
    for a in activities {
        if out.last() != Some(&a) {
            out.push(a);
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing or malformed header (expected `id,activities`)")]
    Header,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("duplicate person id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

/// Row-level finding from [`load_sequences`]. `line` is 1-based and counts the
/// header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "line {}: {sev}: {}", self.line, self.message)
    }
}

/// Validated sequences bound to the graph they were checked against.
#[derive(Debug, Clone)]
pub struct Corpus {
    graph: Arc<KnowledgeGraph>,
    sequences: Vec<SemanticSequence>,
}

pub struct LoadOutcome {
    pub corpus: Corpus,
    pub diagnostics: Vec<RowDiagnostic>,
}

impl LoadOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }
}

/// Reads the `id,activities` CSV format. Rows with unknown codes or malformed
/// content are dropped and reported; consecutive repeats are collapsed with a
/// warning. Any additional columns (e.g. time of day) are ignored.
pub fn load_sequences<R: Read>(source: R, graph: Arc<KnowledgeGraph>) -> Result<LoadOutcome, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let id_col = headers.iter().position(|h| h == "id").ok_or(CorpusError::Header)?;
    let act_col = headers
        .iter()
        .position(|h| h == "activities")
        .ok_or(CorpusError::Header)?;

    let mut diagnostics = Vec::new();
    let mut sequences = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut error = |message: String| {
            diagnostics.push(RowDiagnostic {
                line,
                severity: Severity::Error,
                message,
            })
        };
        let (Some(id), Some(acts)) = (record.get(id_col), record.get(act_col)) else {
            error("missing field".into());
            continue;
        };
        if id.is_empty() {
            error("empty id".into());
            continue;
        }
        let mut codes = Vec::new();
        let mut bad = None;
        for tok in acts.split_whitespace() {
            match tok.parse::<u32>() {
                Ok(c) if graph.contains(ConceptId(c)) => codes.push(ConceptId(c)),
                Ok(c) => {
                    bad = Some(format!("unknown activity code {c}"));
                    break;
                }
                Err(_) => {
                    bad = Some(format!("malformed activity code `{tok}`"));
                    break;
                }
            }
        }
        if let Some(msg) = bad {
            error(msg);
            continue;
        }
        if codes.is_empty() {
            error("empty activity list".into());
            continue;
        }
        if !seen.insert(id.to_string()) {
            error(format!("duplicate person id `{id}`"));
            continue;
        }
        let raw_len = codes.len();
        let seq = SemanticSequence::new(id, codes).expect("non-empty");
        if seq.len() < raw_len {
            diagnostics.push(RowDiagnostic {
                line,
                severity: Severity::Warning,
                message: format!("collapsed {} consecutive repeat(s)", raw_len - seq.len()),
            });
        }
        sequences.push(seq);
    }
    Ok(LoadOutcome {
        corpus: Corpus { graph, sequences },
        diagnostics,
    })
}

impl Corpus {
    /// Validates sequences against the graph; ids must be unique and every
    /// activity known.
    pub fn new(graph: Arc<KnowledgeGraph>, sequences: Vec<SemanticSequence>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for s in &sequences {
            if !seen.insert(s.person_id.as_str()) {
                return Err(CorpusError::DuplicateId(s.person_id.clone()));
            }
            for &a in s.activities() {
                if !graph.contains(a) {
                    return Err(OntologyError::UnknownConcept(a).into());
                }
            }
        }
        Ok(Corpus { graph, sequences })
    }

    pub fn graph(&self) -> &Arc<KnowledgeGraph> {
        &self.graph
    }

    pub fn sequences(&self) -> &[SemanticSequence] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.sequences.iter().map(|s| s.person_id.clone()).collect()
    }

    /// Sub-corpus made of the given positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> Corpus {
        Corpus {
            graph: Arc::clone(&self.graph),
            sequences: positions.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }

    /// Drops sequences without any move activity; returns the number removed.
    pub fn filter_immobile(&self) -> (Corpus, usize) {
        let kept: Vec<SemanticSequence> = self
            .sequences
            .iter()
            .filter(|s| s.activities().iter().any(|&a| self.graph.is_move(a)))
            .cloned()
            .collect();
        let removed = self.sequences.len() - kept.len();
        (
            Corpus {
                graph: Arc::clone(&self.graph),
                sequences: kept,
            },
            removed,
        )
    }

    pub fn aggregate(&self, lvl: &AggregationLevel) -> Result<Corpus, CorpusError> {
        let sequences = self
            .sequences
            .iter()
            .map(|s| aggregate_sequence(&self.graph, s, lvl))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus {
            graph: Arc::clone(&self.graph),
            sequences,
        })
    }

    /// Sequences of length one, which stay in the corpus but make any edit
    /// distance against them degenerate.
    pub fn singletons(&self) -> Vec<&str> {
        self.sequences
            .iter()
            .filter(|s| s.len() == 1)
            .map(|s| s.person_id.as_str())
            .collect()
    }

    pub fn stop_projection(&self, s: &SemanticSequence) -> Option<SemanticSequence> {
        stop_projection(&self.graph, s)
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), CorpusError> {
        write_sequences(&self.sequences, out)
    }

    /// Stable content digest input.
    pub fn canonical_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8")
    }
}

pub fn aggregate_sequence(
    graph: &KnowledgeGraph,
    s: &SemanticSequence,
    lvl: &AggregationLevel,
) -> Result<SemanticSequence, OntologyError> {
    let acts = s
        .activities()
        .iter()
        .map(|&a| graph.aggregate(a, lvl))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SemanticSequence::new(s.person_id.clone(), acts).expect("aggregation keeps length >= 1"))
}

/// Keeps only stop activities, collapsing the repeats this creates. `None`
/// when the sequence has no stop at all.
pub fn stop_projection(graph: &KnowledgeGraph, s: &SemanticSequence) -> Option<SemanticSequence> {
    SemanticSequence::new(
        s.person_id.clone(),
        s.activities().iter().copied().filter(|&a| graph.is_stop(a)),
    )
}

pub fn write_sequences<W: Write>(sequences: &[SemanticSequence], out: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "activities"])?;
    for s in sequences {
        let acts: Vec<String> = s.activities().iter().map(|a| a.to_string()).collect();
        w.write_record([s.person_id.as_str(), acts.join(" ").as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::reference_ontology;

    fn ids(v: &[u32]) -> Vec<ConceptId> {
        v.iter().map(|&c| ConceptId(c)).collect()
    }

    fn load(text: &str) -> LoadOutcome {
        load_sequences(text.as_bytes(), Arc::new(reference_ontology())).unwrap()
    }

    #[test]
    fn loads_sams_day() {
        let out = load("id,activities\ns1,1 100 131 11 100 1\n");
        assert!(out.diagnostics.is_empty());
        assert_eq!(out.corpus.sequences()[0].activities(), ids(&[1, 100, 131, 11, 100, 1]));
    }

    #[test]
    fn collapses_repeats_with_warning() {
        let out = load("id,activities\ns1,1 1 100\n");
        assert_eq!(out.corpus.sequences()[0].activities(), ids(&[1, 100]));
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].severity, Severity::Warning);
        assert_eq!(out.diagnostics[0].line, 2);
    }

    #[test]
    fn unknown_code_is_row_error() {
        let out = load("id,activities\ns1,1 100 1\ns2,1 999 1\n");
        assert_eq!(out.corpus.len(), 1);
        let d = &out.diagnostics[0];
        assert_eq!(d.severity, Severity::Error);
        assert_eq!(d.line, 3);
        assert!(d.message.contains("999"));
        assert!(out.has_errors());
    }

    #[test]
    fn malformed_and_duplicate_rows() {
        let out = load("id,activities\ns1,1 x\ns1,1 100 1\ns1,1 100 1\ns2,\n");
        assert_eq!(out.corpus.len(), 1);
        let lines: Vec<usize> = out.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![2, 4, 5]);
    }

    #[test]
    fn header_is_required() {
        let r = load_sequences("a,b\n1,2\n".as_bytes(), Arc::new(reference_ontology()));
        assert!(matches!(r, Err(CorpusError::Header)));
    }

    #[test]
    fn extra_columns_are_ignored() {
        let out = load("id,activities,start\ns1,1 100 1,08:00\n");
        assert_eq!(out.corpus.sequences()[0].activities(), ids(&[1, 100, 1]));
    }

    #[test]
    fn immobile_filter() {
        let out = load("id,activities\nhome,1\nsam,1 100 131 11 100 1\n");
        let (kept, removed) = out.corpus.filter_immobile();
        assert_eq!(removed, 1);
        assert_eq!(kept.ids(), vec!["sam".to_string()]);
        let empty = Corpus::new(Arc::new(reference_ontology()), vec![]).unwrap();
        let (kept, removed) = empty.filter_immobile();
        assert!(kept.is_empty());
        assert_eq!(removed, 0);
    }

    #[test]
    fn meta_aggregation_of_sams_day() {
        let out = load("id,activities\nsam,1 100 131 11 100 1\nshop,30 31\n");
        let agg = out.corpus.aggregate(&AggregationLevel::Meta).unwrap();
        assert_eq!(
            agg.sequences()[0].activities(),
            ids(&[1001, 1101, 1103, 1002, 1101, 1001])
        );
        assert_eq!(agg.sequences()[1].activities(), ids(&[1004]));
        let g = reference_ontology();
        let same = out.corpus.aggregate(&AggregationLevel::Depth(g.max_depth())).unwrap();
        assert_eq!(same.sequences(), out.corpus.sequences());
    }

    #[test]
    fn stop_projection_cases() {
        let g = reference_ontology();
        let s = SemanticSequence::new("s", ids(&[1, 100, 131, 11, 100, 1])).unwrap();
        assert_eq!(stop_projection(&g, &s).unwrap().activities(), ids(&[1, 11, 1]));
        let s = SemanticSequence::new("s", ids(&[1, 100, 1])).unwrap();
        assert_eq!(stop_projection(&g, &s).unwrap().activities(), ids(&[1]));
        let s = SemanticSequence::new("s", ids(&[1, 11, 1])).unwrap();
        assert_eq!(stop_projection(&g, &s).unwrap(), s);
        let s = SemanticSequence::new("s", ids(&[100])).unwrap();
        assert!(stop_projection(&g, &s).is_none());
    }

    #[test]
    fn new_rejects_duplicates_and_unknown() {
        let g = Arc::new(reference_ontology());
        let a = SemanticSequence::new("a", ids(&[1])).unwrap();
        assert!(matches!(
            Corpus::new(g.clone(), vec![a.clone(), a.clone()]),
            Err(CorpusError::DuplicateId(_))
        ));
        let b = SemanticSequence::new("b", ids(&[12345])).unwrap();
        assert!(Corpus::new(g, vec![b]).is_err());
    }
}
