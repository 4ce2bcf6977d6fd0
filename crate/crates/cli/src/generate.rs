use std::collections::BTreeSet;
use std::fs::{self, File};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semseq_core::corpus::aggregate_sequence;
use semseq_core::explain::report::write_labels;
use semseq_core::indicators::daily_pattern;
use semseq_core::{
    reference_ontology, AggregationLevel, Clustering, ConceptId, Corpus, KnowledgeGraph, MotifKey, SemanticSequence,
};

use crate::{Failure, GenerateArgs, Outcome};

/// A behavior group: every member is a noisy copy of `template`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Archetype {
    pub name: &'static str,
    pub template: &'static [u32],
}

pub const ARCHETYPES: [Archetype; 3] = [
    Archetype {
        name: "commuter",
        template: &[1, 121, 11, 121, 1],
    },
    Archetype {
        name: "foot shopper",
        template: &[1, 100, 33, 100, 34, 100, 1],
    },
    Archetype {
        name: "schoolchild",
        template: &[1, 131, 22, 131, 51, 131, 22, 131, 1],
    },
];

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub per_group: usize,
    /// Per-position sibling swap probability.
    pub noise: f64,
    /// Per-sequence probability of an insertion, and separately of a deletion.
    pub indel: f64,
    pub seed: u64,
}

fn template(a: &Archetype) -> Vec<ConceptId> {
    a.template.iter().map(|&c| ConceptId(c)).collect()
}

/// Meta groups of the template that no other archetype uses.
pub fn planted_typical(graph: &KnowledgeGraph, a: &Archetype) -> BTreeSet<ConceptId> {
    let metas = |arch: &Archetype| -> BTreeSet<ConceptId> {
        let s = SemanticSequence::new(arch.name, template(arch)).expect("templates are non-empty");
        aggregate_sequence(graph, &s, &AggregationLevel::Meta)
            .expect("templates use known concepts")
            .activities()
            .iter()
            .copied()
            .collect()
    };
    let mut own = metas(a);
    for other in ARCHETYPES.iter().filter(|o| o.name != a.name) {
        for m in metas(other) {
            own.remove(&m);
        }
    }
    own
}

/// Daily-pattern class of the noiseless template.
pub fn planted_motif(graph: &KnowledgeGraph, a: &Archetype) -> MotifKey {
    let s = SemanticSequence::new(a.name, template(a)).expect("templates are non-empty");
    daily_pattern(graph, &s, true)
        .expect("templates have few stops")
        .expect("templates contain stops")
}

fn leaves(graph: &KnowledgeGraph) -> Vec<ConceptId> {
    let mut v: Vec<ConceptId> = graph
        .concepts()
        .map(|c| c.id)
        .filter(|&c| graph.children(c).map(|ch| ch.is_empty()).unwrap_or(false))
        .collect();
    v.sort_unstable();
    v
}

/// Other leaves under any parent of `x`, of the same kind.
fn siblings(graph: &KnowledgeGraph, x: ConceptId) -> Vec<ConceptId> {
    let mut out = BTreeSet::new();
    for p in graph.parents(x).unwrap_or_default() {
        for c in graph.children(p).unwrap_or_default() {
            let leaf = graph.children(c).map(|ch| ch.is_empty()).unwrap_or(false);
            if c != x && leaf && graph.is_move(c) == graph.is_move(x) && graph.is_stop(c) == graph.is_stop(x) {
                out.insert(c);
            }
        }
    }
    out.into_iter().collect()
}

/// Corpus of `per_group` sequences per archetype, group by group, with the
/// 1-based group of every sequence.
pub fn generate(graph: Arc<KnowledgeGraph>, cfg: &GeneratorConfig) -> Result<(Corpus, Vec<usize>), String> {
    for (name, p) in [("noise", cfg.noise), ("indel", cfg.indel)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("{name} rate must lie in [0, 1], got {p}"));
        }
    }
    if cfg.per_group == 0 {
        return Err("per-group count must be positive".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = leaves(&graph);
    let mut sequences = Vec::new();
    let mut labels = Vec::new();
    for (g, arch) in ARCHETYPES.iter().enumerate() {
        let sibs: Vec<Vec<ConceptId>> = template(arch).iter().map(|&x| siblings(&graph, x)).collect();
        for _ in 0..cfg.per_group {
            let mut acts: Vec<ConceptId> = template(arch)
                .into_iter()
                .zip(&sibs)
                .map(|(x, s)| {
                    if rng.gen_bool(cfg.noise) && !s.is_empty() {
                        s[rng.gen_range(0..s.len())]
                    } else {
                        x
                    }
                })
                .collect();
            if rng.gen_bool(cfg.indel) {
                let at = rng.gen_range(0..=acts.len());
                acts.insert(at, pool[rng.gen_range(0..pool.len())]);
            }
            if rng.gen_bool(cfg.indel) && acts.len() > 1 {
                acts.remove(rng.gen_range(0..acts.len()));
            }
            let id = format!("p{:04}", sequences.len() + 1);
            sequences.push(SemanticSequence::new(id, acts).expect("at least one activity"));
            labels.push(g + 1);
        }
    }
    let corpus = Corpus::new(graph, sequences).map_err(|e| e.to_string())?;
    Ok((corpus, labels))
}

pub(crate) fn run(a: &GenerateArgs) -> Outcome {
    let cfg = GeneratorConfig {
        per_group: a.per_group,
        noise: a.noise,
        indel: a.indel.unwrap_or(a.noise),
        seed: a.seed,
    };
    let graph = Arc::new(reference_ontology());
    let (corpus, labels) = generate(graph.clone(), &cfg).map_err(Failure::config)?;
    let out = &a.out.out;
    fs::create_dir_all(out)?;
    corpus.write(File::create(out.join("sequences.csv"))?)?;
    graph.write(File::create(out.join("ontology.tsv"))?)?;
    let cl = Clustering::from_labels(labels)?;
    write_labels(&out.join("labels.csv"), &corpus.ids(), &cl)?;
    println!(
        "wrote {} sequences in {} groups to {}",
        corpus.len(),
        ARCHETYPES.len(),
        out.display()
    );
    Ok(())
}
