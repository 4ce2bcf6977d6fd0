//! Deterministic inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semseq_core::{ConceptId, DistanceMatrix, SemanticSequence};

/// Leaves of the reference ontology, stops and moves mixed.
pub const ALPHABET: [u32; 12] = [1, 2, 11, 12, 22, 33, 34, 51, 100, 111, 121, 131];

pub fn sequences(count: usize, max_len: usize, seed: u64) -> Vec<SemanticSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let len = rng.gen_range(2..=max_len);
            let acts = (0..len).map(|_| ConceptId(ALPHABET[rng.gen_range(0..ALPHABET.len())]));
            SemanticSequence::new(format!("s{i:05}"), acts).expect("non-empty")
        })
        .collect()
}

/// Euclidean distances between uniform points in the unit square.
pub fn point_matrix(n: usize, seed: u64) -> DistanceMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let ids = (0..n).map(|i| format!("p{i:05}")).collect();
    DistanceMatrix::from_fn(ids, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt())
}
