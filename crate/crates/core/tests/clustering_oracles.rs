mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semseq_core::clustering::{adjusted_rand_index, medoid, mode, scatter, silhouette, suggest_k};
use semseq_core::{hac_ward, Clustering, ConceptId, DistanceMatrix, SemanticSequence, WardMode};

fn euclid(points: &[Vec<f64>]) -> DistanceMatrix {
    let ids = (0..points.len()).map(|i| format!("p{i:03}")).collect();
    DistanceMatrix::from_fn(ids, |i, j| {
        points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    })
}

fn arb_points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 2), 2..16)
}

fn arb_matrix() -> impl Strategy<Value = DistanceMatrix> {
    (2usize..20).prop_flat_map(|n| {
        proptest::collection::vec(0.0f64..1.0, n * (n - 1) / 2).prop_map(move |v| {
            let ids = (0..n).map(|i| format!("s{i}")).collect();
            DistanceMatrix::from_fn(ids, |i, j| {
                let (a, b) = (i.max(j), i.min(j));
                v[a * (a - 1) / 2 + b]
            })
        })
    })
}

/// Silhouette straight from its definition; singletons score 0.
fn naive_silhouette(m: &DistanceMatrix, labels: &[usize]) -> Vec<f64> {
    let n = labels.len();
    (0..n)
        .map(|i| {
            let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if own.is_empty() {
                return 0.0;
            }
            let a = own.iter().map(|&j| m.get(i, j)).sum::<f64>() / own.len() as f64;
            let mut b = f64::INFINITY;
            for c in labels.iter().copied().filter(|&c| c != labels[i]) {
                let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                b = b.min(other.iter().map(|&j| m.get(i, j)).sum::<f64>() / other.len() as f64);
            }
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn ward_matches_centroid_oracle(points in arb_points()) {
        prop_assume!(oracles::naive_ward_min_cost_gap(&points) > 1e-6);
        let d = hac_ward(&euclid(&points), WardMode::Squared).unwrap();
        let want = oracles::naive_ward(&points);
        prop_assert_eq!(d.merges.len(), want.len());
        for (got, (lo, hi, h)) in d.merges.iter().zip(want) {
            prop_assert_eq!((got.left.min(got.right), got.left.max(got.right)), (lo, hi));
            prop_assert!((got.height - h).abs() <= 1e-9 * h.max(1.0), "{} vs {}", got.height, h);
        }
    }

    #[test]
    fn heights_never_decrease(m in arb_matrix()) {
        for mode in [WardMode::Squared, WardMode::Raw] {
            let h = hac_ward(&m, mode).unwrap().heights();
            prop_assert!(h.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{:?}", h);
        }
    }

    #[test]
    fn cuts_are_nested_partitions(m in arb_matrix()) {
        let d = hac_ward(&m, WardMode::Squared).unwrap();
        let n = m.len();
        let mut coarser: Option<Clustering> = None;
        for k in 1..=n {
            let cl = d.cut(k).unwrap();
            let mut seen: Vec<usize> = cl.labels.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen, (1..=k).collect::<Vec<_>>());
            // Labels are numbered by first appearance.
            let mut next = 1;
            for &l in &cl.labels {
                prop_assert!(l <= next);
                if l == next {
                    next += 1;
                }
            }
            if let Some(c) = &coarser {
                for i in 0..n {
                    for j in 0..n {
                        if cl.labels[i] == cl.labels[j] {
                            prop_assert_eq!(c.labels[i], c.labels[j]);
                        }
                    }
                }
            }
            coarser = Some(cl);
        }
    }

    #[test]
    fn silhouette_matches_definition(m in arb_matrix(), seed in any::<u64>()) {
        let n = m.len();
        prop_assume!(n >= 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(2..n);
        let d = hac_ward(&m, WardMode::Squared).unwrap();
        let cl = d.cut(k).unwrap();
        let s = silhouette(&m, &cl).unwrap();
        let want = naive_silhouette(&m, &cl.labels);
        for (a, b) in s.values.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(a));
        }
        prop_assert!((s.mean - want.iter().sum::<f64>() / n as f64).abs() < 1e-12);
    }

    #[test]
    fn medoid_and_scatter_match_brute_force(points in proptest::collection::vec(proptest::collection::vec(0u8..4, 2), 1..25), trim in 0.0f64..0.3) {
        // Coarse integer grid so ties are common.
        let pts: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|&v| f64::from(v)).collect()).collect();
        let n = pts.len();
        let ids: Vec<String> = (0..n).map(|i| format!("z{:03}", n - i)).collect();
        let m = DistanceMatrix::from_fn(ids.clone(), |i, j| {
            pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        });
        let members: Vec<usize> = (0..n).collect();
        let dist = |i: usize, j: usize| m.get(i, j);
        let c = oracles::brute_medoid(&ids, &dist, &members);
        prop_assert_eq!(medoid(&m, &members), c);
        let sc = scatter(&m, &members, trim);
        prop_assert_eq!(sc.diameter, oracles::brute_diameter(&dist, &members));
        let radius = members.iter().map(|&i| m.get(c, i)).fold(0.0, f64::max);
        prop_assert_eq!(sc.radius, radius);
        prop_assert!(sc.diameter95 <= sc.diameter && sc.radius95 <= sc.radius);
        // After trimming, at most `n - drop` members are within radius95.
        let drop = ((trim * n as f64).ceil() as usize).min(n - 1);
        let inside = members.iter().filter(|&&i| m.get(c, i) <= sc.radius95).count();
        prop_assert!(inside >= n - drop);
        prop_assert!(sc.radius95 <= sc.diameter95 || n == 1);
    }

    #[test]
    fn mode_matches_brute_force(lists in proptest::collection::vec(proptest::collection::vec(1u32..4, 1..4), 1..30)) {
        let seqs: Vec<SemanticSequence> = lists
            .iter()
            .enumerate()
            .map(|(i, l)| SemanticSequence::new(format!("s{i}"), l.iter().map(|&c| ConceptId(c))).unwrap())
            .collect();
        let normalized: Vec<Vec<u32>> = seqs.iter().map(|s| s.activities().iter().map(|c| c.0).collect()).collect();
        let refs: Vec<&SemanticSequence> = seqs.iter().collect();
        let got: Vec<u32> = mode(&refs).unwrap().into_iter().map(|c| c.0).collect();
        prop_assert_eq!(got, oracles::brute_mode(&normalized));
    }

    #[test]
    fn ari_matches_pair_counting(a in proptest::collection::vec(0usize..4, 4..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<usize> = a.iter().map(|&x| if rng.gen_bool(0.3) { rng.gen_range(0..4) } else { x }).collect();
        let want = oracles::brute_ari(&a, &b);
        let got = adjusted_rand_index(&a, &b);
        if want.is_finite() {
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
        prop_assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-12 || want.is_nan());
    }
}

fn planted_blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [[0.0, 0.0], [10.0, 0.0], [5.0, 8.0]];
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..20 {
            pts.push(vec![centre[0] + rng.gen_range(-1.0..1.0), centre[1] + rng.gen_range(-1.0..1.0)]);
            truth.push(c);
        }
    }
    (pts, truth)
}

#[test]
fn planted_three_blobs_are_recovered() {
    let (pts, truth) = planted_blobs(21);
    let m = euclid(&pts);
    let d = hac_ward(&m, WardMode::Squared).unwrap();
    let s = |k| silhouette(&m, &d.cut(k).unwrap()).unwrap().mean;
    assert!(s(3) > s(2) && s(3) > s(4), "{} {} {}", s(2), s(3), s(4));
    let sug = suggest_k(&d, &m, 2, 10).unwrap();
    assert_eq!(sug.best_silhouette(), 3);
    assert_eq!(sug.by_inertia_gap[0], 3);
    assert_eq!(d.inertia_gaps()[0].0, 3);
    assert!((adjusted_rand_index(&d.cut(3).unwrap().labels, &truth) - 1.0).abs() < 1e-12);
}

#[test]
fn raw_and_squared_agree_on_a_planted_split() {
    let (pts, truth) = planted_blobs(4);
    let m = euclid(&pts);
    for mode in [WardMode::Squared, WardMode::Raw] {
        let cl = hac_ward(&m, mode).unwrap().cut(3).unwrap();
        assert!((adjusted_rand_index(&cl.labels, &truth) - 1.0).abs() < 1e-12);
    }
}
