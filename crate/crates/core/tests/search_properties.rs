use std::collections::BTreeSet;
use std::time::Instant;

use proptest::prelude::*;

use lsl::prob::Grouping;
use lsl::rng::SplitMix64;
use lsl::search::{
    orbit_count, score_candidate, search, Candidate, CandidateSpace, Scorer, SearchConfig,
    SearchMode,
};
use lsl::simulators::{build_bitvector_truth, draw_bitvector, BitVector, BitVectorConfig};

const SCORERS: [Scorer; 3] = [
    Scorer::PaperPlugin,
    Scorer::ConsistentPlugin,
    Scorer::DirichletMarginal,
];

fn dataset(groups: usize, n: usize, seed: u64) -> Vec<BitVector> {
    let truth = build_bitvector_truth(
        &BitVectorConfig {
            groups,
            ..Default::default()
        },
        seed,
    )
    .unwrap();
    let mut rng = SplitMix64::new(seed ^ 0xabcd);
    (0..n).map(|_| draw_bitvector(&truth, &mut rng)).collect()
}

fn shuffled(rng: &mut SplitMix64, n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.below(i + 1));
    }
    v
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// A random member of the candidate's orbit: labels swapped, each type's
/// groups reordered by one shared slot permutation, groups shuffled.
fn orbit_image(c: &Candidate, rng: &mut SplitMix64) -> Candidate {
    let g = &c.grouping;
    let labels = c.assignment.clone().unwrap();
    let slot_perms: Vec<Vec<usize>> = (0..2).map(|_| shuffled(rng, g.group_size())).collect();
    let swap = rng.below(2) as u8;
    let order = shuffled(rng, g.num_groups());
    let groups = order
        .iter()
        .map(|&j| slot_perms[labels[j] as usize].iter().map(|&k| g.groups()[j][k]).collect())
        .collect();
    Candidate {
        grouping: Grouping::new(groups).unwrap(),
        assignment: Some(order.iter().map(|&j| labels[j] ^ swap).collect()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_are_orbit_invariant(seed in any::<u64>(), rank in 0u64..172_972_800) {
        let data = dataset(4, 80, seed);
        let mut rng = SplitMix64::new(seed);
        let space = CandidateSpace::new(&SearchConfig::default()).unwrap();
        let c = space.candidate(rank).unwrap();
        let image = orbit_image(&c, &mut rng);
        for scorer in SCORERS {
            let cfg = SearchConfig { scorer, ..Default::default() };
            let a = score_candidate(&data, &c, &cfg).unwrap();
            let b = score_candidate(&data, &image, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{scorer:?}: {a} vs {b}");
        }
    }
}

#[test]
fn search_equals_naive_argmax() {
    let perms = permutations(6);
    for d in 0..20 {
        let data = dataset(2, 5 + 10 * d as usize, 100 + d);
        for scorer in SCORERS {
            let cfg = SearchConfig {
                scorer,
                top_k: 1,
                workers: 4,
                ..SearchConfig::with_shape(2, 3)
            };
            let mut naive = f64::NEG_INFINITY;
            for p in &perms {
                let grouping = Grouping::from_permutation(p, 3).unwrap();
                for a in 0..4u8 {
                    let c = Candidate {
                        grouping: grouping.clone(),
                        assignment: Some(vec![a >> 1, a & 1]),
                    };
                    naive = naive.max(score_candidate(&data, &c, &cfg).unwrap());
                }
            }
            let best = &search(&data, &cfg).unwrap()[0];
            assert!(
                (best.log_score - naive).abs() < 1e-9,
                "dataset {d} {scorer:?}: search {} vs naive {naive}",
                best.log_score
            );
        }
    }
}

#[test]
fn enumeration_matches_canonical_dedup() {
    for (g, s, t, mode) in [
        (2, 3, 2, SearchMode::Case12),
        (3, 2, 2, SearchMode::Case12),
        (3, 2, 3, SearchMode::Case12),
        (2, 2, 1, SearchMode::Case12),
        (2, 3, 2, SearchMode::Case1),
        (3, 2, 2, SearchMode::Case1),
    ] {
        let cfg = SearchConfig {
            num_types: t,
            mode,
            ..SearchConfig::with_shape(g, s)
        };
        let space = CandidateSpace::new(&cfg).unwrap();
        let enumerated: BTreeSet<_> = space
            .enumerate(0, space.len())
            .unwrap()
            .map(|c| (c.grouping.groups().to_vec(), c.assignment))
            .collect();
        assert_eq!(enumerated.len() as u64, orbit_count(&cfg).unwrap());

        let mut brute = BTreeSet::new();
        for p in permutations(g * s) {
            let grouping = Grouping::from_permutation(&p, s).unwrap();
            let assignments: Vec<Option<Vec<u8>>> = match mode {
                SearchMode::Case1 => vec![None],
                SearchMode::Case12 => (0..(t as u32).pow(g as u32))
                    .map(|mut x| {
                        Some(
                            (0..g)
                                .map(|_| {
                                    let l = (x % t as u32) as u8;
                                    x /= t as u32;
                                    l
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            };
            for assignment in assignments {
                let c = Candidate {
                    grouping: grouping.clone(),
                    assignment,
                }
                .canonical(mode);
                brute.insert((c.grouping.groups().to_vec(), c.assignment));
            }
        }
        assert_eq!(brute, enumerated, "G={g} S={s} T={t} {mode:?}");
    }
}

#[test]
fn search_time_barely_grows_with_data() {
    let cfg = SearchConfig {
        workers: 2,
        ..SearchConfig::with_shape(3, 3)
    };
    let time = |n: usize| {
        let data = dataset(3, n, 9);
        // best of three to damp scheduler noise
        (0..3)
            .map(|_| {
                let start = Instant::now();
                search(&data, &cfg).unwrap();
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (small, large) = (time(2000), time(4000));
    assert!(large / small < 3.0, "{small:.3}s vs {large:.3}s");
}
