//! Recover a hidden grouping by exhaustive search.
//!
//! `cargo run --release --example structure_search -- [groups] [samples] [scorer]`
//! with scorer one of `paper`, `consistent`, `marginal`. Two groups search
//! 140 candidates; four groups search the full 172,972,800 (about 90
//! seconds on one core).

use std::time::Instant;

use lsl::estimators::EstimatorConfig;
use lsl::prob::kl_divergence;
use lsl::rng::SplitMix64;
use lsl::search::{
    estimate_from_candidate, orbit_count, search_with_progress, Candidate, Scorer, SearchConfig,
    SearchMode,
};
use lsl::simulators::{build_bitvector_truth, draw_bitvector, true_joint, BitVectorConfig};

fn main() -> lsl::Result<()> {
    let mut args = std::env::args().skip(1);
    let groups: usize = args.next().map_or(2, |s| s.parse().expect("groups"));
    let n: usize = args.next().map_or(500, |s| s.parse().expect("samples"));
    let scorer = match args.next().as_deref() {
        None | Some("marginal") => Scorer::DirichletMarginal,
        Some("paper") => Scorer::PaperPlugin,
        Some("consistent") => Scorer::ConsistentPlugin,
        Some(other) => panic!("unknown scorer {other}"),
    };

    let truth = build_bitvector_truth(
        &BitVectorConfig {
            groups,
            ..Default::default()
        },
        7,
    )?;
    let mut rng = SplitMix64::new(8);
    let data: Vec<_> = (0..n).map(|_| draw_bitvector(&truth, &mut rng)).collect();
    let truth_c = Candidate::from_truth(&truth.hidden_grouping, &truth.assignment);
    println!("hidden structure: {truth_c}");

    for mode in [SearchMode::Case1, SearchMode::Case12] {
        let cfg = SearchConfig {
            mode,
            scorer,
            top_k: 5,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            ..SearchConfig::with_shape(groups, 3)
        };
        let total = orbit_count(&cfg)?;
        let start = Instant::now();
        let report = |done: u64, total: u64| {
            if done == total || done % (total / 8).max(1) < cfg.chunk_size.unwrap_or(total / 64 + 1) {
                eprintln!("  {done}/{total}");
            }
        };
        let top = search_with_progress(&data, &cfg, Some(&report))?;
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{mode:?}: {total} candidates in {secs:.2}s ({:.0}/s)",
            total as f64 / secs
        );
        for s in &top {
            let hit = s.candidate.model_key(mode) == truth_c.model_key(mode);
            println!("  {:>14.4}  {}{}", s.log_score, s.candidate, if hit { "  <- truth" } else { "" });
        }
        let est = estimate_from_candidate(&data, &top[0].candidate, &EstimatorConfig::default(), 1)?;
        println!("  KL of the best candidate's estimate: {:.5}", kl_divergence(&true_joint(&truth)?, &est)?);
    }
    Ok(())
}
