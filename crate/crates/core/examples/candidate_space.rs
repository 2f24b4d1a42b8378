//! Sizes of the hypothesis space and the rank <-> candidate bijection.

use lsl::search::{candidate_count, orbit_count, CandidateSpace, SearchConfig, SearchMode};

fn main() -> lsl::Result<()> {
    for (g, s) in [(2, 3), (3, 2), (3, 3), (4, 3)] {
        for mode in [SearchMode::Case1, SearchMode::Case12] {
            let cfg = SearchConfig {
                mode,
                ..SearchConfig::with_shape(g, s)
            };
            println!(
                "V={:>2} G={g} S={s} {mode:?}: formula {:>12}, distinct candidates {:>12}",
                cfg.num_vars,
                candidate_count(&cfg)?,
                orbit_count(&cfg)?
            );
        }
    }

    let cfg = SearchConfig::default();
    let space = CandidateSpace::new(&cfg)?;
    println!("\nfull space, every 20 millionth candidate:");
    for rank in (0..space.len()).step_by(20_000_000) {
        let c = space.candidate(rank)?;
        assert_eq!(space.rank_of(&c)?, rank);
        println!("{rank:>10}  {c}");
    }

    let small = CandidateSpace::new(&SearchConfig::with_shape(2, 3))?;
    println!("\nthe {} candidates for two groups of three begin:", small.len());
    for c in small.enumerate(0, 6)? {
        println!("  {c}");
    }
    Ok(())
}
