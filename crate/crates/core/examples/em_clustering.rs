//! Two-type EM on four urns' tallies: which urns share a distribution?

use lsl::estimators::{em_two_type, per_unit_mixture, raw_tally_estimate, EstimatorConfig};
use lsl::prob::{kl_divergence, TallyVector};
use lsl::rng::SplitMix64;
use lsl::simulators::{build_urn_truth, draw_urn_sample, UrnConfig};

fn main() -> lsl::Result<()> {
    let truth = build_urn_truth(&UrnConfig::default(), 11)?;
    let mut rng = SplitMix64::new(12);
    let mut tallies = vec![TallyVector::zeros(truth.colors()); truth.num_urns()];
    let cfg = EstimatorConfig::default();
    println!("true assignment: {:?}", truth.assignment);
    for n in [10, 40, 200, 1000] {
        while tallies.iter().map(|t| t.total()).sum::<u64>() < n {
            let s = draw_urn_sample(&truth, &mut rng);
            tallies[s.urn].add(s.color);
        }
        let em = em_two_type(&tallies, &cfg, 3)?;
        let ours = per_unit_mixture(&em);
        let raw = raw_tally_estimate(&tallies, &cfg);
        println!("\n{n} samples, EM took {} iterations (best of {} starts)", em.iterations, em.restarts_used);
        for u in 0..tallies.len() {
            println!(
                "  urn {}: {:>4} draws  P(type a) {:.3}  KL raw {:.4}  KL ours {:.4}",
                u + 1,
                tallies[u].total(),
                em.responsibilities[u][0],
                kl_divergence(truth.urn_dist(u), &raw[u])?,
                kl_divergence(truth.urn_dist(u), &ours[u])?
            );
        }
    }
    Ok(())
}
