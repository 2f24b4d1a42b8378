//! Raw tallies vs the two-type fit on the four-urns problem.
//!
//! `cargo run --release --example four_urns -- [runs] [out_dir]`

use std::path::PathBuf;

use lsl::experiment::{run_four_urns, write_outputs, ExperimentKind, ExperimentSpec};

fn main() -> lsl::Result<()> {
    let mut args = std::env::args().skip(1);
    let runs: usize = args.next().map_or(200, |s| s.parse().expect("runs"));
    let out_dir = args.next().map(PathBuf::from);

    let mut spec = ExperimentSpec::new(ExperimentKind::FourUrns, 1000, runs);
    spec.cases = vec!["raw".into(), "ours".into(), "ours_hard".into()];
    let out = run_four_urns(&spec)?;

    println!("mean KL over {runs} runs");
    println!("{:>7} {:>10} {:>10} {:>10}", "samples", "raw", "ours", "ours_hard");
    for s in [0, 10, 30, 100, 300, 1000] {
        let at = |c: &str| out.average(c).and_then(|k| k.at(s)).unwrap_or(f64::NAN);
        println!("{s:>7} {:>10.4} {:>10.4} {:>10.4}", at("raw"), at("ours"), at("ours_hard"));
    }
    let last = out.average("raw").unwrap().points.len() - 1;
    for urn in 0..4 {
        let u = |c: &str| out.average(c).unwrap().per_unit.as_ref().unwrap()[urn][last];
        println!("urn {} at 1000: raw {:.4} ours {:.4}", urn + 1, u("raw"), u("ours"));
    }
    let draws = out.runs[0].curves[0].markers.len();
    println!("run 0 drew urn 1 {draws} times in 1000 samples");

    if let Some(dir) = out_dir {
        for f in write_outputs(&out, &dir)? {
            println!("wrote {}", f.display());
        }
    }
    Ok(())
}
