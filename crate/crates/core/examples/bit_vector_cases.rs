//! The bit-vector estimator ladder at full scale (12 bits, four groups of
//! three, two types), without the search cases.
//!
//! `cargo run --release --example bit_vector_cases -- [runs]`

use lsl::experiment::{run_bitvectors, ExperimentKind, ExperimentSpec};

fn main() -> lsl::Result<()> {
    let runs: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("runs"));
    let mut spec = ExperimentSpec::new(ExperimentKind::BitVectors, 5000, runs);
    spec.cases = ["c0", "c0p", "c13", "c123"].map(String::from).to_vec();
    spec.checkpoints = Some(vec![10, 50, 100, 200, 500, 1000, 2000, 5000]);
    let out = run_bitvectors(&spec)?;

    print!("{:>7}", "samples");
    for c in &spec.cases {
        print!(" {c:>9}");
    }
    println!();
    for &s in &spec.grid() {
        print!("{s:>7}");
        for c in &spec.cases {
            print!(" {:>9.4}", out.average(c).unwrap().at(s).unwrap());
        }
        println!();
    }
    Ok(())
}
