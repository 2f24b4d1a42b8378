//! Run a small experiment, write its CSV, read it back and plot it.
//!
//! `cargo run --release --example plot_curves -- [out_dir]`

use std::path::PathBuf;

use lsl::experiment::{
    read_curves_csv, run_bitvectors, write_outputs, write_svg, ExperimentKind, ExperimentSpec,
    PlotOptions,
};
use lsl::simulators::BitVectorConfig;

fn main() -> lsl::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("lsl_plot_curves"), PathBuf::from);
    let mut spec = ExperimentSpec::new(ExperimentKind::BitVectors, 600, 10);
    spec.bits = BitVectorConfig {
        groups: 2,
        ..Default::default()
    };
    spec.search_checkpoints = Some(vec![10, 20, 50, 100, 200, 400, 600]);
    let out = run_bitvectors(&spec)?;
    write_outputs(&out, &dir)?;

    let records = read_curves_csv(&dir.join("curves.csv"))?;
    let means: Vec<_> = records.into_iter().filter(|r| r.run.is_none()).map(|r| r.curve).collect();
    let svg = dir.join("replot.svg");
    write_svg(
        &means,
        &PlotOptions {
            log_y: true,
            title: "Two groups of three bits".into(),
            ..Default::default()
        },
        &svg,
    )?;
    println!("curves and plots in {}", dir.display());
    Ok(())
}
