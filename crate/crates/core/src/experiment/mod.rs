//! KL-vs-samples experiments on the urn and bit-vector domains.

mod cases;
mod curves;
mod plot;
mod run;
mod spec;

pub use cases::{estimate_bits_case, estimate_urns_case};
pub use curves::{
    average_curves, curves_to_csv, parse_curves_csv, read_curves_csv, write_curves_csv,
    CurveRecord, KlCurve, CSV_HEADER,
};
pub use plot::{render_svg, write_svg, PlotOptions};
pub use run::{
    run_bitvectors, run_bitvectors_once, run_experiment, run_four_urns, run_four_urns_once,
    run_seed, search_cost, write_outputs, ExperimentOutput, Manifest, RunOutput, RunSeeds,
    SearchTrace, SearchTracePoint,
};
pub use spec::{
    default_checkpoints, ExperimentKind, ExperimentSpec, BIT_CASES, EXPENSIVE_EVALUATIONS,
    URN_CASES,
};
