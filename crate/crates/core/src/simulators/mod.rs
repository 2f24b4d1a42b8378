//! Ground-truth models for the urn and bit-vector domains, sampling from
//! them, and their file formats.

mod io;
mod truth;

pub use io::{
    read_dataset, read_model, write_dataset, write_model, Dataset, ModelFile, Record,
    MODEL_FORMAT_VERSION,
};
pub use truth::{
    build_bitvector_truth, build_urn_truth, draw_bitvector, draw_urn_sample, true_joint, BitVector,
    BitVectorConfig, BitVectorTruth, TypeLabel, UrnConfig, UrnSample, UrnTruth,
    DEFAULT_URN_WEIGHTS, MAX_SEPARATION_RETRIES,
};
