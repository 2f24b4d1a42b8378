//! Generate a model, sample a dataset and read both back from disk.

use lsl::rng::SplitMix64;
use lsl::simulators::{
    build_bitvector_truth, draw_bitvector, read_model, write_dataset, write_model, BitVector,
    BitVectorConfig, Dataset, ModelFile,
};

fn main() -> lsl::Result<()> {
    let dir = std::env::temp_dir().join("lsl_simulate_files");
    std::fs::create_dir_all(&dir).expect("create output directory");
    let truth = build_bitvector_truth(&BitVectorConfig::default(), 2024)?;
    let model_path = dir.join("model.json");
    write_model(&model_path, &ModelFile::Bits(truth.clone()))?;

    let mut rng = SplitMix64::new(1);
    let data: Vec<BitVector> = (0..5).map(|_| draw_bitvector(&truth, &mut rng)).collect();
    let data_path = dir.join("data.jsonl");
    write_dataset(&data_path, &data)?;

    let ModelFile::Bits(back) = read_model(&model_path)? else {
        unreachable!("wrote a bit-vector model")
    };
    assert_eq!(back, truth);
    println!("{}", std::fs::read_to_string(&data_path).expect("read dataset"));
    match Dataset::read(&data_path)? {
        Dataset::Bits(b) => println!("read back {} bit vectors, first {}", b.len(), b[0]),
        other => println!("unexpected dataset {other:?}"),
    }
    Ok(())
}
