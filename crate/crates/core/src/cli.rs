//! The `lsl` command line: a thin shell over the library.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::experiment::{
    self, estimate_bits_case, estimate_urns_case, read_curves_csv, write_outputs, write_svg,
    ExperimentSpec, PlotOptions,
};
use crate::prob::{kl_divergence, Categorical};
use crate::rng::SplitMix64;
use crate::search::{self, Scorer, SearchConfig, SearchMode, SearchResult};
use crate::simulators::{
    build_bitvector_truth, build_urn_truth, draw_bitvector, draw_urn_sample, read_model,
    true_joint, write_dataset, write_model, BitVector, BitVectorConfig, Dataset, ModelFile,
    UrnConfig, UrnSample,
};

#[derive(Debug, Parser)]
#[command(
    name = "lsl",
    version,
    about = "Sample-complexity laboratory for structured density estimation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Urns,
    Bits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Case1,
    Case12,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Paper,
    Consistent,
    Marginal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a ground-truth model and write it as JSON.
    GenModel {
        #[arg(long, value_enum)]
        kind: ModelKind,
        /// Truth configuration (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a model file into a JSON-lines dataset.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate from a dataset with one case's estimator.
    Estimate {
        /// raw, ours, ours_hard (urns) or c0, c0p, c13, c123, c1, c12 (bits).
        #[arg(long)]
        case: String,
        #[arg(long)]
        data: PathBuf,
        /// Truth model: supplies the grouping and enables the KL report.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Estimator configuration (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ScorerArg::Paper)]
        scorer: ScorerArg,
        #[arg(long, env = "LSL_WORKERS", default_value_t = 1)]
        workers: usize,
        /// Group size for the search cases.
        #[arg(long, default_value_t = 3)]
        s: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive structure search over a bit-vector dataset.
    Search {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        v: usize,
        #[arg(long)]
        g: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 2)]
        types: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Case12)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = ScorerArg::Paper)]
        scorer: ScorerArg,
        #[arg(long, env = "LSL_WORKERS", default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment spec; writes curves, plots and a manifest.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        allow_expensive: bool,
        /// Overrides the spec's run and search worker counts.
        #[arg(long, env = "LSL_WORKERS")]
        workers: Option<usize>,
    },
    /// Render curves from a CSV as an SVG line plot.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_y: bool,
        /// Plot per-urn sub-curves where present.
        #[arg(long)]
        per_unit: bool,
        /// Which run to plot; averages when omitted.
        #[arg(long)]
        run: Option<usize>,
        #[arg(long)]
        title: Option<String>,
    },
}

/// Exit code for an error: 2 for bad input, 1 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn scorer(s: ScorerArg) -> Scorer {
    match s {
        ScorerArg::Paper => Scorer::PaperPlugin,
        ScorerArg::Consistent => Scorer::ConsistentPlugin,
        ScorerArg::Marginal => Scorer::DirichletMarginal,
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    case: String,
    samples: usize,
    /// One distribution per urn, or the single joint over all bit patterns.
    estimates: Vec<Categorical>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidate: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl_per_urn: Option<Vec<f64>>,
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenModel {
            kind,
            config,
            seed,
            out,
        } => {
            let model = match kind {
                ModelKind::Urns => {
                    let cfg: UrnConfig = config
                        .as_deref()
                        .map(read_json)
                        .transpose()?
                        .unwrap_or_default();
                    ModelFile::Urns(build_urn_truth(&cfg, seed)?)
                }
                ModelKind::Bits => {
                    let cfg: BitVectorConfig = config
                        .as_deref()
                        .map(read_json)
                        .transpose()?
                        .unwrap_or_default();
                    ModelFile::Bits(build_bitvector_truth(&cfg, seed)?)
                }
            };
            write_model(&out, &model)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Sample {
            model,
            n,
            seed,
            out,
        } => {
            let mut rng = SplitMix64::new(seed);
            match read_model(&model)? {
                ModelFile::Urns(t) => {
                    let s: Vec<UrnSample> = (0..n).map(|_| draw_urn_sample(&t, &mut rng)).collect();
                    write_dataset(&out, &s)?;
                }
                ModelFile::Bits(t) => {
                    let s: Vec<BitVector> = (0..n).map(|_| draw_bitvector(&t, &mut rng)).collect();
                    write_dataset(&out, &s)?;
                }
            }
            eprintln!("wrote {n} samples to {}", out.display());
        }
        Command::Estimate {
            case,
            data,
            model,
            config,
            seed,
            scorer: sc,
            workers,
            s,
            out,
        } => {
            let cfg: EstimatorConfig = config
                .as_deref()
                .map(read_json)
                .transpose()?
                .unwrap_or_default();
            let model = model.as_deref().map(read_model).transpose()?;
            let dataset = Dataset::read(&data)?;
            let output = match (dataset, &model) {
                (Dataset::Bits(_), Some(ModelFile::Urns(_)))
                | (Dataset::Urns(_), Some(ModelFile::Bits(_))) => {
                    return Err(Error::Config(
                        "model: kind differs from the dataset's".into(),
                    ))
                }
                (Dataset::Urns(samples), m) => {
                    let truth = match m {
                        Some(ModelFile::Urns(t)) => Some(t),
                        _ => None,
                    };
                    let (urns, colors) = truth.map_or((4, 8), |t| (t.num_urns(), t.colors()));
                    let est = estimate_urns_case(&case, &samples, urns, colors, &cfg, seed)?;
                    let kl_per_urn = truth
                        .map(|t| {
                            est.iter()
                                .enumerate()
                                .map(|(u, q)| kl_divergence(t.urn_dist(u), q))
                                .collect::<Result<Vec<f64>>>()
                        })
                        .transpose()?;
                    EstimateOutput {
                        case,
                        samples: samples.len(),
                        estimates: est,
                        candidate: None,
                        kl: kl_per_urn.as_ref().map(|v| v.iter().sum()),
                        kl_per_urn,
                    }
                }
                (Dataset::Bits(samples), m) => {
                    let truth = match m {
                        Some(ModelFile::Bits(t)) => Some(t),
                        _ => None,
                    };
                    let v = samples[0].len();
                    let group_size = truth.map_or(s, |t| t.hidden_grouping.group_size());
                    if group_size == 0 || v % group_size != 0 {
                        return Err(Error::Config(format!(
                            "s: {group_size} does not divide {v} bits"
                        )));
                    }
                    let scfg = SearchConfig {
                        num_vars: v,
                        groups: v / group_size,
                        group_size,
                        num_types: 2.min(v / group_size),
                        scorer: scorer(sc),
                        workers,
                        ..Default::default()
                    };
                    let (joint, best) = estimate_bits_case(
                        &case,
                        &samples,
                        v,
                        truth.map(|t| &t.hidden_grouping),
                        &cfg,
                        &scfg,
                        seed,
                    )?;
                    let kl = truth
                        .map(|t| kl_divergence(&true_joint(t)?, &joint))
                        .transpose()?;
                    EstimateOutput {
                        case,
                        samples: samples.len(),
                        estimates: vec![joint],
                        candidate: best.map(|b| b.candidate.to_string()),
                        kl,
                        kl_per_urn: None,
                    }
                }
                (Dataset::Empty, _) => {
                    return Err(Error::Config("data: the dataset is empty".into()))
                }
            };
            if let Some(kl) = output.kl {
                eprintln!("kl = {kl}");
            }
            if let Some(c) = &output.candidate {
                eprintln!("best candidate: {c}");
            }
            emit(
                &(serde_json::to_string_pretty(&output)? + "\n"),
                out.as_deref(),
            )?;
        }
        Command::Search {
            data,
            v,
            g,
            s,
            types,
            mode,
            scorer: sc,
            workers,
            top_k,
            out,
        } => {
            let cfg = SearchConfig {
                num_vars: v,
                groups: g,
                group_size: s,
                num_types: types,
                mode: match mode {
                    ModeArg::Case1 => SearchMode::Case1,
                    ModeArg::Case12 => SearchMode::Case12,
                },
                scorer: scorer(sc),
                workers,
                top_k,
                ..Default::default()
            };
            cfg.validate()?;
            let samples: Vec<BitVector> = match Dataset::read(&data)? {
                Dataset::Bits(b) => b,
                Dataset::Empty => return Err(Error::Config("data: the dataset is empty".into())),
                Dataset::Urns(_) => {
                    return Err(Error::Config(
                        "data: search needs a bit-vector dataset".into(),
                    ))
                }
            };
            if let Some(i) = samples.iter().position(|b| b.len() != v) {
                return Err(Error::Config(format!(
                    "data: sample {} has {} bits, --v is {v}",
                    i + 1,
                    samples[i].len()
                )));
            }
            let total = search::orbit_count(&cfg)?;
            eprintln!("scoring {total} candidates with {workers} worker(s)");
            let top = search::search(&samples, &cfg)?;
            if let Some(best) = top.first() {
                eprintln!("best: {} (log score {})", best.candidate, best.log_score);
            }
            emit(
                &SearchResult::new(&cfg, &samples, &top).to_json()?,
                out.as_deref(),
            )?;
        }
        Command::Experiment {
            spec,
            out_dir,
            allow_expensive,
            workers,
        } => {
            let mut spec: ExperimentSpec = read_json(&spec)?;
            spec.allow_expensive |= allow_expensive;
            if let Some(w) = workers {
                spec.workers = w;
                spec.search.workers = w;
            }
            let out = experiment::run_experiment(&spec)?;
            let files = write_outputs(&out, &out_dir)?;
            eprintln!(
                "{} run(s) in {:.2}s; wrote {}",
                out.runs.len(),
                out.wall_secs,
                files
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        Command::Plot {
            csv,
            out,
            log_y,
            per_unit,
            run,
            title,
        } => {
            let records = read_curves_csv(&csv)?;
            let curves: Vec<_> = records
                .into_iter()
                .filter(|r| r.run == run)
                .map(|r| r.curve)
                .collect();
            let mut opts = PlotOptions {
                log_y,
                per_unit,
                ..Default::default()
            };
            if let Some(t) = title {
                opts.title = t;
            }
            write_svg(&curves, &opts, &out)?;
            eprintln!("wrote {} curve(s) to {}", curves.len(), out.display());
        }
    }
    Ok(())
}
