//! Experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::search::SearchConfig;
use crate::simulators::{BitVectorConfig, UrnConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FourUrns,
    BitVectors,
}

/// Four-urns estimators.
pub const URN_CASES: [&str; 3] = ["raw", "ours", "ours_hard"];
/// Bit-vector estimators, from weakest to strongest prior.
pub const BIT_CASES: [&str; 6] = ["c0", "c0p", "c13", "c123", "c1", "c12"];

/// Candidate evaluations above which search cases need `allow_expensive`.
pub const EXPENSIVE_EVALUATIONS: u128 = 1_000_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Defaults to `raw, ours` or all bit-vector cases.
    #[serde(default)]
    pub cases: Vec<String>,
    pub n_samples: u64,
    #[serde(default = "one")]
    pub n_runs: usize,
    /// Sample counts at which every case is evaluated; `0` is always added.
    #[serde(default)]
    pub checkpoints: Option<Vec<u64>>,
    /// Checkpoints at which search cases re-run the search; defaults to all.
    #[serde(default)]
    pub search_checkpoints: Option<Vec<u64>>,
    #[serde(default)]
    pub base_seed: u64,
    /// Draw a fresh truth for every run instead of one shared truth.
    #[serde(default = "yes")]
    pub resample_truth: bool,
    #[serde(default)]
    pub urns: UrnConfig,
    #[serde(default)]
    pub bits: BitVectorConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Scorer, workers and top-k for search cases; the shape is taken from
    /// the truth config.
    #[serde(default)]
    pub search: SearchConfig,
    /// Runs evaluated concurrently.
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub allow_expensive: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// Every sample to 100, every 10 to 1,000, every 100 beyond, capped at `n`.
pub fn default_checkpoints(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = 1;
    while s <= n {
        out.push(s);
        s += match s {
            ..=99 => 1,
            100..=999 => 10,
            _ => 100,
        };
    }
    if out.last().is_some_and(|&l| l != n) {
        out.push(n);
    }
    out
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, n_samples: u64, n_runs: usize) -> Self {
        ExperimentSpec {
            kind,
            cases: Vec::new(),
            n_samples,
            n_runs,
            checkpoints: None,
            search_checkpoints: None,
            base_seed: 0,
            resample_truth: true,
            urns: UrnConfig::default(),
            bits: BitVectorConfig::default(),
            estimator: EstimatorConfig::default(),
            search: SearchConfig::default(),
            workers: 1,
            allow_expensive: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Requested cases, or the defaults for the kind.
    pub fn case_list(&self) -> Vec<String> {
        if !self.cases.is_empty() {
            return self.cases.clone();
        }
        match self.kind {
            ExperimentKind::FourUrns => vec!["raw".into(), "ours".into()],
            ExperimentKind::BitVectors => BIT_CASES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The evaluation grid, starting at 0.
    pub fn grid(&self) -> Vec<u64> {
        let mut g = vec![0];
        g.extend(
            self.checkpoints
                .clone()
                .unwrap_or_else(|| default_checkpoints(self.n_samples)),
        );
        g
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        let known: &[&str] = match self.kind {
            ExperimentKind::FourUrns => &URN_CASES,
            ExperimentKind::BitVectors => &BIT_CASES,
        };
        for c in self.case_list() {
            if !known.contains(&c.as_str()) {
                return Err(Error::Config(format!(
                    "cases: unknown case '{c}' (expected one of {})",
                    known.join(", ")
                )));
            }
        }
        let check_grid = |name: &str, g: &[u64]| -> Result<()> {
            if g.iter().any(|&c| c == 0 || c > self.n_samples) {
                return Err(Error::Config(format!(
                    "{name}: values must lie in [1, {}]",
                    self.n_samples
                )));
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "{name}: must be strictly increasing"
                )));
            }
            Ok(())
        };
        if let Some(g) = &self.checkpoints {
            check_grid("checkpoints", g)?;
        }
        if let Some(sg) = &self.search_checkpoints {
            check_grid("search_checkpoints", sg)?;
            let grid = self.grid();
            if let Some(c) = sg.iter().find(|c| grid.binary_search(c).is_err()) {
                return Err(Error::Config(format!(
                    "search_checkpoints: {c} is not an evaluation checkpoint"
                )));
            }
        }
        Ok(())
    }
}
