//! Parallel exhaustive search, its serialized result, and the estimate implied
//! by a chosen candidate.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::score::ScoreContext;
use super::space::{type_letter, Candidate, CandidateSpace, Scorer, SearchConfig, SearchMode};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorConfig};
use crate::prob::{self, Categorical, Grouping, TallyVector};
use crate::simulators::BitVector;

/// A scored candidate and its position in the canonical enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub log_score: f64,
    pub rank: u64,
}

/// Heap entry ordered so that "greater" means "better": higher score, then
/// lower rank.
#[derive(Clone, Copy, Debug)]
struct Entry {
    score: f64,
    rank: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.rank.cmp(&self.rank))
    }
}

/// Bounded best-k collector. The heap holds reversed entries so its top is
/// the current worst.
struct TopK {
    k: usize,
    heap: BinaryHeap<std::cmp::Reverse<Entry>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, e: Entry) {
        if self.heap.len() < self.k {
            self.heap.push(std::cmp::Reverse(e));
        } else if let Some(worst) = self.heap.peek() {
            if e > worst.0 {
                self.heap.pop();
                self.heap.push(std::cmp::Reverse(e));
            }
        }
    }

    fn merge(&mut self, other: TopK) {
        for e in other.heap {
            self.offer(e.0);
        }
    }

    fn into_sorted(self) -> Vec<Entry> {
        let mut v: Vec<Entry> = self.heap.into_iter().map(|r| r.0).collect();
        v.sort_by(|a, b| b.cmp(a));
        v
    }
}

/// Progress callback: `(candidates scored so far, total)`, called once per chunk.
pub type Progress<'a> = &'a (dyn Fn(u64, u64) + Sync);

/// Exact top-k over the canonical space, best first.
pub fn search(data: &[BitVector], cfg: &SearchConfig) -> Result<Vec<ScoredCandidate>> {
    search_with_progress(data, cfg, None)
}

pub fn search_with_progress(
    data: &[BitVector],
    cfg: &SearchConfig,
    progress: Option<Progress<'_>>,
) -> Result<Vec<ScoredCandidate>> {
    let ctx = ScoreContext::new(data, cfg)?;
    let space = CandidateSpace::new(cfg)?;
    let total = space.len();
    let chunk = cfg.chunk_size.unwrap_or_else(|| total.div_ceil(64)).max(1);
    let next = AtomicU64::new(0);
    let done = AtomicU64::new(0);
    let merged = Mutex::new(TopK::new(cfg.top_k));
    let workers = cfg.workers.min(total.div_ceil(chunk) as usize).max(1);
    log::debug!("searching {total} candidates with {workers} workers, chunk {chunk}");

    let work = || {
        let mut local = TopK::new(cfg.top_k);
        let mut scratch = ctx.scratch();
        let mut groups = vec![Vec::with_capacity(cfg.group_size); cfg.groups];
        loop {
            let start = next.fetch_add(chunk, AtomicOrdering::Relaxed);
            if start >= total {
                break;
            }
            let end = (start + chunk).min(total);
            for rank in start..end {
                let labels = space.fill_groups(rank, &mut groups);
                let score = ctx.score(&groups, labels, &mut scratch);
                local.offer(Entry { score, rank });
            }
            let so_far = done.fetch_add(end - start, AtomicOrdering::Relaxed) + (end - start);
            if let Some(p) = progress {
                p(so_far, total);
            }
        }
        merged.lock().expect("no worker panicked").merge(local);
    };
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    merged
        .into_inner()
        .expect("no worker panicked")
        .into_sorted()
        .into_iter()
        .map(|e| {
            Ok(ScoredCandidate {
                candidate: space.candidate(e.rank)?,
                log_score: e.score,
                rank: e.rank,
            })
        })
        .collect()
}

/// The per-group estimate implied by `c`, returned as a joint over `2^V`.
///
/// Case 1,2 candidates fit two types starting from the candidate's own
/// assignment (plus the usual restarts); one-type candidates pool every group;
/// case 1 candidates estimate each group from its own tallies.
pub fn estimate_from_candidate(
    data: &[BitVector],
    c: &Candidate,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<Categorical> {
    let g = &c.grouping;
    let tallies = estimators::group_tallies(g, data)?;
    let dists = match &c.assignment {
        None => estimators::raw_tally_estimate(&tallies, cfg),
        Some(a) => {
            if a.len() != g.num_groups() {
                return Err(Error::contract(
                    "assignment length differs from group count",
                ));
            }
            let used = a.iter().copied().max().unwrap_or(0);
            match used {
                0 => {
                    let mut pooled = TallyVector::zeros(tallies[0].len());
                    for t in &tallies {
                        for (o, &n) in t.counts().iter().enumerate() {
                            pooled.add_n(o, n);
                        }
                    }
                    vec![prob::dirichlet_mean(&pooled, cfg.pseudocount); g.num_groups()]
                }
                1 => {
                    let init: Vec<bool> = a.iter().map(|&t| t == 0).collect();
                    let em = estimators::em_two_type_from_assignment(&tallies, cfg, seed, &init)?;
                    estimators::readout(&em, cfg.readout)
                }
                _ => {
                    return Err(Error::contract(
                        "estimation supports at most two types per candidate",
                    ))
                }
            }
        }
    };
    prob::joint_from_grouping(g, &dists)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// [`fnv1a64`] over the dataset's line form (`"0101...\n"` per sample).
pub fn data_digest(data: &[BitVector]) -> u64 {
    let mut bytes = Vec::with_capacity(data.iter().map(|b| b.len() + 1).sum());
    for bv in data {
        bytes.extend_from_slice(bv.to_string().as_bytes());
        bytes.push(b'\n');
    }
    fnv1a64(&bytes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub rank: u64,
    pub log_score: f64,
    /// Groups of 1-based variable indices.
    pub grouping: Vec<Vec<usize>>,
    /// One type letter per group; absent in case 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<String>,
}

/// The parts of a [`SearchConfig`] that determine a search's result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchedSpace {
    pub num_vars: usize,
    pub groups: usize,
    pub group_size: usize,
    pub num_types: usize,
    pub mode: SearchMode,
    pub scorer: Scorer,
    pub top_k: usize,
    pub pseudocount: f64,
}

impl From<&SearchConfig> for SearchedSpace {
    fn from(c: &SearchConfig) -> Self {
        SearchedSpace {
            num_vars: c.num_vars,
            groups: c.groups,
            group_size: c.group_size,
            num_types: c.num_types,
            mode: c.mode,
            scorer: c.scorer,
            top_k: c.top_k,
            pseudocount: c.pseudocount,
        }
    }
}

impl SearchedSpace {
    /// A runnable config for this space (one worker, default chunking).
    pub fn to_config(&self) -> SearchConfig {
        SearchConfig {
            num_vars: self.num_vars,
            groups: self.groups,
            group_size: self.group_size,
            num_types: self.num_types,
            mode: self.mode,
            scorer: self.scorer,
            top_k: self.top_k,
            pseudocount: self.pseudocount,
            ..Default::default()
        }
    }
}

/// Serialized search output. Worker count and chunking are left out, so the
/// file is identical for any degree of parallelism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub config: SearchedSpace,
    /// Hex FNV-1a digest of the searched dataset.
    pub data_digest: String,
    pub top_k: Vec<ResultEntry>,
}

impl SearchResult {
    pub fn new(cfg: &SearchConfig, data: &[BitVector], top: &[ScoredCandidate]) -> Self {
        SearchResult {
            config: cfg.into(),
            data_digest: format!("{:016x}", data_digest(data)),
            top_k: top
                .iter()
                .map(|s| ResultEntry {
                    rank: s.rank,
                    log_score: s.log_score,
                    grouping: s
                        .candidate
                        .grouping
                        .groups()
                        .iter()
                        .map(|g| g.iter().map(|v| v + 1).collect())
                        .collect(),
                    assignment: s
                        .candidate
                        .assignment
                        .as_ref()
                        .map(|a| a.iter().map(|&t| type_letter(t)).collect()),
                })
                .collect(),
        }
    }

    /// Whether this result was computed from `data`.
    pub fn matches(&self, data: &[BitVector]) -> bool {
        self.data_digest == format!("{:016x}", data_digest(data))
    }

    /// The candidates back in 0-based form.
    pub fn candidates(&self) -> Result<Vec<Candidate>> {
        self.top_k
            .iter()
            .map(|e| {
                let groups = e
                    .grouping
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(|&v| {
                                v.checked_sub(1)
                                    .ok_or_else(|| Error::Config("variables are 1-based".into()))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let assignment = match (&e.assignment, self.config.mode) {
                    (_, SearchMode::Case1) => None,
                    (Some(s), SearchMode::Case12) => Some(
                        s.bytes()
                            .map(|b| {
                                b.checked_sub(b'a')
                                    .ok_or_else(|| Error::Config(format!("bad type letter {b}")))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    (None, SearchMode::Case12) => {
                        return Err(Error::Config("case12 entry without assignment".into()))
                    }
                };
                Ok(Candidate {
                    grouping: Grouping::new(groups)?,
                    assignment,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
