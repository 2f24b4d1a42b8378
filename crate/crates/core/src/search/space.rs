//! The hypothesis space: canonical (grouping, assignment) candidates, their
//! counts, and a bijection between ranks and candidates.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::Grouping;
use crate::simulators::{BitVector, TypeLabel};

/// Which priors the search assumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Independent groups of known size; groups unlabeled.
    Case1,
    /// Independent groups that share a small number of type distributions.
    #[default]
    Case12,
}

/// Candidate scoring rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// Smoothed plug-in with the self-inclusive numerator and the `2^S + G|D|`
    /// denominator for every type.
    #[default]
    PaperPlugin,
    /// Plug-in whose denominator counts only the slots of the same type, so
    /// every type's estimate is normalized.
    ConsistentPlugin,
    /// Exact Dirichlet-multinomial marginal likelihood per type.
    DirichletMarginal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub num_vars: usize,
    pub groups: usize,
    pub group_size: usize,
    pub num_types: usize,
    pub mode: SearchMode,
    pub scorer: Scorer,
    pub workers: usize,
    pub top_k: usize,
    /// Candidates per work claim; `None` claims 1/64 of the space at a time.
    pub chunk_size: Option<u64>,
    pub pseudocount: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            num_vars: 12,
            groups: 4,
            group_size: 3,
            num_types: 2,
            mode: SearchMode::Case12,
            scorer: Scorer::PaperPlugin,
            workers: 1,
            top_k: 10,
            chunk_size: None,
            pseudocount: 1.0,
        }
    }
}

impl SearchConfig {
    /// A config for `groups` groups of `group_size`, everything else default.
    pub fn with_shape(groups: usize, group_size: usize) -> Self {
        SearchConfig {
            num_vars: groups * group_size,
            groups,
            group_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.group_size == 0 {
            return Err(Error::Config(
                "groups and group_size must be positive".into(),
            ));
        }
        if self.num_vars != self.groups * self.group_size {
            return Err(Error::Config(format!(
                "num_vars {} != groups {} x group_size {}",
                self.num_vars, self.groups, self.group_size
            )));
        }
        if self.num_vars > BitVector::MAX_LEN || self.group_size > 16 {
            return Err(Error::Capacity(format!(
                "{} variables in groups of {}",
                self.num_vars, self.group_size
            )));
        }
        if self.num_types == 0 || self.num_types > self.groups {
            return Err(Error::Config(format!(
                "num_types {} must be in 1..={}",
                self.num_types, self.groups
            )));
        }
        if self.workers == 0 || self.top_k == 0 {
            return Err(Error::Config("workers and top_k must be positive".into()));
        }
        if self.chunk_size == Some(0) {
            return Err(Error::Config("chunk_size must be positive".into()));
        }
        if !(self.pseudocount > 0.0) {
            return Err(Error::Config("pseudocount must be positive".into()));
        }
        Ok(())
    }
}

/// One structural hypothesis: an ordered grouping plus, in case-1,2 mode, a
/// type index per group.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub grouping: Grouping,
    pub assignment: Option<Vec<u8>>,
}

/// Letter for type index `t` (`a`, `b`, ...).
pub fn type_letter(t: u8) -> char {
    (b'a' + t) as char
}

impl fmt::Display for Candidate {
    /// 1-based variables, e.g. `(5,1,11)a (2,8,12)b`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (j, g) in self.grouping.groups().iter().enumerate() {
            if j > 0 {
                f.write_str(" ")?;
            }
            let vars: Vec<String> = g.iter().map(|v| (v + 1).to_string()).collect();
            write!(f, "({})", vars.join(","))?;
            if let Some(a) = &self.assignment {
                write!(f, "{}", type_letter(a[j]))?;
            }
        }
        Ok(())
    }
}

impl Candidate {
    /// The candidate describing a known truth.
    pub fn from_truth(grouping: &Grouping, assignment: &[TypeLabel]) -> Self {
        Candidate {
            grouping: grouping.clone(),
            assignment: Some(assignment.iter().map(|l| l.index() as u8).collect()),
        }
    }

    /// The orbit representative enumerated by [`CandidateSpace`].
    pub fn canonical(&self, mode: SearchMode) -> Candidate {
        match mode {
            SearchMode::Case1 => {
                let mut groups = self.grouping.groups().to_vec();
                groups.sort_by_key(|g| *g.iter().min().expect("nonempty group"));
                Candidate {
                    grouping: Grouping::from_groups_unchecked(groups),
                    assignment: None,
                }
            }
            SearchMode::Case12 => {
                let labels = relabel_first_appearance(
                    self.assignment
                        .as_deref()
                        .expect("case12 candidate has an assignment"),
                );
                let groups = self.grouping.groups();
                let s = self.grouping.group_size();
                let mut sigma: Vec<Option<Vec<usize>>> = vec![None; groups.len()];
                let mut out = Vec::with_capacity(groups.len());
                for (j, g) in groups.iter().enumerate() {
                    let c = labels[j] as usize;
                    let perm = sigma[c].get_or_insert_with(|| {
                        let mut idx: Vec<usize> = (0..s).collect();
                        idx.sort_by_key(|&k| g[k]);
                        idx
                    });
                    out.push(perm.iter().map(|&k| g[k]).collect());
                }
                Candidate {
                    grouping: Grouping::from_groups_unchecked(out),
                    assignment: Some(labels),
                }
            }
        }
    }

    /// A key shared by exactly the candidates that imply the same model family:
    /// invariant under type relabeling, per-type slot reordering and group order
    /// (case 1,2), or under group order and within-group order (case 1).
    pub fn model_key(&self, mode: SearchMode) -> Vec<Vec<Vec<usize>>> {
        match mode {
            SearchMode::Case1 => {
                let mut groups: Vec<Vec<usize>> = self
                    .grouping
                    .groups()
                    .iter()
                    .map(|g| {
                        let mut g = g.clone();
                        g.sort_unstable();
                        g
                    })
                    .collect();
                groups.sort();
                vec![groups]
            }
            SearchMode::Case12 => {
                let assignment = self.assignment.as_deref().expect("case12 candidate");
                let s = self.grouping.group_size();
                let perms = all_permutations(s);
                let max_label = assignment.iter().copied().max().unwrap_or(0);
                let mut classes: Vec<Vec<Vec<usize>>> = (0..=max_label)
                    .filter_map(|c| {
                        let members: Vec<&Vec<usize>> = self
                            .grouping
                            .groups()
                            .iter()
                            .zip(assignment)
                            .filter(|(_, &a)| a == c)
                            .map(|(g, _)| g)
                            .collect();
                        if members.is_empty() {
                            return None;
                        }
                        perms
                            .iter()
                            .map(|p| {
                                let mut v: Vec<Vec<usize>> = members
                                    .iter()
                                    .map(|g| p.iter().map(|&k| g[k]).collect())
                                    .collect();
                                v.sort();
                                v
                            })
                            .min()
                    })
                    .collect();
                classes.sort();
                classes
            }
        }
    }
}

fn relabel_first_appearance(assignment: &[u8]) -> Vec<u8> {
    let mut map: Vec<Option<u8>> = vec![None; 256];
    let mut next = 0u8;
    assignment
        .iter()
        .map(|&a| {
            *map[a as usize].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let total = factorial(n) as usize;
    (0..total as u128)
        .map(|r| unrank_permutation(r, &(0..n).collect::<Vec<_>>()))
        .collect()
}

pub(crate) fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k as u128).fold(1, |acc, i| acc * (n as u128 - i) / (i + 1))
}

/// `n (n-1) ... (n-k+1)`.
fn falling(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    ((n - k + 1) as u128..=n as u128).product()
}

fn to_u64(x: Option<u128>, what: &str) -> Result<u64> {
    x.and_then(|x| u64::try_from(x).ok())
        .ok_or_else(|| Error::Capacity(format!("{what} exceeds 64 bits")))
}

/// Hypothesis count `T^G · V! / (T! · (S!)^T)` (case 1,2) or `V!/G!` (case 1).
///
/// In case 1,2 this is the raw (permutation, assignment) count divided by the
/// order of the symmetry group. It equals the number of distinct orbits only
/// when that group acts freely; see [`orbit_count`] for the exact figure.
pub fn candidate_count(cfg: &SearchConfig) -> Result<u64> {
    cfg.validate()?;
    let v = factorial(cfg.num_vars);
    match cfg.mode {
        SearchMode::Case1 => to_u64(Some(v / factorial(cfg.groups)), "candidate count"),
        SearchMode::Case12 => {
            let t = cfg.num_types as u128;
            let raw = t
                .checked_pow(cfg.groups as u32)
                .and_then(|tg| tg.checked_mul(v));
            let sym = Some(factorial(cfg.num_types)).and_then(|f| {
                f.checked_mul(factorial(cfg.group_size).checked_pow(cfg.num_types as u32)?)
            });
            to_u64(raw.zip(sym).map(|(r, s)| r / s), "candidate count")
        }
    }
}

/// Number of canonical candidates, one per symmetry orbit.
pub fn orbit_count(cfg: &SearchConfig) -> Result<u64> {
    cfg.validate()?;
    match cfg.mode {
        SearchMode::Case1 => candidate_count(cfg),
        SearchMode::Case12 => {
            let v = factorial(cfg.num_vars);
            let sf = factorial(cfg.group_size);
            let mut total: Option<u128> = Some(0);
            for c in 1..=cfg.num_types.min(cfg.groups) {
                let per = sf.checked_pow(c as u32).map(|d| v / d);
                let term = per.and_then(|p| p.checked_mul(stirling2(cfg.groups, c)));
                total = total.zip(term).and_then(|(a, b)| a.checked_add(b));
            }
            to_u64(total, "orbit count")
        }
    }
}

fn stirling2(n: usize, k: usize) -> u128 {
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = j as u128 * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    row[k]
}

/// Restricted-growth strings of length `g` using at most `t` labels, in
/// lexicographic order.
fn restricted_growth_strings(g: usize, t: usize) -> Vec<Vec<u8>> {
    fn extend(prefix: &mut Vec<u8>, max: u8, g: usize, t: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == g {
            out.push(prefix.clone());
            return;
        }
        let limit = (max as usize + 1).min(t - 1) as u8;
        for label in 0..=limit {
            prefix.push(label);
            extend(prefix, max.max(label), g, t, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    let mut prefix = vec![0u8];
    extend(&mut prefix, 0, g, t, &mut out);
    out
}

/// Lexicographic permutation of `items` with index `rank` in `[0, n!)`.
fn unrank_permutation(mut rank: u128, items: &[usize]) -> Vec<usize> {
    let mut pool = items.to_vec();
    let mut out = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let f = factorial(pool.len() - 1);
        let d = (rank / f) as usize;
        rank %= f;
        out.push(pool.remove(d));
    }
    out
}

fn rank_permutation(perm: &[usize], items: &[usize]) -> u128 {
    let mut pool = items.to_vec();
    let mut rank = 0u128;
    for &x in perm {
        let d = pool.iter().position(|&p| p == x).expect("item in pool");
        rank += d as u128 * factorial(pool.len() - 1);
        pool.remove(d);
    }
    rank
}

/// Lexicographic `k`-combination (positions into `pool`) with index `rank`.
fn unrank_combination(mut rank: u128, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for p in 0..k {
        let mut i = next;
        loop {
            let c = binomial(n - i - 1, k - p - 1);
            if rank < c {
                break;
            }
            rank -= c;
            i += 1;
        }
        out.push(i);
        next = i + 1;
    }
    out
}

fn rank_combination(positions: &[usize], n: usize) -> u128 {
    let k = positions.len();
    let mut rank = 0u128;
    let mut next = 0;
    for (p, &pos) in positions.iter().enumerate() {
        for i in next..pos {
            rank += binomial(n - i - 1, k - p - 1);
        }
        next = pos + 1;
    }
    rank
}

/// Ordered selection of `k` of `pool.len()` items with index `rank`.
fn unrank_arrangement(mut rank: u128, pool: &mut Vec<usize>, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    for p in 0..k {
        let f = falling(pool.len() - 1, k - p - 1);
        let d = (rank / f) as usize;
        rank %= f;
        out.push(pool.remove(d));
    }
    out
}

struct AssignmentBlock {
    labels: Vec<u8>,
    /// First group of each class, in group order.
    constrained: Vec<usize>,
    start: u128,
    len: u128,
}

/// Rank ↔ candidate bijection over the canonical candidates of one config.
pub struct CandidateSpace {
    mode: SearchMode,
    num_vars: usize,
    groups: usize,
    group_size: usize,
    blocks: Vec<AssignmentBlock>,
    total: u64,
}

/// Limit on distinct assignment patterns kept in memory.
const MAX_ASSIGNMENT_BLOCKS: u128 = 1 << 20;

impl CandidateSpace {
    pub fn new(cfg: &SearchConfig) -> Result<Self> {
        let total = orbit_count(cfg)?;
        let mut blocks = Vec::new();
        if cfg.mode == SearchMode::Case12 {
            let patterns: u128 = (1..=cfg.num_types.min(cfg.groups))
                .map(|c| stirling2(cfg.groups, c))
                .sum();
            if patterns > MAX_ASSIGNMENT_BLOCKS {
                return Err(Error::Capacity(format!("{patterns} assignment patterns")));
            }
            let vf = factorial(cfg.num_vars);
            let sf = factorial(cfg.group_size);
            let mut start = 0u128;
            for labels in restricted_growth_strings(cfg.groups, cfg.num_types) {
                let mut constrained = Vec::new();
                let mut seen = 0u8;
                for (j, &l) in labels.iter().enumerate() {
                    if l == seen {
                        constrained.push(j);
                        seen += 1;
                    }
                }
                let len = vf / sf.pow(constrained.len() as u32);
                blocks.push(AssignmentBlock {
                    labels,
                    constrained,
                    start,
                    len,
                });
                start += len;
            }
            debug_assert_eq!(start, total as u128);
        }
        Ok(CandidateSpace {
            mode: cfg.mode,
            num_vars: cfg.num_vars,
            groups: cfg.groups,
            group_size: cfg.group_size,
            blocks,
            total,
        })
    }

    /// Number of canonical candidates.
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn mode(&self) -> SearchMode {
        self.mode
    }

    pub fn candidate(&self, rank: u64) -> Result<Candidate> {
        if rank >= self.total {
            return Err(Error::contract(format!(
                "rank {rank} outside [0, {})",
                self.total
            )));
        }
        let mut groups = vec![Vec::new(); self.groups];
        let assignment = self.fill_groups(rank, &mut groups).map(<[u8]>::to_vec);
        Ok(Candidate {
            grouping: Grouping::from_groups_unchecked(groups),
            assignment,
        })
    }

    /// Writes the groups of candidate `rank` into `groups` (reusing storage)
    /// and returns its labels.
    pub(crate) fn fill_groups(&self, rank: u64, groups: &mut [Vec<usize>]) -> Option<&[u8]> {
        match self.mode {
            SearchMode::Case1 => {
                self.fill_case1(rank as u128, groups);
                None
            }
            SearchMode::Case12 => {
                let b = self.block_of(rank as u128);
                self.fill_case12(b, rank as u128 - b.start, groups);
                Some(&b.labels)
            }
        }
    }

    fn block_of(&self, rank: u128) -> &AssignmentBlock {
        let i = self.blocks.partition_point(|b| b.start + b.len <= rank);
        &self.blocks[i]
    }

    fn fill_case12(&self, block: &AssignmentBlock, local: u128, groups: &mut [Vec<usize>]) {
        let s = self.group_size;
        let mut pool: Vec<usize> = (0..self.num_vars).collect();
        // radices: one combination per constrained group, then the free Lehmer code
        let free = self.num_vars - s * block.constrained.len();
        let mut radices: Vec<u128> = Vec::with_capacity(block.constrained.len());
        let mut n = self.num_vars;
        for _ in &block.constrained {
            radices.push(binomial(n, s));
            n -= s;
        }
        let free_count = factorial(free);
        let mut digits = vec![0u128; radices.len()];
        let mut rest = local / free_count;
        let lehmer = local % free_count;
        for i in (0..radices.len()).rev() {
            digits[i] = rest % radices[i];
            rest /= radices[i];
        }
        for g in groups.iter_mut() {
            g.clear();
        }
        for (&j, &d) in block.constrained.iter().zip(&digits) {
            let picks = unrank_combination(d, pool.len(), s);
            for (removed, &p) in picks.iter().enumerate() {
                groups[j].push(pool.remove(p - removed));
            }
        }
        let arranged = unrank_permutation(lehmer, &pool);
        let mut it = arranged.into_iter();
        for (j, g) in groups.iter_mut().enumerate() {
            if !block.constrained.contains(&j) {
                g.extend(it.by_ref().take(s));
            }
        }
    }

    fn fill_case1(&self, rank: u128, groups: &mut [Vec<usize>]) {
        let s = self.group_size;
        let mut radices = Vec::with_capacity(2 * self.groups);
        let mut n = self.num_vars;
        for _ in 0..self.groups {
            radices.push(s as u128);
            radices.push(falling(n - 1, s - 1));
            n -= s;
        }
        let mut digits = vec![0u128; radices.len()];
        let mut rest = rank;
        for i in (0..radices.len()).rev() {
            digits[i] = rest % radices[i];
            rest /= radices[i];
        }
        let mut pool: Vec<usize> = (0..self.num_vars).collect();
        for (j, g) in groups.iter_mut().enumerate() {
            g.clear();
            let min = pool.remove(0);
            let pos = digits[2 * j] as usize;
            let mut others = unrank_arrangement(digits[2 * j + 1], &mut pool, s - 1);
            others.insert(pos, min);
            *g = others;
        }
    }

    /// Rank of a candidate; it is canonicalized first.
    pub fn rank_of(&self, c: &Candidate) -> Result<u64> {
        let g = &c.grouping;
        if g.num_vars() != self.num_vars || g.group_size() != self.group_size {
            return Err(Error::contract(
                "candidate shape differs from the search space",
            ));
        }
        let c = c.canonical(self.mode);
        let groups = c.grouping.groups();
        let s = self.group_size;
        match self.mode {
            SearchMode::Case1 => {
                let mut pool: Vec<usize> = (0..self.num_vars).collect();
                let mut rank = 0u128;
                for grp in groups {
                    let min = pool.remove(0);
                    let pos = grp.iter().position(|&v| v == min).expect("canonical");
                    let others: Vec<usize> = grp.iter().copied().filter(|&v| v != min).collect();
                    let mut arr = 0u128;
                    for (p, &x) in others.iter().enumerate() {
                        let d = pool.iter().position(|&q| q == x).expect("in pool");
                        arr += d as u128 * falling(pool.len() - 1, s - 2 - p);
                        pool.remove(d);
                    }
                    rank =
                        (rank * s as u128 + pos as u128) * falling(pool.len() + s - 1, s - 1) + arr;
                }
                Ok(rank as u64)
            }
            SearchMode::Case12 => {
                let labels = c.assignment.as_ref().expect("case12");
                let block = self
                    .blocks
                    .iter()
                    .find(|b| &b.labels == labels)
                    .ok_or_else(|| Error::contract("assignment uses too many types"))?;
                let mut pool: Vec<usize> = (0..self.num_vars).collect();
                let mut mixed = 0u128;
                for &j in &block.constrained {
                    let positions: Vec<usize> = groups[j]
                        .iter()
                        .map(|v| pool.iter().position(|p| p == v).expect("in pool"))
                        .collect();
                    mixed =
                        mixed * binomial(pool.len(), s) + rank_combination(&positions, pool.len());
                    pool.retain(|v| !groups[j].contains(v));
                }
                let free: Vec<usize> = groups
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !block.constrained.contains(j))
                    .flat_map(|(_, g)| g.iter().copied())
                    .collect();
                let local = mixed * factorial(pool.len()) + rank_permutation(&free, &pool);
                Ok((block.start + local) as u64)
            }
        }
    }

    /// Candidates with ranks in `[start, end)`, in rank order.
    pub fn enumerate(&self, start: u64, end: u64) -> Result<impl Iterator<Item = Candidate> + '_> {
        if start > end || end > self.total {
            return Err(Error::contract(format!(
                "range [{start}, {end}) outside [0, {}]",
                self.total
            )));
        }
        Ok((start..end).map(move |r| self.candidate(r).expect("rank in range")))
    }
}

/// Canonical candidates with ranks in `[start, end)`.
pub fn enumerate_candidates(cfg: &SearchConfig, start: u64, end: u64) -> Result<Vec<Candidate>> {
    let space = CandidateSpace::new(cfg)?;
    let out = space.enumerate(start, end)?.collect();
    Ok(out)
}
