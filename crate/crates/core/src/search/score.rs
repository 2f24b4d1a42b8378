//! Candidate scores from pooled outcome tallies.
//!
//! Every scorer has the form `Σ_class [Σ_o cell(n_o) - norm(k)]`, where a class
//! is a type (case 1,2) or a single group (case 1), `n_o` are the class's
//! pooled outcome counts and `k` is the number of groups in the class. The
//! plug-in scorers use `cell(n) = n ln(α + n)`; the marginal scorer uses
//! `ln Γ(n + α) - ln Γ(α)`. Both are tabulated once per dataset.

use statrs::function::gamma::ln_gamma;

use super::space::{Candidate, Scorer, SearchConfig, SearchMode};
use crate::error::{Error, Result};
use crate::prob::{project, Grouping};
use crate::simulators::BitVector;

/// Upper bound on cached tally cells (`V^S · 2^S`).
const MAX_CACHE_CELLS: usize = 1 << 24;

/// Outcome tallies for every ordered tuple of distinct variables.
struct TupleCache {
    stride: usize,
    cells: Vec<u32>,
}

impl TupleCache {
    fn build(codes: &[u32], num_vars: usize, group_size: usize) -> Option<Self> {
        let k = 1usize << group_size;
        let tuples = num_vars.checked_pow(group_size as u32)?;
        if tuples.checked_mul(k)? > MAX_CACHE_CELLS {
            return None;
        }
        let mut cells = vec![0u32; tuples * k];
        let mut tuple = Vec::with_capacity(group_size);
        fill(&mut tuple, num_vars, group_size, codes, k, &mut cells);
        Some(TupleCache { stride: k, cells })
    }

    #[inline]
    fn row(&self, num_vars: usize, slots: &[usize]) -> &[u32] {
        let idx = slots.iter().fold(0usize, |acc, &v| acc * num_vars + v);
        &self.cells[idx * self.stride..(idx + 1) * self.stride]
    }
}

fn fill(
    tuple: &mut Vec<usize>,
    num_vars: usize,
    group_size: usize,
    codes: &[u32],
    k: usize,
    cells: &mut [u32],
) {
    if tuple.len() == group_size {
        let idx = tuple.iter().fold(0usize, |acc, &v| acc * num_vars + v);
        let row = &mut cells[idx * k..(idx + 1) * k];
        for &code in codes {
            row[project(code, num_vars, tuple)] += 1;
        }
        return;
    }
    for v in 0..num_vars {
        if !tuple.contains(&v) {
            tuple.push(v);
            fill(tuple, num_vars, group_size, codes, k, cells);
            tuple.pop();
        }
    }
}

/// Dataset-specific tables shared read-only by all scoring workers.
pub struct ScoreContext {
    num_vars: usize,
    groups: usize,
    group_size: usize,
    num_types: usize,
    mode: SearchMode,
    codes: Vec<u32>,
    cache: Option<TupleCache>,
    /// `cell[n]` for `n` in `0..=G·|D|`.
    cell: Vec<f64>,
    /// `norm[k]` for a class of `k` groups.
    norm: Vec<f64>,
}

impl ScoreContext {
    pub fn new(data: &[BitVector], cfg: &SearchConfig) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::contract("scoring needs at least one sample"));
        }
        if let Some(bad) = data.iter().find(|bv| bv.len() != cfg.num_vars) {
            return Err(Error::contract(format!(
                "bit-vector of length {} for {} variables",
                bad.len(),
                cfg.num_vars
            )));
        }
        let n = data.len();
        let g = cfg.groups;
        let alpha = cfg.pseudocount;
        let k_out = (1usize << cfg.group_size) as f64;
        let max_count = g * n;
        let cell: Vec<f64> = match cfg.scorer {
            Scorer::PaperPlugin | Scorer::ConsistentPlugin => (0..=max_count)
                .map(|m| {
                    if m == 0 {
                        0.0
                    } else {
                        m as f64 * (alpha + m as f64).ln()
                    }
                })
                .collect(),
            Scorer::DirichletMarginal => {
                let base = ln_gamma(alpha);
                (0..=max_count)
                    .map(|m| ln_gamma(m as f64 + alpha) - base)
                    .collect()
            }
        };
        let total = (g * n) as f64;
        let norm: Vec<f64> = (0..=g)
            .map(|k| {
                let kn = (k * n) as f64;
                match (cfg.mode, cfg.scorer) {
                    (_, Scorer::DirichletMarginal) => {
                        ln_gamma(kn + k_out * alpha) - ln_gamma(k_out * alpha)
                    }
                    (SearchMode::Case12, Scorer::PaperPlugin) => kn * (k_out * alpha + total).ln(),
                    _ => kn * (k_out * alpha + kn).ln(),
                }
            })
            .collect();
        let codes: Vec<u32> = data.iter().map(|bv| bv.code()).collect();
        let cache = TupleCache::build(&codes, cfg.num_vars, cfg.group_size);
        Ok(ScoreContext {
            num_vars: cfg.num_vars,
            groups: g,
            group_size: cfg.group_size,
            num_types: cfg.num_types,
            mode: cfg.mode,
            codes,
            cache,
            cell,
            norm,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.codes.len()
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let k = 1usize << self.group_size;
        Scratch {
            pooled: vec![0; k * self.groups],
            members: vec![0; self.groups],
            row: vec![0; k],
        }
    }

    /// Score of groups `groups` with labels `labels` (`None` in case 1).
    pub(crate) fn score(
        &self,
        groups: &[Vec<usize>],
        labels: Option<&[u8]>,
        scratch: &mut Scratch,
    ) -> f64 {
        let k = 1usize << self.group_size;
        let classes = match (self.mode, labels) {
            (SearchMode::Case12, Some(_)) => self.num_types,
            _ => self.groups,
        };
        let pooled = &mut scratch.pooled[..classes * k];
        pooled.iter_mut().for_each(|c| *c = 0);
        let members = &mut scratch.members[..classes];
        members.iter_mut().for_each(|m| *m = 0);
        for (j, slots) in groups.iter().enumerate() {
            let c = match (self.mode, labels) {
                (SearchMode::Case12, Some(l)) => l[j] as usize,
                _ => j,
            };
            members[c] += 1;
            let dst = &mut pooled[c * k..(c + 1) * k];
            match &self.cache {
                Some(cache) => {
                    for (d, &x) in dst.iter_mut().zip(cache.row(self.num_vars, slots)) {
                        *d += x;
                    }
                }
                None => {
                    scratch.row.iter_mut().for_each(|r| *r = 0);
                    for &code in &self.codes {
                        scratch.row[project(code, self.num_vars, slots)] += 1;
                    }
                    for (d, &x) in dst.iter_mut().zip(&scratch.row) {
                        *d += x;
                    }
                }
            }
        }
        let mut score = 0.0;
        for c in 0..classes {
            if members[c] == 0 {
                continue;
            }
            score += pooled[c * k..(c + 1) * k]
                .iter()
                .map(|&n| self.cell[n as usize])
                .sum::<f64>();
            score -= self.norm[members[c]];
        }
        score
    }

    pub fn score_candidate(&self, c: &Candidate) -> Result<f64> {
        let g = &c.grouping;
        if g.num_vars() != self.num_vars || g.group_size() != self.group_size {
            return Err(Error::contract(
                "candidate shape differs from the scoring context",
            ));
        }
        let labels = match self.mode {
            SearchMode::Case1 => None,
            SearchMode::Case12 => {
                let a = c
                    .assignment
                    .as_deref()
                    .ok_or_else(|| Error::contract("case12 candidate without assignment"))?;
                if a.len() != self.groups || a.iter().any(|&t| t as usize >= self.num_types) {
                    return Err(Error::contract("assignment does not fit the type count"));
                }
                Some(a)
            }
        };
        let mut scratch = self.scratch();
        Ok(self.score(g.groups(), labels, &mut scratch))
    }
}

pub(crate) struct Scratch {
    pooled: Vec<u32>,
    members: Vec<usize>,
    row: Vec<u32>,
}

/// Log score of `c` under `cfg.scorer` (case 1,2 pooling by assignment).
pub fn score_candidate(data: &[BitVector], c: &Candidate, cfg: &SearchConfig) -> Result<f64> {
    ScoreContext::new(data, cfg)?.score_candidate(c)
}

/// Log of the product over samples and groups of the type-pooled plug-in
/// probabilities `(1 + pooled tally) / (2^S + G|D|)`.
pub fn score_candidate_paper(data: &[BitVector], c: &Candidate, cfg: &SearchConfig) -> Result<f64> {
    let cfg = SearchConfig {
        mode: SearchMode::Case12,
        scorer: Scorer::PaperPlugin,
        ..cfg.clone()
    };
    score_candidate(data, c, &cfg)
}

/// Per-group plug-in score `Σ log (1 + tally_j) / (2^S + |D|)`.
pub fn score_candidate_case1(data: &[BitVector], g: &Grouping, cfg: &SearchConfig) -> Result<f64> {
    let cfg = SearchConfig {
        mode: SearchMode::Case1,
        scorer: Scorer::PaperPlugin,
        ..cfg.clone()
    };
    score_candidate(
        data,
        &Candidate {
            grouping: g.clone(),
            assignment: None,
        },
        &cfg,
    )
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::rng::SplitMix64;
    use crate::search::space::CandidateSpace;

    fn random_data(n: usize, v: usize, seed: u64) -> Vec<BitVector> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|_| BitVector::new((rng.next_u64() >> (64 - v)) as u32, v).unwrap())
            .collect()
    }

    /// Per-sample evaluation of the pooled plug-in, counting matches over every
    /// (sample, slot) pair of the same type, including the instance itself.
    fn naive_plugin(
        data: &[BitVector],
        c: &Candidate,
        alpha: f64,
        shared_denominator: bool,
    ) -> f64 {
        let g = &c.grouping;
        let v = g.num_vars();
        let k = (1usize << g.group_size()) as f64;
        let labels: Vec<u8> = match &c.assignment {
            Some(a) => a.clone(),
            None => (0..g.num_groups() as u8).collect(),
        };
        let mut total = 0.0;
        for di in data {
            for j in 0..g.num_groups() {
                let o = project(di.code(), v, &g.groups()[j]);
                let mut matches = 0usize;
                let mut same_type_slots = 0usize;
                for l in 0..g.num_groups() {
                    if labels[l] != labels[j] {
                        continue;
                    }
                    same_type_slots += 1;
                    for dk in data {
                        if project(dk.code(), v, &g.groups()[l]) == o {
                            matches += 1;
                        }
                    }
                }
                let slots = if shared_denominator && c.assignment.is_some() {
                    g.num_groups()
                } else {
                    same_type_slots
                };
                let q = (alpha + matches as f64) / (k * alpha + (slots * data.len()) as f64);
                total += q.ln();
            }
        }
        total
    }

    #[test]
    fn single_sample_hand_value() {
        // groups read outcomes (o, o, o', o'') with o' != o''; assignment (a, a, b, b)
        let g = Grouping::identity(4, 3);
        let bv: BitVector = "101101011000".parse().unwrap();
        let c = Candidate {
            grouping: g,
            assignment: Some(vec![0, 0, 1, 1]),
        };
        let got = score_candidate_paper(&[bv], &c, &SearchConfig::default()).unwrap();
        let want = ((3.0f64 / 12.0).powi(2) * (2.0f64 / 12.0).powi(2)).ln();
        assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        assert_abs_diff_eq!(got, -6.356_107_660_695_891, epsilon = 1e-12);
    }

    #[test]
    fn case1_single_sample() {
        let bv: BitVector = "011010001111".parse().unwrap();
        let got = score_candidate_case1(&[bv], &Grouping::identity(4, 3), &SearchConfig::default())
            .unwrap();
        assert_abs_diff_eq!(got, 4.0 * (2.0f64 / 9.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn fast_path_matches_naive() {
        let cfg = SearchConfig::default();
        let space = CandidateSpace::new(&cfg).unwrap();
        let data = random_data(100, 12, 5);
        for rank in [0u64, 1, 77_000_123, 172_972_799] {
            let c = space.candidate(rank).unwrap();
            let fast = score_candidate_paper(&data, &c, &cfg).unwrap();
            assert_abs_diff_eq!(fast, naive_plugin(&data, &c, 1.0, true), epsilon = 1e-9);
            let consistent = SearchConfig {
                scorer: Scorer::ConsistentPlugin,
                ..cfg.clone()
            };
            assert_abs_diff_eq!(
                score_candidate(&data, &c, &consistent).unwrap(),
                naive_plugin(&data, &c, 1.0, false),
                epsilon = 1e-9
            );
            let g1 = &c.grouping;
            assert_abs_diff_eq!(
                score_candidate_case1(&data, g1, &cfg).unwrap(),
                naive_plugin(
                    &data,
                    &Candidate {
                        grouping: g1.clone(),
                        assignment: None
                    },
                    1.0,
                    false
                ),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn uncached_path_matches_cached() {
        let cfg = SearchConfig::default();
        let data = random_data(60, 12, 8);
        let ctx = ScoreContext::new(&data, &cfg).unwrap();
        let mut bare = ScoreContext::new(&data, &cfg).unwrap();
        bare.cache = None;
        let space = CandidateSpace::new(&cfg).unwrap();
        for rank in (0..172_972_800).step_by(9_999_991) {
            let c = space.candidate(rank).unwrap();
            assert_eq!(
                ctx.score_candidate(&c).unwrap(),
                bare.score_candidate(&c).unwrap()
            );
        }
    }

    #[test]
    fn marginal_matches_sequential_predictive() {
        // The Dirichlet-multinomial marginal equals the product of sequential
        // posterior predictive probabilities.
        let cfg = SearchConfig {
            scorer: Scorer::DirichletMarginal,
            ..SearchConfig::with_shape(2, 3)
        };
        let data = random_data(40, 6, 3);
        let c = Candidate {
            grouping: Grouping::new(vec![vec![2, 0, 5], vec![1, 4, 3]]).unwrap(),
            assignment: Some(vec![0, 0]),
        };
        let mut counts = [0usize; 8];
        let mut seen = 0usize;
        let mut want = 0.0;
        for d in &data {
            for slots in c.grouping.groups() {
                let o = project(d.code(), 6, slots);
                want += ((counts[o] as f64 + 1.0) / (seen as f64 + 8.0)).ln();
                counts[o] += 1;
                seen += 1;
            }
        }
        assert_abs_diff_eq!(
            score_candidate(&data, &c, &cfg).unwrap(),
            want,
            epsilon = 1e-9
        );
    }

    #[test]
    fn empty_data_is_rejected() {
        assert!(ScoreContext::new(&[], &SearchConfig::default()).is_err());
    }
}
