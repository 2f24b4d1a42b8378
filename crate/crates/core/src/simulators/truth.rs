use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{self, Categorical, Grouping};
use crate::rng::{inverse_cdf, SplitMix64};

/// Urn sampling weights: the first urn is rare.
pub const DEFAULT_URN_WEIGHTS: [f64; 4] = [0.025, 0.325, 0.325, 0.325];

/// Draws of a random type pair before giving up on the separation constraint.
pub const MAX_SEPARATION_RETRIES: usize = 10_000;

/// Which of the two latent type distributions a unit copies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeLabel {
    A,
    B,
}

impl TypeLabel {
    pub fn index(self) -> usize {
        match self {
            TypeLabel::A => 0,
            TypeLabel::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            TypeLabel::A
        } else {
            TypeLabel::B
        }
    }
}

fn alternating(n: usize) -> Vec<TypeLabel> {
    (0..n).map(|i| TypeLabel::from_index(i % 2)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrnConfig {
    pub colors: usize,
    pub urn_weights: Vec<f64>,
    /// Minimum total-variation distance between the two type distributions.
    pub min_separation: f64,
    /// Explicit type distributions; drawn at random when absent.
    pub type_dists: Option<Vec<Categorical>>,
    pub assignment: Vec<TypeLabel>,
}

impl Default for UrnConfig {
    fn default() -> Self {
        UrnConfig {
            colors: 8,
            urn_weights: DEFAULT_URN_WEIGHTS.to_vec(),
            min_separation: 0.3,
            type_dists: None,
            assignment: alternating(4),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UrnTruth {
    pub type_dists: Vec<Categorical>,
    pub assignment: Vec<TypeLabel>,
    pub urn_weights: Categorical,
}

impl UrnTruth {
    pub fn num_urns(&self) -> usize {
        self.assignment.len()
    }

    pub fn colors(&self) -> usize {
        self.type_dists[0].len()
    }

    /// The color distribution of urn `i`.
    pub fn urn_dist(&self, i: usize) -> &Categorical {
        &self.type_dists[self.assignment[i].index()]
    }
}

/// One observation: which urn was sampled and the color drawn (both 0-indexed).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UrnSample {
    pub urn: usize,
    pub color: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BitVectorConfig {
    pub groups: usize,
    pub group_size: usize,
    pub min_separation: f64,
    pub type_dists: Option<Vec<Categorical>>,
    /// Defaults to alternating `a, b, a, b, ...`.
    pub assignment: Option<Vec<TypeLabel>>,
    /// Explicit hidden grouping (0-indexed); drawn at random when absent.
    pub grouping: Option<Grouping>,
}

impl Default for BitVectorConfig {
    fn default() -> Self {
        BitVectorConfig {
            groups: 4,
            group_size: 3,
            min_separation: 0.3,
            type_dists: None,
            assignment: None,
            grouping: None,
        }
    }
}

impl BitVectorConfig {
    pub fn num_vars(&self) -> usize {
        self.groups * self.group_size
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitVectorTruth {
    pub hidden_grouping: Grouping,
    pub type_dists: Vec<Categorical>,
    pub assignment: Vec<TypeLabel>,
}

impl BitVectorTruth {
    pub fn num_vars(&self) -> usize {
        self.hidden_grouping.num_vars()
    }

    pub fn group_dist(&self, j: usize) -> &Categorical {
        &self.type_dists[self.assignment[j].index()]
    }

    pub fn group_dists(&self) -> Vec<Categorical> {
        (0..self.assignment.len())
            .map(|j| self.group_dist(j).clone())
            .collect()
    }
}

/// A fixed-width bit pattern; variable 0 is the most significant bit of `code`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    code: u32,
    len: u8,
}

impl BitVector {
    pub const MAX_LEN: usize = 32;

    pub fn new(code: u32, len: usize) -> Result<Self> {
        if len == 0 || len > Self::MAX_LEN {
            return Err(Error::contract(format!(
                "bit-vector length {len} not in 1..=32"
            )));
        }
        if len < 32 && code >> len != 0 {
            return Err(Error::contract(format!(
                "code {code} wider than {len} bits"
            )));
        }
        Ok(BitVector {
            code,
            len: len as u8,
        })
    }

    pub fn code(self) -> u32 {
        self.code
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn get(self, var: usize) -> bool {
        prob::bit(self.code, self.len(), var) == 1
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in 0..self.len() {
            f.write_str(if self.get(v) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut code = 0u32;
        for ch in s.chars() {
            let b = match ch {
                '0' => 0,
                '1' => 1,
                other => return Err(Error::contract(format!("invalid bit character {other:?}"))),
            };
            code = code.checked_shl(1).unwrap_or(0) | b;
        }
        BitVector::new(code, s.len())
    }
}

fn random_categorical(rng: &mut SplitMix64, k: usize) -> Categorical {
    let draws: Vec<f64> = (0..k).map(|_| rng.exponential()).collect();
    Categorical::normalized(draws).expect("exponential draws are positive")
}

fn check_separation(dists: &[Categorical], min_separation: f64) -> Result<()> {
    let tv = dists[0].total_variation(&dists[1])?;
    if tv < min_separation {
        return Err(Error::Config(format!(
            "type distributions have total variation {tv:.4} below min_separation {min_separation}"
        )));
    }
    Ok(())
}

/// Explicit pair (checked), or a flat-Dirichlet pair redrawn until separated.
fn type_pair(
    rng: &mut SplitMix64,
    explicit: Option<&Vec<Categorical>>,
    k: usize,
    min_separation: f64,
) -> Result<Vec<Categorical>> {
    if let Some(dists) = explicit {
        if dists.len() != 2 || dists.iter().any(|d| d.len() != k) {
            return Err(Error::Config(format!(
                "expected two type distributions over {k} outcomes"
            )));
        }
        check_separation(dists, min_separation)?;
        return Ok(dists.clone());
    }
    for _ in 0..MAX_SEPARATION_RETRIES {
        let a = random_categorical(rng, k);
        let b = random_categorical(rng, k);
        if a.total_variation(&b)? >= min_separation {
            return Ok(vec![a, b]);
        }
    }
    Err(Error::Unsatisfiable(format!(
        "no type pair with total variation >= {min_separation} after {MAX_SEPARATION_RETRIES} draws"
    )))
}

pub fn build_urn_truth(cfg: &UrnConfig, seed: u64) -> Result<UrnTruth> {
    if cfg.colors == 0 {
        return Err(Error::Config("colors must be positive".into()));
    }
    if cfg.urn_weights.len() != cfg.assignment.len() {
        return Err(Error::Config(format!(
            "{} urn weights for {} urns",
            cfg.urn_weights.len(),
            cfg.assignment.len()
        )));
    }
    let urn_weights = Categorical::new(cfg.urn_weights.clone())
        .map_err(|e| Error::Config(format!("urn_weights: {e}")))?;
    let mut rng = SplitMix64::new(seed);
    let type_dists = type_pair(
        &mut rng,
        cfg.type_dists.as_ref(),
        cfg.colors,
        cfg.min_separation,
    )?;
    Ok(UrnTruth {
        type_dists,
        assignment: cfg.assignment.clone(),
        urn_weights,
    })
}

/// Two RNG advances: one for the urn, one for the color.
pub fn draw_urn_sample(truth: &UrnTruth, rng: &mut SplitMix64) -> UrnSample {
    let urn = inverse_cdf(truth.urn_weights.weights(), rng.next_f64());
    let color = inverse_cdf(truth.urn_dist(urn).weights(), rng.next_f64());
    UrnSample { urn, color }
}

fn shuffled_grouping(rng: &mut SplitMix64, groups: usize, group_size: usize) -> Grouping {
    let v = groups * group_size;
    let mut perm: Vec<usize> = (0..v).collect();
    for i in (1..v).rev() {
        perm.swap(i, rng.below(i + 1));
    }
    Grouping::from_permutation(&perm, group_size).expect("shuffle is a permutation")
}

pub fn build_bitvector_truth(cfg: &BitVectorConfig, seed: u64) -> Result<BitVectorTruth> {
    if cfg.groups == 0 || cfg.group_size == 0 {
        return Err(Error::Config(
            "groups and group_size must be positive".into(),
        ));
    }
    if cfg.num_vars() > BitVector::MAX_LEN {
        return Err(Error::Capacity(format!(
            "{} variables exceed the {}-bit vector width",
            cfg.num_vars(),
            BitVector::MAX_LEN
        )));
    }
    let assignment = cfg
        .assignment
        .clone()
        .unwrap_or_else(|| alternating(cfg.groups));
    if assignment.len() != cfg.groups {
        return Err(Error::Config(format!(
            "assignment has {} labels for {} groups",
            assignment.len(),
            cfg.groups
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let hidden_grouping = match &cfg.grouping {
        Some(g) => {
            if g.num_groups() != cfg.groups || g.group_size() != cfg.group_size {
                return Err(Error::Config(
                    "explicit grouping does not match groups x group_size".into(),
                ));
            }
            g.clone()
        }
        None => shuffled_grouping(&mut rng, cfg.groups, cfg.group_size),
    };
    let k = 1usize << cfg.group_size;
    let type_dists = type_pair(&mut rng, cfg.type_dists.as_ref(), k, cfg.min_separation)?;
    Ok(BitVectorTruth {
        hidden_grouping,
        type_dists,
        assignment,
    })
}

/// One RNG advance per group, in group order.
pub fn draw_bitvector(truth: &BitVectorTruth, rng: &mut SplitMix64) -> BitVector {
    let v = truth.num_vars();
    let code = truth
        .hidden_grouping
        .groups()
        .iter()
        .enumerate()
        .fold(0u32, |code, (j, slots)| {
            let outcome = inverse_cdf(truth.group_dist(j).weights(), rng.next_f64());
            code | prob::scatter(outcome, v, slots)
        });
    BitVector::new(code, v).expect("width checked at construction")
}

pub fn true_joint(truth: &BitVectorTruth) -> Result<Categorical> {
    prob::joint_from_grouping(&truth.hidden_grouping, &truth.group_dists())
}
