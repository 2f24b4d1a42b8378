//! Categorical and Dirichlet arithmetic over small discrete outcome spaces.
//!
//! Bit patterns follow one convention throughout the crate: variable 0 is
//! the most significant bit of a `V`-bit outcome index, and within a group the
//! first listed slot is the most significant bit of the group outcome. So the
//! slot reading `(1, 1, 0)` is outcome 6.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest variable count for which a full joint table is materialized.
pub const MAX_JOINT_VARS: usize = 20;

const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector over `K >= 1` outcomes.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Categorical(Vec<f64>);

impl Categorical {
    /// Checks nonnegativity and unit sum (within 1e-12).
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::contract("categorical needs at least one outcome"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::contract(format!("invalid categorical weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::contract(format!(
                "categorical weights sum to {sum}, not 1"
            )));
        }
        Ok(Categorical(weights))
    }

    /// Rescales nonnegative weights to unit sum.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty() || !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::contract(
                "cannot normalize an empty or zero-mass vector",
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::contract("negative weight"));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Categorical(weights))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        Categorical(vec![1.0 / k as f64; k])
    }

    /// All mass on `outcome`.
    pub fn point_mass(k: usize, outcome: usize) -> Self {
        assert!(outcome < k);
        let mut w = vec![0.0; k];
        w[outcome] = 1.0;
        Categorical(w)
    }

    /// Construction for values that are normalized by construction.
    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        debug_assert!(!weights.is_empty());
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        Categorical(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Total-variation distance `½ Σ |p - q|`.
    pub fn total_variation(&self, other: &Categorical) -> Result<f64> {
        check_same_len(self.len(), other.len())?;
        Ok(0.5
            * self
                .0
                .iter()
                .zip(&other.0)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }
}

impl<'de> Deserialize<'de> for Categorical {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let weights = Vec::<f64>::deserialize(de)?;
        Categorical::new(weights).map_err(serde::de::Error::custom)
    }
}

/// Integer outcome counts with a cached total.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TallyVector {
    counts: Vec<u64>,
    total: u64,
}

impl TallyVector {
    pub fn zeros(k: usize) -> Self {
        TallyVector {
            counts: vec![0; k],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        TallyVector { counts, total }
    }

    pub fn add(&mut self, outcome: usize) {
        self.counts[outcome] += 1;
        self.total += 1;
    }

    pub fn add_n(&mut self, outcome: usize, n: u64) {
        self.counts[outcome] += n;
        self.total += n;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

impl Serialize for TallyVector {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.counts.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for TallyVector {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        Ok(TallyVector::from_counts(Vec::deserialize(de)?))
    }
}

/// An ordered partition of `V` variables into `G` ordered groups of `S` slots.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Grouping {
    groups: Vec<Vec<usize>>,
}

impl Grouping {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let g = groups.len();
        if g == 0 {
            return Err(Error::contract("grouping needs at least one group"));
        }
        let s = groups[0].len();
        if s == 0 || groups.iter().any(|grp| grp.len() != s) {
            return Err(Error::contract(
                "all groups must have the same nonzero size",
            ));
        }
        let v = g * s;
        let mut seen = vec![false; v];
        for &var in groups.iter().flatten() {
            if var >= v {
                return Err(Error::contract(format!(
                    "variable {var} out of range for {v} variables"
                )));
            }
            if std::mem::replace(&mut seen[var], true) {
                return Err(Error::contract(format!("variable {var} appears twice")));
            }
        }
        Ok(Grouping { groups })
    }

    /// Groups `(0..S), (S..2S), ...`.
    pub fn identity(num_groups: usize, group_size: usize) -> Self {
        let groups = (0..num_groups)
            .map(|j| (j * group_size..(j + 1) * group_size).collect())
            .collect();
        Grouping { groups }
    }

    /// Chunks a permutation of `0..V` into consecutive groups.
    pub fn from_permutation(perm: &[usize], group_size: usize) -> Result<Self> {
        if group_size == 0 || perm.len() % group_size != 0 {
            return Err(Error::contract(
                "permutation length not divisible by group size",
            ));
        }
        Grouping::new(perm.chunks(group_size).map(<[usize]>::to_vec).collect())
    }

    pub(crate) fn from_groups_unchecked(groups: Vec<Vec<usize>>) -> Self {
        debug_assert!(Grouping::new(groups.clone()).is_ok());
        Grouping { groups }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_size(&self) -> usize {
        self.groups[0].len()
    }

    pub fn num_vars(&self) -> usize {
        self.num_groups() * self.group_size()
    }

    /// The group outcome of `pattern` (a `V`-bit code) read through `group`.
    pub fn project(&self, pattern: u32, group: usize) -> usize {
        project(pattern, self.num_vars(), &self.groups[group])
    }
}

impl Serialize for Grouping {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.groups.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Grouping {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        Grouping::new(Vec::deserialize(de)?).map_err(serde::de::Error::custom)
    }
}

/// Value of variable `var` in a `num_vars`-bit pattern (variable 0 is the MSB).
#[inline]
pub fn bit(pattern: u32, num_vars: usize, var: usize) -> u32 {
    (pattern >> (num_vars - 1 - var)) & 1
}

/// Reads the listed variables of `pattern` as an integer, first slot most significant.
#[inline]
pub fn project(pattern: u32, num_vars: usize, slots: &[usize]) -> usize {
    slots.iter().fold(0usize, |acc, &v| {
        (acc << 1) | bit(pattern, num_vars, v) as usize
    })
}

/// Writes the bits of `outcome` into the listed variables of a `num_vars`-bit pattern.
#[inline]
pub fn scatter(outcome: usize, num_vars: usize, slots: &[usize]) -> u32 {
    let s = slots.len();
    slots.iter().enumerate().fold(0u32, |acc, (k, &v)| {
        let b = ((outcome >> (s - 1 - k)) & 1) as u32;
        acc | (b << (num_vars - 1 - v))
    })
}

fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

fn check_joint_capacity(num_vars: usize) -> Result<()> {
    if num_vars > MAX_JOINT_VARS {
        return Err(Error::Capacity(format!(
            "joint over {num_vars} variables exceeds the {MAX_JOINT_VARS}-variable limit"
        )));
    }
    Ok(())
}

/// `D_KL(p || q)` in nats. Infinite when `q` misses support of `p`.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> Result<f64> {
    check_same_len(p.len(), q.len())?;
    Ok(kl_slices(p.weights(), q.weights()))
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pj, &qj) in p.iter().zip(q) {
        if pj > 0.0 {
            if qj <= 0.0 {
                return f64::INFINITY;
            }
            acc += pj * (pj / qj).ln();
        }
    }
    // Rounding can leave a tiny negative for p ≈ q.
    acc.max(0.0)
}

/// Posterior mean of a symmetric Dirichlet after observing `t`.
pub fn dirichlet_mean(t: &TallyVector, pseudocount: f64) -> Categorical {
    assert!(pseudocount > 0.0, "pseudocount must be positive");
    let denom = t.total() as f64 + t.len() as f64 * pseudocount;
    Categorical::from_normalized(
        t.counts()
            .iter()
            .map(|&c| (c as f64 + pseudocount) / denom)
            .collect(),
    )
}

/// [`dirichlet_mean`] for fractional (responsibility-weighted) counts.
pub fn dirichlet_mean_weighted(counts: &[f64], pseudocount: f64) -> Categorical {
    assert!(pseudocount > 0.0, "pseudocount must be positive");
    let total: f64 = counts.iter().sum();
    let denom = total + counts.len() as f64 * pseudocount;
    Categorical::from_normalized(counts.iter().map(|&c| (c + pseudocount) / denom).collect())
}

/// Joint over `2^V` patterns of independent bits with `P(bit v = 1) = bit_probs[v]`.
pub fn joint_from_independent_bits(bit_probs: &[f64]) -> Result<Categorical> {
    let v = bit_probs.len();
    check_joint_capacity(v)?;
    if v == 0 {
        return Err(Error::contract("need at least one variable"));
    }
    if let Some(p) = bit_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::contract(format!(
            "bit probability {p} outside [0, 1]"
        )));
    }
    // Doubling construction: prefix joint over the first k bits, MSB first.
    let mut joint = vec![1.0];
    for &p in bit_probs {
        joint = joint.iter().flat_map(|&w| [w * (1.0 - p), w * p]).collect();
    }
    Ok(Categorical::from_normalized(joint))
}

/// The joint implied by independent groups, each with its own outcome distribution.
pub fn joint_from_grouping(g: &Grouping, group_dists: &[Categorical]) -> Result<Categorical> {
    let v = g.num_vars();
    check_joint_capacity(v)?;
    check_same_len(g.num_groups(), group_dists.len())?;
    let k = 1usize << g.group_size();
    if let Some(d) = group_dists.iter().find(|d| d.len() != k) {
        return Err(Error::contract(format!(
            "group distribution over {} outcomes, expected {k}",
            d.len()
        )));
    }
    let mut joint = vec![1.0; 1 << v];
    for (slots, dist) in g.groups().iter().zip(group_dists) {
        let w = dist.weights();
        for (pattern, cell) in joint.iter_mut().enumerate() {
            *cell *= w[project(pattern as u32, v, slots)];
        }
    }
    Ok(Categorical::from_normalized(joint))
}

/// `Σ_j counts_j ln q_j`; negative infinity when `q` misses observed support.
pub fn log_likelihood(t: &TallyVector, q: &Categorical) -> Result<f64> {
    check_same_len(t.len(), q.len())?;
    Ok(log_likelihood_slices(t.counts(), q.weights()))
}

pub(crate) fn log_likelihood_slices(counts: &[u64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&c, &qj) in counts.iter().zip(q) {
        if c > 0 {
            if qj <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += c as f64 * qj.ln();
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn cat(w: &[f64]) -> Categorical {
        Categorical::new(w.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let u = cat(&[0.25; 4]);
        assert_eq!(kl_divergence(&u, &u).unwrap(), 0.0);
        let half = cat(&[0.5, 0.5]);
        assert_abs_diff_eq!(
            kl_divergence(&cat(&[1.0, 0.0]), &half).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // independent evaluation of the definition sum
        assert_abs_diff_eq!(
            kl_divergence(&cat(&[0.75, 0.25]), &half).unwrap(),
            0.130_812_035_941_136_97,
            epsilon = 1e-12
        );
    }

    #[test]
    fn kl_unsupported_is_infinite() {
        let p = cat(&[0.5, 0.5]);
        let q = cat(&[1.0, 0.0]);
        assert_eq!(kl_divergence(&p, &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let err = kl_divergence(&cat(&[1.0]), &cat(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn categorical_rejects_bad_weights() {
        assert!(Categorical::new(vec![]).is_err());
        assert!(Categorical::new(vec![0.5, 0.6]).is_err());
        assert!(Categorical::new(vec![1.5, -0.5]).is_err());
        assert!(Categorical::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn dirichlet_mean_examples() {
        let d = dirichlet_mean(&TallyVector::zeros(8), 1.0);
        assert!(d.weights().iter().all(|&w| w == 0.125));

        let d = dirichlet_mean(&TallyVector::from_counts(vec![3, 1]), 1.0);
        assert_abs_diff_eq!(d.weights()[0], 4.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.weights()[1], 2.0 / 6.0, epsilon = 1e-15);

        let d = dirichlet_mean(
            &TallyVector::from_counts(vec![15, 1, 0, 0, 0, 0, 0, 0]),
            1.0,
        );
        assert_abs_diff_eq!(d.weights()[0], 16.0 / 24.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.weights()[1], 2.0 / 24.0, epsilon = 1e-15);
        for &w in &d.weights()[2..] {
            assert_abs_diff_eq!(w, 1.0 / 24.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn independent_bits_examples() {
        let j = joint_from_independent_bits(&[0.5, 0.5]).unwrap();
        assert_eq!(j.weights(), &[0.25; 4]);
        let j = joint_from_independent_bits(&[1.0, 0.0]).unwrap();
        assert_eq!(j.weights(), &[0.0, 0.0, 1.0, 0.0]);
        let j = joint_from_independent_bits(&[0.75, 0.25, 0.5]).unwrap();
        assert_abs_diff_eq!(j.weights()[0b101], 0.28125, epsilon = 1e-15);
        assert!(matches!(
            joint_from_independent_bits(&[0.5; 21]),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn grouping_examples() {
        let g = Grouping::identity(1, 2);
        let j = joint_from_grouping(&g, &[cat(&[0.1, 0.2, 0.3, 0.4])]).unwrap();
        assert_eq!(j.weights(), &[0.1, 0.2, 0.3, 0.4]);

        let g = Grouping::new(vec![vec![1], vec![0]]).unwrap();
        let j = joint_from_grouping(&g, &[cat(&[0.9, 0.1]), cat(&[0.6, 0.4])]).unwrap();
        // var0 = 1, var1 = 0 -> pattern 0b10
        assert_abs_diff_eq!(j.weights()[0b10], 0.36, epsilon = 1e-15);

        let g = Grouping::new(vec![
            vec![4, 0, 10],
            vec![1, 7, 11],
            vec![3, 6, 2],
            vec![9, 5, 8],
        ])
        .unwrap();
        let u = vec![Categorical::uniform(8); 4];
        let j = joint_from_grouping(&g, &u).unwrap();
        for &w in j.weights() {
            assert_abs_diff_eq!(w, 1.0 / 4096.0, epsilon = 1e-18);
        }
    }

    #[test]
    fn grouping_validation() {
        assert!(Grouping::new(vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Grouping::new(vec![vec![0, 1], vec![2]]).is_err());
        assert!(Grouping::new(vec![vec![0, 4]]).is_err());
        assert!(Grouping::new(vec![]).is_err());
    }

    #[test]
    fn slot_convention_matches_color_six() {
        // (V5, V1, V11) = (1, 1, 0) reads as outcome 6
        let slots = [4, 0, 10];
        let mut pattern = 0u32;
        pattern |= 1 << (12 - 1 - 4);
        pattern |= 1 << (12 - 1 - 0);
        assert_eq!(project(pattern, 12, &slots), 6);
        assert_eq!(scatter(6, 12, &slots), pattern);
    }

    #[test]
    fn log_likelihood_examples() {
        let q = cat(&[0.5, 0.5]);
        assert_eq!(log_likelihood(&TallyVector::zeros(2), &q).unwrap(), 0.0);
        assert_abs_diff_eq!(
            log_likelihood(&TallyVector::from_counts(vec![2, 1]), &q).unwrap(),
            3.0 * 0.5f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            log_likelihood(&TallyVector::from_counts(vec![3, 1]), &cat(&[0.75, 0.25])).unwrap(),
            -2.249_340_578_475_233,
            epsilon = 1e-12
        );
        assert_eq!(
            log_likelihood(&TallyVector::from_counts(vec![1, 1]), &cat(&[1.0, 0.0])).unwrap(),
            f64::NEG_INFINITY
        );
    }

    fn arb_categorical(k: usize) -> impl Strategy<Value = Categorical> {
        prop::collection::vec(0.001f64..1.0, k).prop_map(|w| Categorical::normalized(w).unwrap())
    }

    proptest! {
        #[test]
        fn gibbs_inequality(p in arb_categorical(8), q in arb_categorical(8)) {
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn independent_bits_is_singleton_grouping(
            probs in prop::collection::vec(0.0f64..=1.0, 1..8),
            order_seed in any::<u64>(),
        ) {
            let v = probs.len();
            let mut perm: Vec<usize> = (0..v).collect();
            let mut rng = crate::rng::SplitMix64::new(order_seed);
            for i in (1..v).rev() {
                perm.swap(i, rng.below(i + 1));
            }
            let g = Grouping::from_permutation(&perm, 1).unwrap();
            let dists: Vec<_> = perm
                .iter()
                .map(|&var| Categorical::new(vec![1.0 - probs[var], probs[var]]).unwrap())
                .collect();
            let a = joint_from_independent_bits(&probs).unwrap();
            let b = joint_from_grouping(&g, &dists).unwrap();
            for (x, y) in a.weights().iter().zip(b.weights()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }

        #[test]
        fn dirichlet_mean_is_categorical(counts in prop::collection::vec(0u64..1000, 1..16)) {
            let d = dirichlet_mean(&TallyVector::from_counts(counts), 1.0);
            prop_assert!(Categorical::new(d.into_inner()).is_ok());
        }
    }

    #[test]
    fn dirichlet_mean_converges_monotonically() {
        let p = cat(&[0.4, 0.3, 0.2, 0.05, 0.05]);
        let mut prev = f64::INFINITY;
        for n in [10u64, 100, 1_000, 10_000, 100_000] {
            let counts = p
                .weights()
                .iter()
                .map(|w| (w * n as f64).round() as u64)
                .collect();
            let kl =
                kl_divergence(&p, &dirichlet_mean(&TallyVector::from_counts(counts), 1.0)).unwrap();
            assert!(kl < prev, "n={n}: {kl} !< {prev}");
            prev = kl;
        }
        assert!(prev < 1e-6);
    }
}
