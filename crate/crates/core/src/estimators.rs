//! Density estimators that need no structure search: raw Dirichlet tallies,
//! two-type EM clustering, independent bits, the full joint table, and
//! grouped estimates with known groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{self, Categorical, Grouping, TallyVector, MAX_JOINT_VARS};
use crate::rng::SplitMix64;
use crate::simulators::BitVector;

/// How a unit's estimate is read out of a two-type fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// `r_a Q_a + r_b Q_b`.
    #[default]
    Mixture,
    /// The distribution of the more responsible type.
    Hard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub pseudocount: f64,
    /// Convergence threshold on the change of the EM objective.
    pub em_tol: f64,
    /// Convergence threshold on the largest change of any type probability.
    pub em_param_tol: f64,
    pub em_max_iters: usize,
    pub em_restarts: usize,
    /// Log-scale amplitude of the multiplicative perturbation of restart inits.
    pub em_init_noise: f64,
    pub readout: Readout,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            pseudocount: 1.0,
            em_tol: 1e-10,
            em_param_tol: 1e-12,
            em_max_iters: 2000,
            em_restarts: 5,
            em_init_noise: 0.5,
            readout: Readout::Mixture,
        }
    }
}

/// Outcome of a two-type EM fit over `N` units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub q_a: Categorical,
    pub q_b: Categorical,
    /// Per unit: `[P(unit is type a), P(unit is type b)]`.
    pub responsibilities: Vec<[f64; 2]>,
    /// Observed-data log-likelihood under a fair prior over the two types.
    pub log_likelihood: f64,
    /// Objective the smoothed M-step maximizes: the log-likelihood plus
    /// `pseudocount * Σ ln q` over both types.
    pub objective: f64,
    /// Objective after every iteration of the selected run.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Runs attempted, including a seeded hard initialization if given.
    pub restarts_used: usize,
}

impl EmResult {
    /// The same fit with the two type labels exchanged.
    pub fn swapped(&self) -> EmResult {
        EmResult {
            q_a: self.q_b.clone(),
            q_b: self.q_a.clone(),
            responsibilities: self.responsibilities.iter().map(|r| [r[1], r[0]]).collect(),
            ..self.clone()
        }
    }
}

pub fn raw_tally_estimate(tallies: &[TallyVector], cfg: &EstimatorConfig) -> Vec<Categorical> {
    tallies
        .iter()
        .map(|t| prob::dirichlet_mean(t, cfg.pseudocount))
        .collect()
}

struct Run {
    q: [Vec<f64>; 2],
    resp: Vec<[f64; 2]>,
    loglik: f64,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn e_step(tallies: &[TallyVector], q: &[Vec<f64>; 2], resp: &mut [[f64; 2]]) -> f64 {
    let mut loglik = 0.0;
    for (t, r) in tallies.iter().zip(resp.iter_mut()) {
        let la = prob::log_likelihood_slices(t.counts(), &q[0]);
        let lb = prob::log_likelihood_slices(t.counts(), &q[1]);
        let hi = la.max(lb);
        let lse = hi + ((la - hi).exp() + (lb - hi).exp()).ln();
        loglik += lse - std::f64::consts::LN_2;
        let ra = (la - lse).exp();
        *r = [ra, 1.0 - ra];
    }
    loglik
}

fn m_step(tallies: &[TallyVector], resp: &[[f64; 2]], pseudocount: f64) -> [Vec<f64>; 2] {
    let k = tallies[0].len();
    let mut pooled = [vec![0.0; k], vec![0.0; k]];
    for (t, r) in tallies.iter().zip(resp) {
        for (c, &n) in t.counts().iter().enumerate() {
            pooled[0][c] += r[0] * n as f64;
            pooled[1][c] += r[1] * n as f64;
        }
    }
    pooled.map(|p| prob::dirichlet_mean_weighted(&p, pseudocount).into_inner())
}

fn log_prior(q: &[Vec<f64>; 2], pseudocount: f64) -> f64 {
    pseudocount * q.iter().flatten().map(|p| p.ln()).sum::<f64>()
}

fn max_change(a: &[Vec<f64>; 2], b: &[Vec<f64>; 2]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn run_em(tallies: &[TallyVector], cfg: &EstimatorConfig, init: [Vec<f64>; 2]) -> Run {
    let mut q = init;
    let mut resp = vec![[0.5, 0.5]; tallies.len()];
    let mut loglik = e_step(tallies, &q, &mut resp);
    let mut objective = loglik + log_prior(&q, cfg.pseudocount);
    let mut trace = vec![objective];
    let mut iterations = 0;
    while iterations < cfg.em_max_iters {
        iterations += 1;
        let next = m_step(tallies, &resp, cfg.pseudocount);
        let delta = max_change(&q, &next);
        q = next;
        loglik = e_step(tallies, &q, &mut resp);
        let next_objective = loglik + log_prior(&q, cfg.pseudocount);
        trace.push(next_objective);
        let converged = (next_objective - objective).abs() < cfg.em_tol && delta < cfg.em_param_tol;
        objective = next_objective;
        if converged {
            break;
        }
    }
    Run {
        q,
        resp,
        loglik,
        objective,
        trace,
        iterations,
    }
}

fn check_units(tallies: &[TallyVector]) -> Result<()> {
    let Some(first) = tallies.first() else {
        return Err(Error::contract("EM needs at least one unit"));
    };
    if tallies.iter().any(|t| t.len() != first.len()) {
        return Err(Error::contract("units disagree on the number of outcomes"));
    }
    Ok(())
}

/// Pooled distribution perturbed multiplicatively, renormalized.
fn perturbed(pooled: &[f64], rng: &mut SplitMix64, noise: f64) -> Vec<f64> {
    let w: Vec<f64> = pooled
        .iter()
        .map(|p| p * (noise * (2.0 * rng.next_f64() - 1.0)).exp())
        .collect();
    Categorical::normalized(w)
        .expect("perturbation keeps weights positive")
        .into_inner()
}

/// Two-type EM over `N` units; best of `em_restarts` perturbed initializations.
pub fn em_two_type(tallies: &[TallyVector], cfg: &EstimatorConfig, seed: u64) -> Result<EmResult> {
    em_two_type_seeded(tallies, cfg, seed, None)
}

/// [`em_two_type`] with an additional run started from a hard assignment
/// (`true` for type a), which is tried first.
pub fn em_two_type_from_assignment(
    tallies: &[TallyVector],
    cfg: &EstimatorConfig,
    seed: u64,
    assignment: &[bool],
) -> Result<EmResult> {
    if assignment.len() != tallies.len() {
        return Err(Error::contract(
            "initial assignment length differs from unit count",
        ));
    }
    em_two_type_seeded(tallies, cfg, seed, Some(assignment))
}

fn em_two_type_seeded(
    tallies: &[TallyVector],
    cfg: &EstimatorConfig,
    seed: u64,
    hard_init: Option<&[bool]>,
) -> Result<EmResult> {
    check_units(tallies)?;
    let k = tallies[0].len();
    let mut pooled = TallyVector::zeros(k);
    for t in tallies {
        for (c, &n) in t.counts().iter().enumerate() {
            pooled.add_n(c, n);
        }
    }
    let pooled = prob::dirichlet_mean(&pooled, cfg.pseudocount).into_inner();

    let mut inits = Vec::new();
    if let Some(assign) = hard_init {
        let resp: Vec<[f64; 2]> = assign
            .iter()
            .map(|&a| if a { [1.0, 0.0] } else { [0.0, 1.0] })
            .collect();
        inits.push(m_step(tallies, &resp, cfg.pseudocount));
    }
    // The first restart starts both types at the pooled mean, which is the
    // symmetric fixed point; it wins when the units are indistinguishable.
    inits.push([pooled.clone(), pooled.clone()]);
    let mut rng = SplitMix64::new(seed);
    for _ in 1..cfg.em_restarts.max(1) {
        let a = perturbed(&pooled, &mut rng, cfg.em_init_noise);
        let b = perturbed(&pooled, &mut rng, cfg.em_init_noise);
        inits.push([a, b]);
    }

    let restarts_used = inits.len();
    let best = inits
        .into_iter()
        .map(|init| run_em(tallies, cfg, init))
        .reduce(|best, run| {
            if run.objective > best.objective {
                run
            } else {
                best
            }
        })
        .expect("at least one initialization");
    let [q_a, q_b] = best.q;
    Ok(EmResult {
        q_a: Categorical::from_normalized(q_a),
        q_b: Categorical::from_normalized(q_b),
        responsibilities: best.resp,
        log_likelihood: best.loglik,
        objective: best.objective,
        trace: best.trace,
        iterations: best.iterations,
        restarts_used,
    })
}

/// Per-unit estimates `r_a Q_a + r_b Q_b`.
pub fn per_unit_mixture(res: &EmResult) -> Vec<Categorical> {
    res.responsibilities
        .iter()
        .map(|r| {
            Categorical::from_normalized(
                res.q_a
                    .weights()
                    .iter()
                    .zip(res.q_b.weights())
                    .map(|(a, b)| r[0] * a + r[1] * b)
                    .collect(),
            )
        })
        .collect()
}

/// Each unit takes the distribution of its more responsible type (ties go to a).
pub fn per_unit_hard(res: &EmResult) -> Vec<Categorical> {
    res.responsibilities
        .iter()
        .map(|r| {
            if r[0] >= r[1] {
                res.q_a.clone()
            } else {
                res.q_b.clone()
            }
        })
        .collect()
}

pub fn readout(res: &EmResult, mode: Readout) -> Vec<Categorical> {
    match mode {
        Readout::Mixture => per_unit_mixture(res),
        Readout::Hard => per_unit_hard(res),
    }
}

/// Per-variable `(ones, total)` counts.
pub fn bit_tallies(data: &[BitVector], num_vars: usize) -> Vec<(u64, u64)> {
    let mut out = vec![(0u64, 0u64); num_vars];
    for bv in data {
        for (v, slot) in out.iter_mut().enumerate() {
            slot.0 += bv.get(v) as u64;
            slot.1 += 1;
        }
    }
    out
}

/// Beta(1, 1) posterior mean per variable.
pub fn independent_bits_estimate(
    bit_tallies: &[(u64, u64)],
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    let alpha = cfg.pseudocount;
    bit_tallies
        .iter()
        .map(|&(ones, total)| {
            if ones > total {
                return Err(Error::contract(format!(
                    "{ones} ones out of {total} samples"
                )));
            }
            Ok((ones as f64 + alpha) / (total as f64 + 2.0 * alpha))
        })
        .collect()
}

/// Tally over all `2^V` patterns.
pub fn joint_tally(data: &[BitVector], num_vars: usize) -> Result<TallyVector> {
    if num_vars > MAX_JOINT_VARS {
        return Err(Error::Capacity(format!(
            "joint tally over {num_vars} variables"
        )));
    }
    let mut t = TallyVector::zeros(1 << num_vars);
    for bv in data {
        t.add(bv.code() as usize);
    }
    Ok(t)
}

/// Dirichlet posterior mean over the full joint table.
pub fn joint_dirichlet_estimate(
    joint_tally: &TallyVector,
    cfg: &EstimatorConfig,
) -> Result<Categorical> {
    let k = joint_tally.len();
    if !k.is_power_of_two() {
        return Err(Error::contract(format!(
            "{k} outcomes is not a power of two"
        )));
    }
    if k.trailing_zeros() as usize > MAX_JOINT_VARS {
        return Err(Error::Capacity(format!("joint over {k} outcomes")));
    }
    Ok(prob::dirichlet_mean(joint_tally, cfg.pseudocount))
}

/// One tally over `2^S` outcomes per group of `g`.
pub fn group_tallies(g: &Grouping, data: &[BitVector]) -> Result<Vec<TallyVector>> {
    let v = g.num_vars();
    if let Some(bad) = data.iter().find(|bv| bv.len() != v) {
        return Err(Error::contract(format!(
            "bit-vector of length {} for a {v}-variable grouping",
            bad.len()
        )));
    }
    let k = 1 << g.group_size();
    let mut out = vec![TallyVector::zeros(k); g.num_groups()];
    for bv in data {
        for (j, t) in out.iter_mut().enumerate() {
            t.add(g.project(bv.code(), j));
        }
    }
    Ok(out)
}

/// Per-group estimates for a known grouping, with the fitted types when pooled.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedEstimate {
    pub dists: Vec<Categorical>,
    pub em: Option<EmResult>,
}

impl GroupedEstimate {
    pub fn from_tallies(
        tallies: &[TallyVector],
        cfg: &EstimatorConfig,
        share_types: bool,
        seed: u64,
    ) -> Result<Self> {
        if !share_types {
            return Ok(GroupedEstimate {
                dists: raw_tally_estimate(tallies, cfg),
                em: None,
            });
        }
        let em = em_two_type(tallies, cfg, seed)?;
        Ok(GroupedEstimate {
            dists: readout(&em, cfg.readout),
            em: Some(em),
        })
    }
}

/// Known grouping: per-group tallies, then raw estimates or a two-type fit.
pub fn grouped_known_estimate(
    g: &Grouping,
    data: &[BitVector],
    cfg: &EstimatorConfig,
    share_types: bool,
    seed: u64,
) -> Result<GroupedEstimate> {
    GroupedEstimate::from_tallies(&group_tallies(g, data)?, cfg, share_types, seed)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn tv(c: &[u64]) -> TallyVector {
        TallyVector::from_counts(c.to_vec())
    }

    /// Hard-assignment oracle: best complete-data split over all 2^N labelings,
    /// then one smoothed M-step.
    fn brute_force_split(tallies: &[TallyVector], alpha: f64) -> (Vec<bool>, [Categorical; 2]) {
        let n = tallies.len();
        let k = tallies[0].len();
        let mut best: Option<(f64, Vec<bool>, [Categorical; 2])> = None;
        for mask in 0u32..(1 << n) {
            let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let mut pooled = [TallyVector::zeros(k), TallyVector::zeros(k)];
            for (t, &l) in tallies.iter().zip(&labels) {
                for (c, &x) in t.counts().iter().enumerate() {
                    pooled[l as usize].add_n(c, x);
                }
            }
            let q = pooled.map(|p| prob::dirichlet_mean(&p, alpha));
            let ll: f64 = tallies
                .iter()
                .zip(&labels)
                .map(|(t, &l)| prob::log_likelihood(t, &q[l as usize]).unwrap())
                .sum();
            if best.as_ref().map_or(true, |b| ll > b.0) {
                best = Some((ll, labels, q));
            }
        }
        let (_, labels, q) = best.unwrap();
        (labels, q)
    }

    #[test]
    fn raw_tallies_examples() {
        let cfg = EstimatorConfig::default();
        let est = raw_tally_estimate(&vec![TallyVector::zeros(8); 4], &cfg);
        assert!(est.iter().all(|d| d.weights().iter().all(|&w| w == 0.125)));
        let est = raw_tally_estimate(&[tv(&[10, 0, 0, 0, 0, 0, 0, 0])], &cfg);
        assert_abs_diff_eq!(est[0].weights()[0], 11.0 / 18.0, epsilon = 1e-15);
        assert_abs_diff_eq!(est[0].weights()[7], 1.0 / 18.0, epsilon = 1e-15);
    }

    #[test]
    fn em_separates_disjoint_units() {
        let cfg = EstimatorConfig::default();
        let tallies = [tv(&[100, 0]), tv(&[0, 100])];
        let res = em_two_type(&tallies, &cfg, 1).unwrap();
        let (labels, oracle) = brute_force_split(&tallies, cfg.pseudocount);
        assert_ne!(labels[0], labels[1]);
        // units land in opposite types with near-certain responsibility
        let r0 = res.responsibilities[0];
        let r1 = res.responsibilities[1];
        assert!((r0[0] - 1.0).abs() < 1e-6 || (r0[1] - 1.0).abs() < 1e-6);
        assert!((r0[0] - r1[1]).abs() < 1e-6);
        for d in [&res.q_a, &res.q_b] {
            assert!(d.weights().iter().cloned().fold(0.0, f64::max) >= 0.98);
        }
        let units = per_unit_mixture(&res);
        for (i, est) in units.iter().enumerate() {
            let own = &oracle[labels[i] as usize];
            for (a, b) in est.weights().iter().zip(own.weights()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn em_identical_units_collapse_types() {
        let cfg = EstimatorConfig::default();
        let unit = tv(&[2_000_000, 1_500_000, 1_000_000, 500_000]);
        let tallies = vec![unit.clone(); 4];
        let res = em_two_type(&tallies, &cfg, 3).unwrap();
        let mut pooled = TallyVector::zeros(4);
        for t in &tallies {
            for (c, &n) in t.counts().iter().enumerate() {
                pooled.add_n(c, n);
            }
        }
        let pooled = prob::dirichlet_mean(&pooled, 1.0);
        for ((a, b), p) in res
            .q_a
            .weights()
            .iter()
            .zip(res.q_b.weights())
            .zip(pooled.weights())
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            assert_abs_diff_eq!(a, p, epsilon = 1e-6);
        }
    }

    #[test]
    fn em_single_unit_matches_pooled_mean() {
        let cfg = EstimatorConfig::default();
        let t = tv(&[40, 25, 10, 5, 0, 0, 0, 20]);
        let res = em_two_type(std::slice::from_ref(&t), &cfg, 7).unwrap();
        let r = res.responsibilities[0];
        assert_abs_diff_eq!(r[0] + r[1], 1.0, epsilon = 1e-12);
        let mix = &per_unit_mixture(&res)[0];
        let pooled = prob::dirichlet_mean(&t, 1.0);
        for (a, b) in mix.weights().iter().zip(pooled.weights()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn em_rejects_empty_input() {
        let cfg = EstimatorConfig::default();
        assert!(matches!(em_two_type(&[], &cfg, 0), Err(Error::Contract(_))));
        assert!(em_two_type(&[tv(&[1, 2]), tv(&[1])], &cfg, 0).is_err());
    }

    #[test]
    fn em_trace_is_monotone_and_deterministic() {
        let cfg = EstimatorConfig::default();
        let tallies = [
            tv(&[5, 1, 0, 2]),
            tv(&[0, 3, 7, 1]),
            tv(&[4, 2, 1, 1]),
            tv(&[1, 4, 6, 0]),
        ];
        let a = em_two_type(&tallies, &cfg, 11).unwrap();
        let b = em_two_type(&tallies, &cfg, 11).unwrap();
        assert_eq!(a, b);
        for w in a.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
        for r in &a.responsibilities {
            assert_abs_diff_eq!(r[0] + r[1], 1.0, epsilon = 1e-9);
        }
        assert_eq!(a.restarts_used, cfg.em_restarts);
    }

    #[test]
    fn label_swap_leaves_readout_unchanged() {
        let cfg = EstimatorConfig::default();
        let tallies = [tv(&[5, 1, 0]), tv(&[0, 3, 7]), tv(&[4, 2, 1])];
        let res = em_two_type(&tallies, &cfg, 2).unwrap();
        let sw = res.swapped();
        for (x, y) in per_unit_mixture(&res)
            .iter()
            .zip(per_unit_mixture(&sw).iter())
        {
            for (a, b) in x.weights().iter().zip(y.weights()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hard_readout_picks_dominant_type() {
        let cfg = EstimatorConfig::default();
        let res = em_two_type(&[tv(&[100, 0]), tv(&[0, 100])], &cfg, 1).unwrap();
        let hard = per_unit_hard(&res);
        let mix = per_unit_mixture(&res);
        for (h, m) in hard.iter().zip(&mix) {
            for (a, b) in h.weights().iter().zip(m.weights()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn independent_bits_examples() {
        let cfg = EstimatorConfig::default();
        let p = independent_bits_estimate(&[(0, 0), (3, 4), (999, 1000)], &cfg).unwrap();
        assert_eq!(p[0], 0.5);
        assert_abs_diff_eq!(p[1], 4.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 1000.0 / 1002.0, epsilon = 1e-15);
        assert!(independent_bits_estimate(&[(5, 4)], &cfg).is_err());
    }

    #[test]
    fn joint_estimate_capacity() {
        let cfg = EstimatorConfig::default();
        assert!(joint_dirichlet_estimate(&TallyVector::zeros(6), &cfg).is_err());
        let est = joint_dirichlet_estimate(&TallyVector::zeros(4096), &cfg).unwrap();
        assert_eq!(est.weights()[17], 1.0 / 4096.0);
    }

    #[test]
    fn repeated_pattern_concentrates_each_group() {
        let cfg = EstimatorConfig::default();
        let g = Grouping::new(vec![
            vec![4, 0, 10],
            vec![1, 7, 11],
            vec![3, 6, 2],
            vec![9, 5, 8],
        ])
        .unwrap();
        let bv: BitVector = "110010100101".parse().unwrap();
        let n = 37;
        let data = vec![bv; n];
        let est = grouped_known_estimate(&g, &data, &cfg, false, 0).unwrap();
        assert!(est.em.is_none());
        for (j, d) in est.dists.iter().enumerate() {
            let seen = g.project(bv.code(), j);
            assert_abs_diff_eq!(
                d.weights()[seen],
                (n as f64 + 1.0) / (n as f64 + 8.0),
                epsilon = 1e-15
            );
        }
    }
}
