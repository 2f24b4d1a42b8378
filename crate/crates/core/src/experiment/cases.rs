//! One-shot estimates by case identifier, over a whole dataset.

use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorConfig, GroupedEstimate, Readout};
use crate::prob::{self, Categorical, Grouping, TallyVector};
use crate::search::{self, estimate_from_candidate, ScoredCandidate, SearchConfig, SearchMode};
use crate::simulators::{BitVector, UrnSample};

/// Per-urn estimates for `raw`, `ours` or `ours_hard`.
pub fn estimate_urns_case(
    case: &str,
    samples: &[UrnSample],
    urns: usize,
    colors: usize,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<Vec<Categorical>> {
    let mut tallies = vec![TallyVector::zeros(colors); urns];
    for (i, s) in samples.iter().enumerate() {
        if s.urn >= urns || s.color >= colors {
            return Err(Error::Config(format!(
                "sample {}: urn {} / color {} outside {urns} urns x {colors} colors",
                i + 1,
                s.urn + 1,
                s.color + 1
            )));
        }
        tallies[s.urn].add(s.color);
    }
    match case {
        "raw" => Ok(estimators::raw_tally_estimate(&tallies, cfg)),
        "ours" | "ours_hard" => {
            let em = estimators::em_two_type(&tallies, cfg, seed)?;
            let mode = if case == "ours" {
                cfg.readout
            } else {
                Readout::Hard
            };
            Ok(estimators::readout(&em, mode))
        }
        other => Err(Error::Config(format!(
            "case: '{other}' is not an urn case (raw, ours, ours_hard)"
        ))),
    }
}

/// The joint estimate of bit-vector case `case`, plus the winning candidate
/// for search cases. `grouping` is required by the known-grouping cases.
pub fn estimate_bits_case(
    case: &str,
    data: &[BitVector],
    num_vars: usize,
    grouping: Option<&Grouping>,
    cfg: &EstimatorConfig,
    search_cfg: &SearchConfig,
    seed: u64,
) -> Result<(Categorical, Option<ScoredCandidate>)> {
    if let Some(bad) = data.iter().position(|b| b.len() != num_vars) {
        return Err(Error::Config(format!(
            "sample {}: {} bits, expected {num_vars}",
            bad + 1,
            data[bad].len()
        )));
    }
    let known = || {
        grouping.ok_or_else(|| Error::Config(format!("case: '{case}' needs the model's grouping")))
    };
    let joint = match case {
        "c0" => {
            let ones = estimators::bit_tallies(data, num_vars);
            prob::joint_from_independent_bits(&estimators::independent_bits_estimate(&ones, cfg)?)?
        }
        "c0p" => {
            estimators::joint_dirichlet_estimate(&estimators::joint_tally(data, num_vars)?, cfg)?
        }
        "c13" | "c123" => {
            let g = known()?;
            let est = GroupedEstimate::from_tallies(
                &estimators::group_tallies(g, data)?,
                cfg,
                case == "c123",
                seed,
            )?;
            prob::joint_from_grouping(g, &est.dists)?
        }
        "c1" | "c12" => {
            let mode = if case == "c1" {
                SearchMode::Case1
            } else {
                SearchMode::Case12
            };
            let scfg = SearchConfig {
                mode,
                ..search_cfg.clone()
            };
            if scfg.num_vars != num_vars {
                return Err(Error::Config(format!(
                    "search: num_vars {} differs from the data's {num_vars} bits",
                    scfg.num_vars
                )));
            }
            let best = search::search(data, &scfg)?
                .into_iter()
                .next()
                .expect("top_k >= 1");
            let joint = estimate_from_candidate(data, &best.candidate, cfg, seed)?;
            return Ok((joint, Some(best)));
        }
        other => {
            return Err(Error::Config(format!(
                "case: '{other}' is not a bit-vector case (c0, c0p, c13, c123, c1, c12)"
            )))
        }
    };
    Ok((joint, None))
}
