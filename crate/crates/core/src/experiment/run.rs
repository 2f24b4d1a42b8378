//! Seeded experiment runs over one shared sample stream per run.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::curves::{average_curves, write_curves_csv, CurveRecord, KlCurve};
use super::plot::{write_svg, PlotOptions};
use super::spec::{ExperimentKind, ExperimentSpec, EXPENSIVE_EVALUATIONS};
use crate::error::{Error, Result};
use crate::estimators::{self, GroupedEstimate, Readout};
use crate::prob::{self, Categorical, TallyVector};
use crate::rng::{splitmix64, SplitMix64};
use crate::search::{
    self, estimate_from_candidate, fnv1a64, orbit_count, Candidate, SearchConfig, SearchMode,
};
use crate::simulators::{
    build_bitvector_truth, build_urn_truth, draw_bitvector, draw_urn_sample, true_joint, BitVector,
};

/// Seed of run `run`: `splitmix64(base + run)`.
pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    splitmix64(base_seed.wrapping_add(run as u64))
}

/// Independent sub-seeds of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub truth: u64,
    pub data: u64,
    pub em: u64,
}

impl RunSeeds {
    pub fn derive(spec: &ExperimentSpec, run: usize) -> Self {
        let mut rng = SplitMix64::new(run_seed(spec.base_seed, run));
        let mut seeds = RunSeeds {
            truth: rng.next_u64(),
            data: rng.next_u64(),
            em: rng.next_u64(),
        };
        if !spec.resample_truth {
            seeds.truth = SplitMix64::new(run_seed(spec.base_seed, 0)).next_u64();
        }
        seeds
    }
}

/// The best candidate found by one search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTracePoint {
    pub samples: u64,
    pub rank: u64,
    pub log_score: f64,
    /// The candidate in 1-based display form.
    pub candidate: String,
    pub in_truth_orbit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub case: String,
    pub points: Vec<SearchTracePoint>,
}

impl SearchTrace {
    /// First search checkpoint from which every later best candidate lies in
    /// the truth orbit.
    pub fn lock_in(&self) -> Option<u64> {
        let tail = self
            .points
            .iter()
            .rev()
            .take_while(|p| p.in_truth_orbit)
            .count();
        (tail > 0).then(|| self.points[self.points.len() - tail].samples)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub run: usize,
    pub seeds: RunSeeds,
    pub curves: Vec<KlCurve>,
    pub traces: Vec<SearchTrace>,
    pub wall_secs: f64,
}

impl RunOutput {
    pub fn curve(&self, label: &str) -> Option<&KlCurve> {
        self.curves.iter().find(|c| c.label == label)
    }

    pub fn trace(&self, case: &str) -> Option<&SearchTrace> {
        self.traces.iter().find(|t| t.case == case)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub spec: ExperimentSpec,
    pub runs: Vec<RunOutput>,
    /// Per-case averages over all runs, in case order.
    pub averages: Vec<KlCurve>,
    pub wall_secs: f64,
}

impl ExperimentOutput {
    pub fn average(&self, label: &str) -> Option<&KlCurve> {
        self.averages.iter().find(|c| c.label == label)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    match spec.kind {
        ExperimentKind::FourUrns => run_four_urns(spec),
        ExperimentKind::BitVectors => run_bitvectors(spec),
    }
}

pub fn run_four_urns(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    expect_kind(spec, ExperimentKind::FourUrns)?;
    run_all(spec, run_four_urns_once)
}

pub fn run_bitvectors(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    expect_kind(spec, ExperimentKind::BitVectors)?;
    check_search_cost(spec)?;
    run_all(spec, run_bitvectors_once)
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "kind: expected {kind:?}, found {:?}",
            spec.kind
        )));
    }
    Ok(())
}

fn run_all(
    spec: &ExperimentSpec,
    once: fn(&ExperimentSpec, usize) -> Result<RunOutput>,
) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let slots: Mutex<Vec<Option<Result<RunOutput>>>> =
        Mutex::new((0..spec.n_runs).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let run = next.fetch_add(1, Ordering::Relaxed);
        if run >= spec.n_runs {
            break;
        }
        let out = once(spec, run);
        log::debug!("run {} of {} done", run + 1, spec.n_runs);
        slots.lock().expect("no run panicked")[run] = Some(out);
    };
    let workers = spec.workers.min(spec.n_runs);
    if workers <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    let runs = slots
        .into_inner()
        .expect("no run panicked")
        .into_iter()
        .map(|r| r.expect("every run claimed"))
        .collect::<Result<Vec<_>>>()?;
    let averages = spec
        .case_list()
        .iter()
        .map(|case| {
            let curves: Vec<KlCurve> = runs
                .iter()
                .map(|r| r.curve(case).expect("every run has every case").clone())
                .collect();
            average_curves(&curves)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        spec: spec.clone(),
        runs,
        averages,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// One four-urns run: raw tallies against the two-type fit.
pub fn run_four_urns_once(spec: &ExperimentSpec, run: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let seeds = RunSeeds::derive(spec, run);
    let truth = build_urn_truth(&spec.urns, seeds.truth)?;
    let urns = truth.num_urns();
    let cases = spec.case_list();
    let mut rng = SplitMix64::new(seeds.data);
    let mut tallies = vec![TallyVector::zeros(truth.colors()); urns];
    let mut markers = Vec::new();
    let grid = spec.grid();
    let mut points: Vec<Vec<(u64, f64)>> = vec![Vec::new(); cases.len()];
    let mut per_unit: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); urns]; cases.len()];
    let mut seen = 0u64;
    for &cp in &grid {
        while seen < cp {
            let s = draw_urn_sample(&truth, &mut rng);
            seen += 1;
            tallies[s.urn].add(s.color);
            if s.urn == 0 {
                markers.push(seen);
            }
        }
        let needs_em = cases.iter().any(|c| c != "raw");
        let em = if needs_em {
            Some(estimators::em_two_type(
                &tallies,
                &spec.estimator,
                seeds.em,
            )?)
        } else {
            None
        };
        for (ci, case) in cases.iter().enumerate() {
            let est = match case.as_str() {
                "raw" => estimators::raw_tally_estimate(&tallies, &spec.estimator),
                "ours" => estimators::readout(em.as_ref().expect("fitted"), spec.estimator.readout),
                "ours_hard" => estimators::readout(em.as_ref().expect("fitted"), Readout::Hard),
                other => return Err(Error::Config(format!("cases: unknown case '{other}'"))),
            };
            let mut total = 0.0;
            for (u, q) in est.iter().enumerate() {
                let kl = prob::kl_divergence(truth.urn_dist(u), q)?;
                per_unit[ci][u].push(kl);
                total += kl;
            }
            points[ci].push((cp, total));
        }
    }
    let curves = cases
        .iter()
        .zip(points)
        .zip(per_unit)
        .map(|((label, points), pu)| KlCurve {
            label: label.clone(),
            points,
            per_unit: Some(pu),
            markers: markers.clone(),
        })
        .collect();
    Ok(RunOutput {
        run,
        seeds,
        curves,
        traces: Vec::new(),
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

fn search_cfg(spec: &ExperimentSpec, mode: SearchMode) -> SearchConfig {
    SearchConfig {
        num_vars: spec.bits.num_vars(),
        groups: spec.bits.groups,
        group_size: spec.bits.group_size,
        mode,
        ..spec.search.clone()
    }
}

fn search_mode(case: &str) -> Option<SearchMode> {
    match case {
        "c1" => Some(SearchMode::Case1),
        "c12" => Some(SearchMode::Case12),
        _ => None,
    }
}

/// Candidate evaluations the spec's search cases would perform.
pub fn search_cost(spec: &ExperimentSpec) -> Result<u128> {
    let per_run_searches = match &spec.search_checkpoints {
        Some(s) => s.len(),
        None => spec.grid().len() - 1,
    } as u128;
    let mut total = 0u128;
    for case in spec.case_list() {
        if let Some(mode) = search_mode(&case) {
            let space = orbit_count(&search_cfg(spec, mode))? as u128;
            total += space * per_run_searches * spec.n_runs as u128;
        }
    }
    Ok(total)
}

fn check_search_cost(spec: &ExperimentSpec) -> Result<()> {
    let cost = search_cost(spec)?;
    if cost > EXPENSIVE_EVALUATIONS && !spec.allow_expensive {
        // rough single-core rate of the scorer
        let hours = cost as f64 / 3.0e6 / 3600.0;
        return Err(Error::Refused(format!(
            "search cases need {cost} candidate evaluations (about {hours:.1} core-hours); \
             pass allow_expensive to run them"
        )));
    }
    Ok(())
}

/// One bit-vector run: every requested case on one sample stream.
pub fn run_bitvectors_once(spec: &ExperimentSpec, run: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let seeds = RunSeeds::derive(spec, run);
    let truth = build_bitvector_truth(&spec.bits, seeds.truth)?;
    let joint = true_joint(&truth)?;
    let v = truth.num_vars();
    let g = &truth.hidden_grouping;
    let cfg = &spec.estimator;
    let cases = spec.case_list();
    let wants = |c: &str| cases.iter().any(|x| x == c);
    let truth_candidate = Candidate::from_truth(g, &truth.assignment);
    let search_at: Vec<u64> = spec
        .search_checkpoints
        .clone()
        .unwrap_or_else(|| spec.grid()[1..].to_vec());

    let mut rng = SplitMix64::new(seeds.data);
    let mut data: Vec<BitVector> = Vec::new();
    let mut ones = vec![0u64; v];
    let mut joint_tally = if wants("c0p") {
        Some(TallyVector::zeros(1usize << v))
    } else {
        None
    };
    let mut group_tallies = vec![TallyVector::zeros(1usize << g.group_size()); g.num_groups()];
    let mut best: Vec<Option<Candidate>> = vec![None; cases.len()];
    let mut traces: Vec<SearchTrace> = cases
        .iter()
        .filter(|c| search_mode(c).is_some())
        .map(|c| SearchTrace {
            case: c.clone(),
            points: Vec::new(),
        })
        .collect();
    let mut points: Vec<Vec<(u64, f64)>> = vec![Vec::new(); cases.len()];
    let uniform = Categorical::uniform(1usize << v);

    for &cp in &spec.grid() {
        while (data.len() as u64) < cp {
            let bv = draw_bitvector(&truth, &mut rng);
            for (var, o) in ones.iter_mut().enumerate() {
                *o += bv.get(var) as u64;
            }
            if let Some(t) = joint_tally.as_mut() {
                t.add(bv.code() as usize);
            }
            for (j, t) in group_tallies.iter_mut().enumerate() {
                t.add(g.project(bv.code(), j));
            }
            data.push(bv);
        }
        let n = data.len() as u64;
        for (ci, case) in cases.iter().enumerate() {
            let est = match case.as_str() {
                "c0" => {
                    let pairs: Vec<(u64, u64)> = ones.iter().map(|&o| (o, n)).collect();
                    prob::joint_from_independent_bits(&estimators::independent_bits_estimate(
                        &pairs, cfg,
                    )?)?
                }
                "c0p" => estimators::joint_dirichlet_estimate(
                    joint_tally.as_ref().expect("allocated for c0p"),
                    cfg,
                )?,
                "c13" => prob::joint_from_grouping(
                    g,
                    &estimators::raw_tally_estimate(&group_tallies, cfg),
                )?,
                "c123" => prob::joint_from_grouping(
                    g,
                    &GroupedEstimate::from_tallies(&group_tallies, cfg, true, seeds.em)?.dists,
                )?,
                other => {
                    let mode = search_mode(other)
                        .ok_or_else(|| Error::Config(format!("cases: unknown case '{other}'")))?;
                    if search_at.binary_search(&cp).is_ok() {
                        let scfg = search_cfg(spec, mode);
                        let top = search::search(&data, &scfg)?;
                        let winner = top.into_iter().next().expect("top_k >= 1");
                        let trace = traces
                            .iter_mut()
                            .find(|t| t.case == *other)
                            .expect("trace per search case");
                        trace.points.push(SearchTracePoint {
                            samples: cp,
                            rank: winner.rank,
                            log_score: winner.log_score,
                            candidate: winner.candidate.to_string(),
                            in_truth_orbit: winner.candidate.model_key(mode)
                                == truth_candidate.model_key(mode),
                        });
                        best[ci] = Some(winner.candidate);
                    }
                    match &best[ci] {
                        Some(c) => estimate_from_candidate(&data, c, cfg, seeds.em)?,
                        None => uniform.clone(),
                    }
                }
            };
            points[ci].push((cp, prob::kl_divergence(&joint, &est)?));
        }
    }
    let curves = cases
        .iter()
        .zip(points)
        .map(|(label, points)| KlCurve {
            label: label.clone(),
            points,
            per_unit: None,
            markers: Vec::new(),
        })
        .collect();
    Ok(RunOutput {
        run,
        seeds,
        curves,
        traces,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Hex FNV-1a of the spec's JSON form.
    pub spec_digest: String,
    pub kind: ExperimentKind,
    pub n_runs: usize,
    pub run_seeds: Vec<u64>,
    pub files: Vec<String>,
    pub wall_secs_total: f64,
    pub wall_secs_per_run: Vec<f64>,
}

/// Writes `curves.csv`, `totals.svg`, per-urn or trace extras, and
/// `manifest.json` into `dir`; returns the written paths.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut records: Vec<CurveRecord> = Vec::new();
    for r in &out.runs {
        for c in &r.curves {
            records.push(CurveRecord {
                run: Some(r.run),
                curve: c.clone(),
            });
        }
    }
    for c in &out.averages {
        records.push(CurveRecord {
            run: None,
            curve: c.clone(),
        });
    }
    let csv = dir.join("curves.csv");
    write_curves_csv(&records, &csv)?;
    files.push(csv);

    let title = match out.spec.kind {
        ExperimentKind::FourUrns => "Total error vs samples seen",
        ExperimentKind::BitVectors => "Error vs sample complexity",
    };
    let totals = dir.join("totals.svg");
    write_svg(
        &out.averages,
        &PlotOptions {
            log_y: out.spec.kind == ExperimentKind::BitVectors,
            title: format!("{title} (mean of {} runs)", out.runs.len()),
            ..Default::default()
        },
        &totals,
    )?;
    files.push(totals);
    match out.spec.kind {
        ExperimentKind::FourUrns => {
            let path = dir.join("per_urn_run0.svg");
            write_svg(
                &out.runs[0].curves,
                &PlotOptions {
                    per_unit: true,
                    title: "Error per urn, run 0 (markers: urn 1 draws)".into(),
                    ..Default::default()
                },
                &path,
            )?;
            files.push(path);
        }
        ExperimentKind::BitVectors => {
            if out.runs.iter().any(|r| !r.traces.is_empty()) {
                let traces: Vec<(usize, &Vec<SearchTrace>)> =
                    out.runs.iter().map(|r| (r.run, &r.traces)).collect();
                let path = dir.join("search_traces.json");
                let text = serde_json::to_string_pretty(&traces)? + "\n";
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                files.push(path);
            }
        }
    }

    let manifest_path = dir.join("manifest.json");
    let names = |p: &PathBuf| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let manifest = Manifest {
        spec_digest: format!("{:016x}", fnv1a64(out.spec.to_json()?.as_bytes())),
        kind: out.spec.kind,
        n_runs: out.runs.len(),
        run_seeds: out
            .runs
            .iter()
            .map(|r| run_seed(out.spec.base_seed, r.run))
            .collect(),
        files: files.iter().map(names).collect(),
        wall_secs_total: out.wall_secs,
        wall_secs_per_run: out.runs.iter().map(|r| r.wall_secs).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    files.push(manifest_path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::estimators::independent_bits_estimate;
    use crate::prob::kl_divergence;
    use crate::simulators::{BitVectorConfig, UrnConfig};

    fn urns_spec(n: u64, runs: usize) -> ExperimentSpec {
        ExperimentSpec::new(ExperimentKind::FourUrns, n, runs)
    }

    #[test]
    fn zero_samples_start_at_the_prior() {
        let spec = urns_spec(0, 1);
        let out = run_four_urns(&spec).unwrap();
        let truth = build_urn_truth(&spec.urns, RunSeeds::derive(&spec, 0).truth).unwrap();
        for c in &out.runs[0].curves {
            assert_eq!(c.points.len(), 1);
            let pu = c.per_unit.as_ref().unwrap();
            for u in 0..4 {
                let want = kl_divergence(truth.urn_dist(u), &Categorical::uniform(8)).unwrap();
                assert_abs_diff_eq!(pu[u][0], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn runs_are_reproducible_individually() {
        let mut spec = urns_spec(60, 3);
        spec.workers = 2;
        let all = run_four_urns(&spec).unwrap();
        let again = run_four_urns_once(&spec, 2).unwrap();
        assert_eq!(all.runs[2].curves, again.curves);
        assert_eq!(all.runs[2].seeds, again.seeds);
        spec.workers = 1;
        let serial = run_four_urns(&spec).unwrap();
        assert_eq!(serial.averages, all.averages);
    }

    #[test]
    fn markers_are_urn_one_draws() {
        let spec = urns_spec(400, 1);
        let out = run_four_urns(&spec).unwrap();
        let m = &out.runs[0].curves[0].markers;
        assert!(!m.is_empty() && m.len() < 40);
        assert!(m.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn identical_types_make_raw_and_ours_agree() {
        // balanced urns, so every urn's raw tally has ~500 samples at the end
        let p = Categorical::new(vec![0.3, 0.2, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05]).unwrap();
        let mut spec = urns_spec(2000, 50);
        spec.checkpoints = Some(vec![500, 2000]);
        spec.urns = UrnConfig {
            type_dists: Some(vec![p.clone(), p]),
            urn_weights: vec![0.25; 4],
            min_separation: 0.0,
            ..Default::default()
        };
        let out = run_four_urns(&spec).unwrap();
        let gap = |s| {
            out.average("raw").unwrap().at(s).unwrap() - out.average("ours").unwrap().at(s).unwrap()
        };
        assert!(gap(2000).abs() < 0.01, "gap {}", gap(2000));
        assert!(gap(2000).abs() < gap(500).abs());
    }

    #[test]
    fn independent_bits_truth_has_low_case0_floor() {
        // every type distribution is a product of per-bit Bernoullis
        let bern = |p: [f64; 3]| prob::joint_from_independent_bits(&p).unwrap();
        let mut spec = ExperimentSpec::new(ExperimentKind::BitVectors, 5000, 1);
        spec.cases = vec!["c0".into()];
        spec.checkpoints = Some(vec![5000]);
        spec.bits = BitVectorConfig {
            type_dists: Some(vec![bern([0.9, 0.2, 0.6]), bern([0.1, 0.7, 0.3])]),
            ..Default::default()
        };
        let out = run_bitvectors(&spec).unwrap();
        assert!(out.runs[0].curves[0].at(5000).unwrap() < 0.02);
        // the estimator itself is the Beta(1,1) mean
        assert_eq!(
            independent_bits_estimate(&[(3, 4)], &spec.estimator).unwrap(),
            vec![4.0 / 6.0]
        );
    }

    #[test]
    fn search_cases_trace_and_lock_in() {
        let mut spec = ExperimentSpec::new(ExperimentKind::BitVectors, 300, 1);
        spec.cases = vec!["c13".into(), "c1".into()];
        spec.bits = BitVectorConfig {
            groups: 2,
            ..Default::default()
        };
        spec.checkpoints = Some(vec![10, 50, 100, 200, 300]);
        let out = run_bitvectors(&spec).unwrap();
        let r = &out.runs[0];
        let trace = r.trace("c1").unwrap();
        assert_eq!(trace.points.len(), 5);
        let lock = trace.lock_in().expect("locks in by 300 samples");
        let c13 = r.curve("c13").unwrap();
        let c1 = r.curve("c1").unwrap();
        for &(s, kl) in c1.points.iter().filter(|p| p.0 >= lock) {
            assert_abs_diff_eq!(kl, c13.at(s).unwrap(), epsilon = 1e-9);
        }
        // before any search the estimate is uniform
        assert_eq!(c1.points[0], c13.points[0]);
    }

    #[test]
    fn full_scale_c12_is_refused() {
        let mut spec = ExperimentSpec::new(ExperimentKind::BitVectors, 1000, 1);
        spec.cases = vec!["c12".into()];
        match run_bitvectors(&spec) {
            Err(Error::Refused(msg)) => assert!(msg.contains("candidate evaluations")),
            other => panic!("expected refusal, got {other:?}"),
        }
        assert!(search_cost(&spec).unwrap() > EXPENSIVE_EVALUATIONS);
    }

    #[test]
    fn shared_truth_mode() {
        let mut spec = urns_spec(5, 2);
        spec.resample_truth = false;
        assert_eq!(
            RunSeeds::derive(&spec, 0).truth,
            RunSeeds::derive(&spec, 1).truth
        );
        assert_ne!(
            RunSeeds::derive(&spec, 0).data,
            RunSeeds::derive(&spec, 1).data
        );
        spec.resample_truth = true;
        assert_ne!(
            RunSeeds::derive(&spec, 0).truth,
            RunSeeds::derive(&spec, 1).truth
        );
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_four_urns(&urns_spec(30, 2)).unwrap();
        let files = write_outputs(&out, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let recs = super::super::curves::read_curves_csv(&dir.path().join("curves.csv")).unwrap();
        assert_eq!(recs.len(), 2 * 2 + 2);
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.run_seeds, vec![run_seed(0, 0), run_seed(0, 1)]);
    }
}
