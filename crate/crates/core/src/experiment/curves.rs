//! KL-vs-samples curves: averaging and the CSV form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// KL error of one estimator as samples accumulate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlCurve {
    pub label: String,
    /// `(samples seen, KL)`, strictly increasing in samples.
    pub points: Vec<(u64, f64)>,
    /// Per-unit sub-curves on the same grid (one per urn).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_unit: Option<Vec<Vec<f64>>>,
    /// Sample numbers worth marking, e.g. the draws from urn 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub markers: Vec<u64>,
}

impl KlCurve {
    pub fn new(label: impl Into<String>) -> Self {
        KlCurve {
            label: label.into(),
            points: Vec::new(),
            per_unit: None,
            markers: Vec::new(),
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = u64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    /// KL at exactly `samples`, if that checkpoint exists.
    pub fn at(&self, samples: u64) -> Option<f64> {
        self.points
            .binary_search_by_key(&samples, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }

    /// Sub-curve `unit` as points.
    pub fn unit_curve(&self, unit: usize) -> Option<Vec<(u64, f64)>> {
        let pu = self.per_unit.as_ref()?;
        Some(self.samples().zip(pu.get(unit)?.iter().copied()).collect())
    }
}

/// Pointwise mean. An infinite point makes the mean infinite. Markers are
/// per-run and are dropped.
pub fn average_curves(curves: &[KlCurve]) -> Result<KlCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::contract("cannot average zero curves"))?;
    for c in curves {
        if !c.samples().eq(first.samples()) {
            return Err(Error::contract(format!(
                "checkpoint grid of '{}' differs from '{}'",
                c.label, first.label
            )));
        }
        let units = |c: &KlCurve| c.per_unit.as_ref().map(Vec::len);
        if units(c) != units(first) {
            return Err(Error::contract("per-unit breakdowns differ"));
        }
    }
    let n = curves.len() as f64;
    let points = first
        .points
        .iter()
        .enumerate()
        .map(|(i, &(s, _))| (s, curves.iter().map(|c| c.points[i].1).sum::<f64>() / n))
        .collect();
    let per_unit = first.per_unit.as_ref().map(|pu| {
        (0..pu.len())
            .map(|u| {
                (0..first.points.len())
                    .map(|i| {
                        curves
                            .iter()
                            .map(|c| c.per_unit.as_ref().expect("checked")[u][i])
                            .sum::<f64>()
                            / n
                    })
                    .collect()
            })
            .collect()
    });
    Ok(KlCurve {
        label: first.label.clone(),
        points,
        per_unit,
        markers: Vec::new(),
    })
}

/// A curve tagged with its run (`None` for an average).
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRecord {
    pub run: Option<usize>,
    pub curve: KlCurve,
}

pub const CSV_HEADER: &str = "case,run,samples,kl,urn";

/// CSV text: totals have an empty `urn`, per-urn rows a 1-based urn, and
/// marker rows an empty `kl`. Averages use `mean` as the run.
pub fn curves_to_csv(records: &[CurveRecord]) -> Result<String> {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let label = &r.curve.label;
        if label.is_empty() || label.contains([',', '\n', '"']) {
            return Err(Error::Config(format!(
                "curve label {label:?} is not CSV-safe"
            )));
        }
        let run = r.run.map_or_else(|| "mean".to_string(), |i| i.to_string());
        for &(s, kl) in &r.curve.points {
            writeln!(out, "{label},{run},{s},{kl},").expect("writing to a String");
        }
        if let Some(pu) = &r.curve.per_unit {
            for (u, vals) in pu.iter().enumerate() {
                for (&(s, _), kl) in r.curve.points.iter().zip(vals) {
                    writeln!(out, "{label},{run},{s},{kl},{}", u + 1).expect("writing to a String");
                }
            }
        }
        for m in &r.curve.markers {
            writeln!(out, "{label},{run},{m},,1").expect("writing to a String");
        }
    }
    Ok(out)
}

pub fn write_curves_csv(records: &[CurveRecord], path: &Path) -> Result<()> {
    std::fs::write(path, curves_to_csv(records)?).map_err(|e| Error::io(path, e))
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curves_csv(&text).map_err(|(line, message)| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    })
}

/// Parses [`curves_to_csv`] output; errors carry the 1-based line number.
pub fn parse_curves_csv(text: &str) -> std::result::Result<Vec<CurveRecord>, (usize, String)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err((1, format!("expected header '{CSV_HEADER}'"))),
    }
    let mut records: Vec<CurveRecord> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err((lineno, format!("expected 5 fields, found {}", f.len())));
        }
        let run = match f[1] {
            "mean" => None,
            s => Some(
                s.parse::<usize>()
                    .map_err(|e| (lineno, format!("run: {e}")))?,
            ),
        };
        let samples: u64 = f[2]
            .parse()
            .map_err(|e| (lineno, format!("samples: {e}")))?;
        let urn: Option<usize> = match f[4] {
            "" => None,
            s => Some(s.parse().map_err(|e| (lineno, format!("urn: {e}")))?),
        };
        let kl: Option<f64> = match f[3] {
            "" => None,
            s => Some(s.parse().map_err(|e| (lineno, format!("kl: {e}")))?),
        };
        let same = records
            .last()
            .is_some_and(|r| r.curve.label == f[0] && r.run == run);
        if !same {
            records.push(CurveRecord {
                run,
                curve: KlCurve::new(f[0]),
            });
        }
        let curve = &mut records.last_mut().expect("pushed above").curve;
        match (kl, urn) {
            (Some(kl), None) => {
                if curve.points.last().is_some_and(|p| p.0 >= samples) {
                    return Err((lineno, "samples must increase".into()));
                }
                curve.points.push((samples, kl));
            }
            (Some(kl), Some(u)) => {
                let idx = curve
                    .points
                    .binary_search_by_key(&samples, |p| p.0)
                    .map_err(|_| (lineno, format!("urn row at unknown checkpoint {samples}")))?;
                if u == 0 {
                    return Err((lineno, "urn: must be 1-based".into()));
                }
                let len = curve.points.len();
                let pu = curve.per_unit.get_or_insert_with(Vec::new);
                while pu.len() < u {
                    pu.push(vec![f64::NAN; len]);
                }
                pu[u - 1][idx] = kl;
            }
            (None, Some(_)) => curve.markers.push(samples),
            (None, None) => return Err((lineno, "kl: empty on a total row".into())),
        }
    }
    for r in &records {
        if let Some(pu) = &r.curve.per_unit {
            if pu.iter().flatten().any(|x| x.is_nan()) {
                return Err((
                    0,
                    format!("incomplete per-urn rows for '{}'", r.curve.label),
                ));
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::rng::SplitMix64;

    fn constant(label: &str, v: f64) -> KlCurve {
        KlCurve {
            label: label.into(),
            points: (0..5).map(|s| (s, v)).collect(),
            per_unit: None,
            markers: vec![],
        }
    }

    #[test]
    fn average_of_one_is_itself() {
        let c = constant("x", 0.7);
        assert_eq!(average_curves(std::slice::from_ref(&c)).unwrap(), c);
    }

    #[test]
    fn average_of_two_constants() {
        let avg = average_curves(&[constant("x", 0.2), constant("x", 0.4)]).unwrap();
        for (_, kl) in avg.points {
            assert_abs_diff_eq!(kl, 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn average_matches_streaming_mean() {
        let mut rng = SplitMix64::new(77);
        let curves: Vec<KlCurve> = (0..100)
            .map(|_| KlCurve {
                label: "r".into(),
                points: (0..20).map(|s| (s, rng.next_f64() * 3.0)).collect(),
                per_unit: None,
                markers: vec![],
            })
            .collect();
        let avg = average_curves(&curves).unwrap();
        for i in 0..20 {
            let mut mean = 0.0;
            for (k, c) in curves.iter().enumerate() {
                mean += (c.points[i].1 - mean) / (k + 1) as f64;
            }
            assert_abs_diff_eq!(avg.points[i].1, mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn infinity_propagates() {
        let mut a = constant("x", 0.1);
        a.points[2].1 = f64::INFINITY;
        let avg = average_curves(&[a, constant("x", 0.1)]).unwrap();
        assert!(avg.points[2].1.is_infinite());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let mut b = constant("x", 0.1);
        b.points[1].0 = 9;
        assert!(matches!(
            average_curves(&[constant("x", 0.1), b]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(curves_to_csv(&[]).unwrap(), format!("{CSV_HEADER}\n"));
        assert!(parse_curves_csv(&curves_to_csv(&[]).unwrap())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = SplitMix64::new(4);
        let mut ours = KlCurve::new("ours");
        ours.points = vec![(0, 1.0 / 3.0), (1, f64::INFINITY), (10, rng.next_f64())];
        ours.per_unit = Some(
            (0..4)
                .map(|_| (0..3).map(|_| rng.next_f64()).collect())
                .collect(),
        );
        ours.markers = vec![1, 7];
        let records = vec![
            CurveRecord {
                run: Some(0),
                curve: ours.clone(),
            },
            CurveRecord {
                run: Some(1),
                curve: constant("raw", 0.25),
            },
            CurveRecord {
                run: None,
                curve: ours,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_curves_csv(&records, &path).unwrap();
        assert_eq!(read_curves_csv(&path).unwrap(), records);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let text = format!("{CSV_HEADER}\nraw,0,1,0.5,\nraw,0,x,0.5,\n");
        let (line, msg) = parse_curves_csv(&text).unwrap_err();
        assert_eq!(line, 3);
        assert!(msg.starts_with("samples"));
    }
}
