//! Model files (pretty JSON) and datasets (JSON lines).
//!
//! Urn, color and variable indices are 1-based in files and 0-based in memory.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::truth::{BitVector, BitVectorTruth, TypeLabel, UrnSample, UrnTruth};
use crate::error::{Error, Result};
use crate::prob::{Categorical, Grouping};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Urns(UrnTruth),
    Bits(BitVectorTruth),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Urns,
    Bits,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    version: u32,
    kind: ModelKind,
    type_dists: Vec<Categorical>,
    assignment: Vec<TypeLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    urn_weights: Option<Categorical>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grouping: Option<Vec<Vec<usize>>>,
}

impl ModelFile {
    fn to_raw(&self) -> RawModel {
        match self {
            ModelFile::Urns(t) => RawModel {
                version: MODEL_FORMAT_VERSION,
                kind: ModelKind::Urns,
                type_dists: t.type_dists.clone(),
                assignment: t.assignment.clone(),
                urn_weights: Some(t.urn_weights.clone()),
                grouping: None,
            },
            ModelFile::Bits(t) => RawModel {
                version: MODEL_FORMAT_VERSION,
                kind: ModelKind::Bits,
                type_dists: t.type_dists.clone(),
                assignment: t.assignment.clone(),
                urn_weights: None,
                grouping: Some(
                    t.hidden_grouping
                        .groups()
                        .iter()
                        .map(|g| g.iter().map(|v| v + 1).collect())
                        .collect(),
                ),
            },
        }
    }

    fn from_raw(raw: RawModel) -> std::result::Result<Self, String> {
        if raw.version != MODEL_FORMAT_VERSION {
            return Err(format!(
                "version: unsupported model version {}",
                raw.version
            ));
        }
        if raw.type_dists.len() != 2 {
            return Err("type_dists: expected exactly two distributions".into());
        }
        if raw.type_dists[0].len() != raw.type_dists[1].len() {
            return Err("type_dists: distributions differ in length".into());
        }
        match raw.kind {
            ModelKind::Urns => {
                let urn_weights = raw
                    .urn_weights
                    .ok_or("urn_weights: missing for kind urns")?;
                if urn_weights.len() != raw.assignment.len() {
                    return Err("urn_weights: length differs from assignment".into());
                }
                Ok(ModelFile::Urns(UrnTruth {
                    type_dists: raw.type_dists,
                    assignment: raw.assignment,
                    urn_weights,
                }))
            }
            ModelKind::Bits => {
                let groups = raw.grouping.ok_or("grouping: missing for kind bits")?;
                let groups = groups
                    .into_iter()
                    .map(|g| {
                        g.into_iter()
                            .map(|v| v.checked_sub(1).ok_or("grouping: indices are 1-based"))
                            .collect::<std::result::Result<Vec<_>, _>>()
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let grouping = Grouping::new(groups).map_err(|e| format!("grouping: {e}"))?;
                if grouping.num_groups() != raw.assignment.len() {
                    return Err("assignment: length differs from number of groups".into());
                }
                if raw.type_dists[0].len() != 1 << grouping.group_size() {
                    return Err("type_dists: length must be 2^group_size".into());
                }
                if grouping.num_vars() > BitVector::MAX_LEN {
                    return Err("grouping: more than 32 variables".into());
                }
                Ok(ModelFile::Bits(BitVectorTruth {
                    hidden_grouping: grouping,
                    type_dists: raw.type_dists,
                    assignment: raw.assignment,
                }))
            }
        }
    }
}

pub fn write_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(&model.to_raw())?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    ModelFile::from_raw(raw).map_err(|message| Error::Parse {
        path: path.into(),
        line: 1,
        message,
    })
}

/// A sample type with a one-line JSON representation.
pub trait Record: Sized {
    fn to_line(&self) -> String;
    fn from_line(line: &str) -> std::result::Result<Self, String>;
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UrnLine {
    urn: usize,
    color: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BitsLine<'a> {
    bits: &'a str,
}

impl Record for UrnSample {
    fn to_line(&self) -> String {
        serde_json::to_string(&UrnLine {
            urn: self.urn + 1,
            color: self.color + 1,
        })
        .expect("plain struct serializes")
    }

    fn from_line(line: &str) -> std::result::Result<Self, String> {
        let raw: UrnLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if raw.urn == 0 || raw.color == 0 {
            return Err("urn and color are 1-based".into());
        }
        Ok(UrnSample {
            urn: raw.urn - 1,
            color: raw.color - 1,
        })
    }
}

impl Record for BitVector {
    fn to_line(&self) -> String {
        let bits = self.to_string();
        serde_json::to_string(&BitsLine { bits: &bits }).expect("plain struct serializes")
    }

    fn from_line(line: &str) -> std::result::Result<Self, String> {
        let raw: BitsLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        raw.bits.parse().map_err(|e: Error| format!("bits: {e}"))
    }
}

pub fn write_dataset<R: Record>(path: impl AsRef<Path>, samples: &[R]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        writeln!(out, "{}", s.to_line()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads JSON lines, skipping blank ones. Errors name the 1-based line.
pub fn read_dataset<R: Record>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = R::from_line(&line).map_err(|message| Error::Parse {
            path: path.into(),
            line: i + 1,
            message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// A dataset whose kind is detected from its first record.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Empty,
    Urns(Vec<UrnSample>),
    Bits(Vec<BitVector>),
}

impl Dataset {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match text.lines().find(|l| !l.trim().is_empty()) {
            None => Ok(Dataset::Empty),
            Some(first) if first.contains("\"bits\"") => Ok(Dataset::Bits(read_dataset(path)?)),
            Some(_) => Ok(Dataset::Urns(read_dataset(path)?)),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Empty => 0,
            Dataset::Urns(s) => s.len(),
            Dataset::Bits(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
