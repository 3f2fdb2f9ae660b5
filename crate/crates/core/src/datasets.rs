// SPDX-License-Identifier: Apache-2.0

//! Samples, the labelled/unlabelled/validation triple and pseudo-label
//! admissions.
//!
//! Two on-disk table formats are supported:
//!
//! - CSV with header `id,label,f0,...,f{d-1}`. An empty label field marks an
//!   unlabelled row.
//! - Binary: magic `ILE1`, then little-endian `u32` count, `u32` d, `u32` C,
//!   followed by `count` records of `u32` id, `i32` label (`-1` = absent) and
//!   `d` `f32` features.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub type SampleId = u32;

pub const BINARY_MAGIC: &[u8; 4] = b"ILE1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Clean,
    Pseudo { iteration: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub features: Vec<f64>,
    /// Hidden ground truth. Only read for reporting addition accuracy.
    pub true_label: Option<usize>,
    pub assigned_label: Option<usize>,
    pub provenance: Provenance,
}

impl Sample {
    /// A clean sample whose label is both known and assigned.
    pub fn labelled(id: SampleId, features: Vec<f64>, label: usize) -> Self {
        Sample {
            id,
            features,
            true_label: Some(label),
            assigned_label: Some(label),
            provenance: Provenance::Clean,
        }
    }

    pub fn unlabelled(id: SampleId, features: Vec<f64>) -> Self {
        Sample {
            id,
            features,
            true_label: None,
            assigned_label: None,
            provenance: Provenance::Clean,
        }
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(self.provenance, Provenance::Pseudo { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Binary,
}

impl TableFormat {
    /// Guess from the file extension; anything other than `.bin`/`.ile` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("ile") => TableFormat::Binary,
            _ => TableFormat::Csv,
        }
    }
}

/// A loaded sample table.
#[derive(Debug, Clone)]
pub struct Table {
    pub samples: Vec<Sample>,
    pub dim: usize,
    /// Declared class count (binary) or one past the largest label (CSV).
    pub classes: usize,
}

pub fn load_table(path: &Path, format: TableFormat) -> Result<Table> {
    match format {
        TableFormat::Csv => load_csv(path),
        TableFormat::Binary => load_binary(path),
    }
}

fn check_unique(samples: &[Sample]) -> Result<()> {
    let mut seen = HashSet::with_capacity(samples.len());
    for s in samples {
        if !seen.insert(s.id) {
            return Err(Error::DuplicateId(s.id));
        }
    }
    Ok(())
}

fn infer_classes(samples: &[Sample]) -> usize {
    samples
        .iter()
        .filter_map(|s| s.true_label)
        .max()
        .map_or(0, |m| m + 1)
}

fn load_csv(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(BufReader::new(file))
}

/// Parse CSV table text. Split out from [`load_table`] for in-memory use.
pub fn parse_csv<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with `id,label`".into(),
        });
    }
    let dim = headers.len() - 2;

    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        if record.len() != dim + 2 {
            return Err(Error::Dimension {
                expected: dim,
                found: record.len().saturating_sub(2),
            });
        }
        let id: SampleId = record[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid id `{}`", &record[0])))?;
        let label = match record[1].trim() {
            "" => None,
            raw => Some(
                raw.parse::<usize>()
                    .map_err(|_| bad(format!("invalid label `{raw}`")))?,
            ),
        };
        let features = (0..dim)
            .map(|j| {
                let raw = record[j + 2].trim();
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("invalid feature `{raw}` in column f{j}")))
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            id,
            features,
            true_label: label,
            assigned_label: label,
            provenance: Provenance::Clean,
        });
    }
    check_unique(&samples)?;
    let classes = infer_classes(&samples);
    Ok(Table {
        samples,
        dim,
        classes,
    })
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn load_binary(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_binary(BufReader::new(file))
}

pub fn parse_binary<R: Read>(mut r: R) -> Result<Table> {
    let truncated = |line: usize| {
        move |e: std::io::Error| Error::Parse {
            line,
            message: format!("truncated input: {e}"),
        }
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated(0))?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Parse {
            line: 0,
            message: "bad magic, expected ILE1".into(),
        });
    }
    let count = read_u32(&mut r).map_err(truncated(0))? as usize;
    let dim = read_u32(&mut r).map_err(truncated(0))? as usize;
    let classes = read_u32(&mut r).map_err(truncated(0))? as usize;

    let mut samples = Vec::with_capacity(count.min(1 << 20));
    let mut buf = [0u8; 4];
    for rec in 1..=count {
        let id = read_u32(&mut r).map_err(truncated(rec))?;
        r.read_exact(&mut buf).map_err(truncated(rec))?;
        let raw_label = i32::from_le_bytes(buf);
        let label = match raw_label {
            -1 => None,
            l if l >= 0 && (l as usize) < classes => Some(l as usize),
            l => {
                return Err(Error::Parse {
                    line: rec,
                    message: format!("label {l} outside [0, {classes})"),
                })
            }
        };
        let mut features = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut buf).map_err(truncated(rec))?;
            features.push(f32::from_le_bytes(buf) as f64);
        }
        samples.push(Sample {
            id,
            features,
            true_label: label,
            assigned_label: label,
            provenance: Provenance::Clean,
        });
    }
    check_unique(&samples)?;
    Ok(Table {
        samples,
        dim,
        classes,
    })
}

fn uniform_dim(samples: &[Sample]) -> Result<usize> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: s.features.len(),
            });
        }
    }
    Ok(dim)
}

/// Write samples as CSV. The label column carries the assigned label.
pub fn write_csv<W: Write>(writer: W, samples: &[Sample]) -> Result<()> {
    let dim = uniform_dim(samples)?;
    let mut wtr = csv::Writer::from_writer(writer);
    let werr = |e: csv::Error| Error::Report(e.to_string());
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    wtr.write_record(&header).map_err(werr)?;
    for s in samples {
        let mut row = Vec::with_capacity(dim + 2);
        row.push(s.id.to_string());
        row.push(s.assigned_label.map(|l| l.to_string()).unwrap_or_default());
        row.extend(s.features.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(werr)?;
    }
    wtr.flush().map_err(|e| Error::Report(e.to_string()))?;
    Ok(())
}

pub fn write_binary<W: Write>(writer: W, samples: &[Sample], classes: usize) -> Result<()> {
    let dim = uniform_dim(samples)?;
    let mut w = BufWriter::new(writer);
    let werr = |e: std::io::Error| Error::Report(e.to_string());
    w.write_all(BINARY_MAGIC).map_err(werr)?;
    for v in [samples.len(), dim, classes] {
        w.write_all(&(v as u32).to_le_bytes()).map_err(werr)?;
    }
    for s in samples {
        w.write_all(&s.id.to_le_bytes()).map_err(werr)?;
        let label = s.assigned_label.map_or(-1, |l| l as i32);
        w.write_all(&label.to_le_bytes()).map_err(werr)?;
        for &f in &s.features {
            w.write_all(&(f as f32).to_le_bytes()).map_err(werr)?;
        }
    }
    w.flush().map_err(werr)?;
    Ok(())
}

/// One pseudo-label to admit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub id: SampleId,
    pub label: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub iteration: u32,
    pub admitted_ids: Vec<SampleId>,
    pub assigned_labels: Vec<usize>,
    pub confidences: Vec<f64>,
    /// Admissions matching hidden truth, when every admitted sample has one.
    pub correct: Option<usize>,
    pub addition_accuracy: Option<f64>,
}

impl AdmissionRecord {
    pub fn len(&self) -> usize {
        self.admitted_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.admitted_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTriple {
    pub labelled: Vec<Sample>,
    pub unlabelled: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub classes: usize,
    pub dim: usize,
}

impl DatasetTriple {
    pub fn total(&self) -> usize {
        self.labelled.len() + self.unlabelled.len() + self.validation.len()
    }

    /// Clean (never pseudo-labelled) members of the labelled set.
    pub fn clean_labelled(&self) -> Vec<Sample> {
        self.labelled
            .iter()
            .filter(|s| !s.is_pseudo())
            .cloned()
            .collect()
    }

    /// Verify disjointness and label-presence rules.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.total());
        for s in self
            .labelled
            .iter()
            .chain(&self.unlabelled)
            .chain(&self.validation)
        {
            if !seen.insert(s.id) {
                return Err(Error::DuplicateId(s.id));
            }
        }
        for s in self.labelled.iter().chain(&self.validation) {
            match (s.assigned_label, s.provenance, s.true_label) {
                (None, ..) => {
                    return Err(Error::Admission(format!(
                        "labelled sample {} has no assigned label",
                        s.id
                    )))
                }
                (Some(a), Provenance::Clean, Some(t)) if a != t => {
                    return Err(Error::Admission(format!(
                        "clean sample {} carries label {a} but truth is {t}",
                        s.id
                    )))
                }
                _ => {}
            }
        }
        if let Some(s) = self.unlabelled.iter().find(|s| s.assigned_label.is_some()) {
            return Err(Error::Admission(format!(
                "unlabelled sample {} has an assigned label",
                s.id
            )));
        }
        Ok(())
    }

    /// Move admitted samples from the unlabelled pool into the labelled set.
    /// Either every admission is applied or none is.
    pub fn admit(&mut self, admissions: &[Admission], iteration: u32) -> Result<AdmissionRecord> {
        if iteration == 0 {
            return Err(Error::Admission("iteration must be positive".into()));
        }
        let index: HashMap<SampleId, usize> = self
            .unlabelled
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id, i))
            .collect();
        let mut taken = HashSet::with_capacity(admissions.len());
        for adm in admissions {
            if !index.contains_key(&adm.id) {
                return Err(Error::Admission(format!(
                    "sample {} is not in the unlabelled pool",
                    adm.id
                )));
            }
            if !taken.insert(adm.id) {
                return Err(Error::Admission(format!(
                    "sample {} admitted twice",
                    adm.id
                )));
            }
            if adm.label >= self.classes {
                return Err(Error::Admission(format!(
                    "label {} outside [0, {})",
                    adm.label, self.classes
                )));
            }
        }

        let mut correct = Some(0usize);
        for adm in admissions {
            let mut sample = self.unlabelled[index[&adm.id]].clone();
            correct = match (correct, sample.true_label) {
                (Some(c), Some(t)) => Some(c + usize::from(t == adm.label)),
                _ => None,
            };
            sample.assigned_label = Some(adm.label);
            sample.provenance = Provenance::Pseudo { iteration };
            self.labelled.push(sample);
        }
        self.unlabelled.retain(|s| !taken.contains(&s.id));

        let addition_accuracy = match correct {
            Some(c) if !admissions.is_empty() => Some(c as f64 / admissions.len() as f64),
            _ => None,
        };
        Ok(AdmissionRecord {
            iteration,
            admitted_ids: admissions.iter().map(|a| a.id).collect(),
            assigned_labels: admissions.iter().map(|a| a.label).collect(),
            confidences: admissions.iter().map(|a| a.confidence).collect(),
            correct: correct.filter(|_| !admissions.is_empty()),
            addition_accuracy,
        })
    }

    /// Return every pseudo-labelled sample to the unlabelled pool, stripping
    /// its assigned label. Returns how many were released.
    pub fn release_pseudo(&mut self) -> usize {
        let (pseudo, clean): (Vec<_>, Vec<_>) =
            self.labelled.drain(..).partition(Sample::is_pseudo);
        self.labelled = clean;
        let released = pseudo.len();
        for mut s in pseudo {
            s.assigned_label = None;
            s.provenance = Provenance::Clean;
            self.unlabelled.push(s);
        }
        self.unlabelled.sort_by_key(|s| s.id);
        released
    }
}

/// Build the labelled/unlabelled/validation triple.
///
/// `labelled_per_class` samples of every class in `[0, classes)` are drawn
/// uniformly at random into the labelled set, `validation_count` samples are
/// drawn uniformly from what remains, and the rest form the unlabelled pool
/// with assigned labels stripped. Samples that arrive without a label go
/// straight to the unlabelled pool. The result depends only on the sample
/// set and `seed`, not on input order.
pub fn split(
    samples: &[Sample],
    classes: usize,
    labelled_per_class: usize,
    validation_count: usize,
    seed: u64,
) -> Result<DatasetTriple> {
    check_unique(samples)?;
    let dim = uniform_dim(samples)?;
    let mut sorted: Vec<Sample> = samples.to_vec();
    sorted.sort_by_key(|s| s.id);

    let mut by_class: Vec<Vec<Sample>> = vec![Vec::new(); classes];
    let mut unlabelled = Vec::new();
    for s in sorted {
        match s.true_label {
            Some(l) if l < classes => by_class[l].push(s),
            Some(l) => {
                return Err(Error::Config(format!(
                    "sample {} has label {l} but only {classes} classes",
                    s.id
                )))
            }
            None => unlabelled.push(s),
        }
    }

    let mut rng = seed::rng(seed::derive(seed, &[seed::tag::SPLIT]));
    let mut labelled = Vec::with_capacity(classes * labelled_per_class);
    let mut rest = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < labelled_per_class {
            return Err(Error::InsufficientClass {
                class,
                available: members.len(),
                required: labelled_per_class,
            });
        }
        members.shuffle(&mut rng);
        rest.extend(members.split_off(labelled_per_class));
        labelled.extend(members);
    }

    if rest.len() < validation_count {
        return Err(Error::Config(format!(
            "validation_count {validation_count} exceeds the {} samples left after the labelled draw",
            rest.len()
        )));
    }
    rest.sort_by_key(|s| s.id);
    rest.shuffle(&mut rng);
    let pool = rest.split_off(validation_count);
    let validation = rest;
    for mut s in pool {
        s.assigned_label = None;
        unlabelled.push(s);
    }
    unlabelled.sort_by_key(|s| s.id);

    Ok(DatasetTriple {
        labelled,
        unlabelled,
        validation,
        classes,
        dim,
    })
}
