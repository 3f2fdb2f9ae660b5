// SPDX-License-Identifier: Apache-2.0

//! Run artifacts: `metrics.csv` (one row per iteration) and `report.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::cycle::RunReport;
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.json";

pub const METRICS_COLUMNS: &[&str] = &[
    "repeat",
    "iteration",
    "dl_size",
    "du_size",
    "added_count",
    "released_count",
    "unscorable_count",
    "addition_accuracy",
    "cumulative_addition_accuracy",
    "val_error",
    "threshold",
    "wall_time",
];

/// JSON has no infinities; `+inf` is written as the string `"inf"`.
pub mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!(
                    "expected number, got `{other}`"
                ))),
            },
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write one CSV row per iteration of every run.
pub fn write_metrics<W: Write>(writer: W, runs: &[RunReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let werr = |e: csv::Error| Error::Report(e.to_string());
    wtr.write_record(METRICS_COLUMNS).map_err(werr)?;
    for (repeat, run) in runs.iter().enumerate() {
        for r in &run.records {
            wtr.write_record([
                repeat.to_string(),
                r.iteration.to_string(),
                r.dl_size.to_string(),
                r.du_size.to_string(),
                r.added_count.to_string(),
                r.released_count.to_string(),
                r.unscorable_count.to_string(),
                opt(r.addition_accuracy),
                opt(r.cumulative_addition_accuracy),
                opt(r.val_error),
                r.threshold.to_string(),
                format!("{:.6}", r.wall_time),
            ])
            .map_err(werr)?;
        }
    }
    wtr.flush().map_err(|e| Error::Report(e.to_string()))
}

pub fn write_metrics_file(path: &Path, runs: &[RunReport]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(BufWriter::new(file), runs)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Report(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Report(format!("{}: {e}", path.display())))
}
