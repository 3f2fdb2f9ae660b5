// SPDX-License-Identifier: Apache-2.0

//! Run configuration file (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ile::cycle::{
    ClassifierConfig, ConfidenceConfig, LoopConfig, ScheduleConfig, SplitConfig, ThresholdConfig,
};
use ile::datasets::{self, Sample, TableFormat};
use ile::synth::SynthSpec;
use ile::AugmentationPlan;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A CSV or binary table.
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<TableFormat>,
    },
    Synth(SynthSpec),
}

/// Relative paths in a config file resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitConfig,
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub augmentations: AugmentationPlan,
    #[serde(default)]
    pub confidence: ConfidenceConfig,
    #[serde(default)]
    pub threshold: ThresholdConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Loaded samples plus their class count.
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: usize,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        config.loop_config().validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let DataSource::File { path: data, .. } = &mut config.data {
            resolve(data);
        }
        if let Some(out) = &mut config.output_dir {
            resolve(out);
        }
        Ok(config)
    }

    #[cfg(test)]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            split: self.split.clone(),
            classifier: self.classifier.clone(),
            augmentations: self.augmentations.clone(),
            confidence: self.confidence,
            threshold: self.threshold,
            schedule: self.schedule,
        }
    }

    pub fn load_data(&self) -> Result<Dataset, CliError> {
        match &self.data {
            DataSource::File { path, format } => {
                let format = format.unwrap_or_else(|| TableFormat::from_path(path));
                let table = datasets::load_table(path, format)?;
                Ok(Dataset {
                    samples: table.samples,
                    classes: table.classes,
                })
            }
            DataSource::Synth(spec) => Ok(Dataset {
                samples: spec.generate()?,
                classes: spec.classes,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
        "data": {"synth": {"kind": "blobs", "classes": 3, "per_class": 20, "noise": 0.5, "seed": 2}},
        "split": {"labelled_per_class": 4, "validation_count": 10},
        "classifier": {
            "architecture": {"kind": "mlp", "hidden_units": 8},
            "train": {"epochs": 10, "learning_rate": 0.05, "batch_size": 16, "l2": 0.0, "early_stop_patience": 3}
        },
        "augmentations": [{"kind": "identity"}, {"kind": "gaussian_jitter", "sigma": 0.2}],
        "confidence": {"weights": "calibrate", "combine": {"kind": "paper_literal", "epsilon": 1e-6}, "std_mode": "sample"},
        "threshold": {"target_accuracy": 0.95, "refresh": "freeze_after_first"},
        "schedule": {"max_iterations": 4, "patience": 1, "repeat_count": 2, "rescore_pseudo": true},
        "seed": 9,
        "output_dir": "out"
    }"#;

    #[test]
    fn round_trip_is_identity() {
        let a = RunConfig::from_json(FULL).unwrap();
        let b = RunConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_json(
            r#"{"data": {"file": {"path": "x.csv"}},
                "split": {"labelled_per_class": 1, "validation_count": 0},
                "classifier": {"architecture": {"kind": "softmax_regression"}}}"#,
        )
        .unwrap();
        assert_eq!(c.threshold.target_accuracy, 0.99);
        assert_eq!(c.schedule.max_iterations, 25);
        assert_eq!(c.schedule.patience, 2);
        assert_eq!(c.augmentations.len(), 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = FULL.replace("\"seed\": 9", "\"seed\": 9, \"sed\": 1");
        assert!(matches!(
            RunConfig::from_json(&bad),
            Err(CliError::Usage(_))
        ));
        let nested = FULL.replace("\"patience\": 1", "\"patiense\": 1");
        assert!(RunConfig::from_json(&nested).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = FULL.replace("\"target_accuracy\": 0.95", "\"target_accuracy\": 1.5");
        assert!(RunConfig::from_json(&bad).is_err());
        let bad = FULL.replace("\"epochs\": 10", "\"epochs\": 0");
        assert!(RunConfig::from_json(&bad).is_err());
    }
}
