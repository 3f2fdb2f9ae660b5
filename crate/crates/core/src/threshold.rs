// SPDX-License-Identifier: Apache-2.0

//! Accuracy-constrained admission threshold.
//!
//! Given scored labelled samples, the learned threshold is the smallest
//! observed confidence `t` such that the samples with confidence `>= t` are
//! labelled correctly at a rate of at least the target accuracy. When no
//! observed value qualifies the threshold is `+inf` and nothing is admitted.

use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceReport, MetricWeights};
use crate::datasets::{Admission, SampleId};
use crate::error::{Error, Result};

pub const DEFAULT_TARGET_ACCURACY: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub confidence: f64,
    pub predicted: usize,
    pub truth: usize,
}

impl ScoredSample {
    pub fn is_correct(&self) -> bool {
        self.predicted == self.truth
    }
}

/// Accuracy among samples with `confidence >= t_c`; `None` when no sample
/// passes.
pub fn threshold_accuracy(scored: &[ScoredSample], t_c: f64) -> Result<Option<f64>> {
    if scored.is_empty() {
        return Err(Error::Threshold("no scored samples".into()));
    }
    let (pass, correct) = scored
        .iter()
        .filter(|s| s.confidence >= t_c)
        .fold((0usize, 0usize), |(p, c), s| {
            (p + 1, c + usize::from(s.is_correct()))
        });
    Ok((pass > 0).then(|| correct as f64 / pass as f64))
}

/// Single sorted sweep over the distinct confidence values.
pub fn learn_threshold(scored: &[ScoredSample], target_accuracy: f64) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::Threshold("no scored samples".into()));
    }
    if !(target_accuracy > 0.0 && target_accuracy <= 1.0) {
        return Err(Error::Config(format!(
            "target accuracy must lie in (0, 1], got {target_accuracy}"
        )));
    }
    if scored.iter().any(|s| s.confidence.is_nan()) {
        return Err(Error::Threshold("NaN confidence".into()));
    }
    let mut sorted: Vec<&ScoredSample> = scored.iter().collect();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));

    let mut best = f64::INFINITY;
    let (mut pass, mut correct) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i].confidence;
        while i < sorted.len() && sorted[i].confidence == value {
            pass += 1;
            correct += usize::from(sorted[i].is_correct());
            i += 1;
        }
        if correct as f64 / pass as f64 >= target_accuracy {
            best = value;
        }
    }
    Ok(best)
}

/// Samples whose combined confidence is at least `t_c`, labelled with their
/// predicted class, in input order.
pub fn select_admissions(scored: &[(SampleId, ConfidenceReport)], t_c: f64) -> Vec<Admission> {
    scored
        .iter()
        .filter(|(_, r)| r.combined >= t_c)
        .map(|&(id, r)| Admission {
            id,
            label: r.predicted_label,
            confidence: r.combined,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnedOn {
    TrainData,
    Manual,
}

/// The admission policy in force for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub target_accuracy: f64,
    /// `+inf` admits nothing.
    #[serde(with = "crate::report::float_or_inf")]
    pub threshold: f64,
    pub weights: MetricWeights,
    pub learned_on: LearnedOn,
}

impl ThresholdPolicy {
    pub fn learn(
        scored: &[ScoredSample],
        target_accuracy: f64,
        weights: MetricWeights,
    ) -> Result<Self> {
        Ok(ThresholdPolicy {
            target_accuracy,
            threshold: learn_threshold(scored, target_accuracy)?,
            weights,
            learned_on: LearnedOn::TrainData,
        })
    }

    pub fn manual(threshold: f64, target_accuracy: f64, weights: MetricWeights) -> Self {
        ThresholdPolicy {
            target_accuracy,
            threshold,
            weights,
            learned_on: LearnedOn::Manual,
        }
    }

    pub fn admits(&self, confidence: f64) -> bool {
        confidence >= self.threshold
    }
}
