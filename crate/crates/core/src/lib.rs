// SPDX-License-Identifier: Apache-2.0

//! Iterative self-labelling for probabilistic classifiers.
//!
//! A model is trained on a small clean labelled set, every unlabelled sample
//! is scored through an augmentation ensemble and three posterior-based
//! confidence metrics, and samples whose combined confidence clears a
//! threshold learned for a target addition accuracy are admitted into the
//! labelled set. The cycle repeats on the grown set with a freshly
//! initialized model.
//!
//! Module map:
//!
//! - [`datasets`]: samples, the labelled/unlabelled/validation triple, admissions
//! - [`classifier`]: softmax regression and a one-hidden-layer MLP
//! - [`augment`]: augmentation plans applied per sample
//! - [`ensemble`]: disagreement-penalized selection over an augmentation set
//! - [`confidence`]: top-1, margin, and prototype-distance metrics
//! - [`threshold`]: accuracy-constrained threshold learning
//! - [`cycle`]: the train/score/admit loop and run reports
//! - [`synth`]: desk-scale synthetic datasets

pub mod augment;
pub mod classifier;
pub mod confidence;
pub mod cycle;
pub mod datasets;
pub mod ensemble;
mod error;
pub mod report;
pub mod seed;
pub mod synth;
pub mod threshold;

pub use augment::{AugmentationPlan, Transform};
pub use classifier::{Architecture, ClassDistribution, ModelState, TrainConfig};
pub use confidence::{
    CombineMode, ConfidenceReport, MetricWeights, PrototypeTable, ScoringContext,
};
pub use cycle::{
    IterationRecord, LoopConfig, LoopState, RepeatSummary, RunReport, ThresholdRefresh,
    WeightSource,
};
pub use datasets::{
    Admission, AdmissionRecord, DatasetTriple, Provenance, Sample, SampleId, TableFormat,
};
pub use ensemble::{EnsembleResult, StdMode};
pub use error::{Error, Result};
pub use threshold::{ScoredSample, ThresholdPolicy};
