// SPDX-License-Identifier: Apache-2.0

//! The train / score / admit cycle.
//!
//! Every iteration starts from a freshly initialized model, trains it on the
//! current labelled set, rebuilds class prototypes, learns the admission
//! threshold on the clean labelled samples, scores the unlabelled pool and
//! admits whatever clears the threshold. Scoring fans out over a thread
//! pool; admissions are applied serially afterwards, so results do not
//! depend on the worker count.

use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentationPlan;
use crate::classifier::{Architecture, ModelState, TrainConfig};
use crate::confidence::{
    build_prototypes, calibrate_weights, CombineMode, ConfidenceReport, MetricWeights,
    ScoringContext,
};
use crate::datasets::{split, DatasetTriple, Sample, SampleId};
use crate::ensemble::StdMode;
use crate::error::{Error, Result};
use crate::seed::{self, tag};
use crate::threshold::{select_admissions, ScoredSample, ThresholdPolicy, DEFAULT_TARGET_ACCURACY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub labelled_per_class: usize,
    pub validation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    Fixed(MetricWeights),
    /// Derive weights each iteration from the validation set.
    Calibrate,
}

impl Default for WeightSource {
    fn default() -> Self {
        WeightSource::Fixed(MetricWeights::equal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceConfig {
    #[serde(default)]
    pub weights: WeightSource,
    #[serde(default)]
    pub combine: CombineMode,
    #[serde(default)]
    pub std_mode: StdMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRefresh {
    #[default]
    EveryIteration,
    FreezeAfterFirst,
}

fn default_target() -> f64 {
    DEFAULT_TARGET_ACCURACY
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default = "default_target")]
    pub target_accuracy: f64,
    /// Fixed admission threshold; skips learning when set.
    #[serde(default)]
    pub manual: Option<f64>,
    #[serde(default)]
    pub refresh: ThresholdRefresh,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            target_accuracy: DEFAULT_TARGET_ACCURACY,
            manual: None,
            refresh: ThresholdRefresh::EveryIteration,
        }
    }
}

fn default_max_iterations() -> usize {
    25
}

fn default_patience() -> usize {
    2
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Stop after this many consecutive iterations that admit nothing.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_repeats")]
    pub repeat_count: usize,
    /// Return pseudo-labelled samples to the pool and re-score them every
    /// iteration instead of keeping them permanently.
    #[serde(default)]
    pub rescore_pseudo: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            max_iterations: default_max_iterations(),
            patience: default_patience(),
            repeat_count: default_repeats(),
            rescore_pseudo: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
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
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.classifier.train.validate()?;
        if let WeightSource::Fixed(w) = self.confidence.weights {
            w.validate()?;
        }
        if let CombineMode::PaperLiteral { epsilon } = self.confidence.combine {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::Config("paper_literal epsilon must be > 0".into()));
            }
        }
        let t = self.threshold.target_accuracy;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!(
                "target_accuracy must lie in (0, 1], got {t}"
            )));
        }
        if let Some(m) = self.threshold.manual {
            if m.is_nan() {
                return Err(Error::Config("manual threshold is NaN".into()));
            }
        }
        if self.schedule.repeat_count < 1 {
            return Err(Error::Config("repeat_count must be >= 1".into()));
        }
        if self.confidence.weights == WeightSource::Calibrate && self.split.validation_count == 0 {
            return Err(Error::Config(
                "weight calibration needs a non-empty validation set".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    /// Labelled set size at the start of the iteration.
    pub dl_size: usize,
    /// Unlabelled pool size at the start of the iteration.
    pub du_size: usize,
    pub added_count: usize,
    /// Pseudo-labels returned to the pool for re-scoring.
    pub released_count: usize,
    /// Pool samples whose predicted class had no prototype.
    pub unscorable_count: usize,
    pub addition_accuracy: Option<f64>,
    pub cumulative_addition_accuracy: Option<f64>,
    pub val_error: Option<f64>,
    #[serde(with = "crate::report::float_or_inf")]
    pub threshold: f64,
    pub weights: MetricWeights,
    /// Seconds. Kept out of JSON so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: f64,
}

impl IterationRecord {
    pub fn dl_after(&self) -> usize {
        self.dl_size + self.added_count - self.released_count
    }

    pub fn du_after(&self) -> usize {
        self.du_size + self.released_count - self.added_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: LoopConfig,
    pub seed: u64,
    pub initial_labelled: usize,
    pub initial_unlabelled: usize,
    pub validation_size: usize,
    pub records: Vec<IterationRecord>,
    /// Validation error of a model trained on the initial labelled set only.
    pub benchmark_val_error: Option<f64>,
    pub final_val_error: Option<f64>,
    /// `final - benchmark`; negative means the run helped.
    pub improvement: Option<f64>,
    pub final_labelled: usize,
    pub total_added: usize,
    pub cumulative_addition_accuracy: Option<f64>,
}

/// Mutable state carried between iterations.
#[derive(Debug, Clone)]
pub struct LoopState {
    pub triple: DatasetTriple,
    frozen_threshold: Option<f64>,
    added: usize,
    correct: Option<usize>,
}

impl LoopState {
    pub fn new(triple: DatasetTriple) -> Self {
        LoopState {
            triple,
            frozen_threshold: None,
            added: 0,
            correct: Some(0),
        }
    }

    pub fn total_added(&self) -> usize {
        self.added
    }

    pub fn cumulative_addition_accuracy(&self) -> Option<f64> {
        match self.correct {
            Some(c) if self.added > 0 => Some(c as f64 / self.added as f64),
            _ => None,
        }
    }
}

fn train_model(
    config: &LoopConfig,
    triple: &DatasetTriple,
    iteration: u32,
    base_seed: u64,
) -> Result<ModelState> {
    let it = u64::from(iteration);
    let model = ModelState::init(
        config.classifier.architecture,
        triple.dim,
        triple.classes,
        seed::derive(base_seed, &[tag::INIT, it]),
    )?;
    model.fit_monitored(
        &triple.labelled,
        Some(&triple.validation),
        &config.classifier.train,
        seed::derive(base_seed, &[tag::SHUFFLE, it]),
    )
}

fn validation_error(model: &ModelState, triple: &DatasetTriple) -> Result<Option<f64>> {
    if triple.validation.is_empty() {
        Ok(None)
    } else {
        model.evaluate(&triple.validation).map(Some)
    }
}

fn score_pool(
    ctx: &ScoringContext<'_>,
    samples: &[Sample],
    seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Option<ConfidenceReport>>> {
    pool.install(|| {
        samples
            .par_iter()
            .map(|s| match ctx.score(s, seed) {
                Ok(r) => Ok(Some(r)),
                Err(Error::MissingPrototype(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    })
}

/// One full cycle on `state`. `iteration` starts at 1.
pub fn run_iteration(
    state: &mut LoopState,
    config: &LoopConfig,
    iteration: u32,
    base_seed: u64,
    pool: &rayon::ThreadPool,
) -> Result<IterationRecord> {
    let started = Instant::now();
    let it = u64::from(iteration);
    let dl_size = state.triple.labelled.len();
    let du_size = state.triple.unlabelled.len();

    let model = train_model(config, &state.triple, iteration, base_seed)?;
    let val_error = validation_error(&model, &state.triple)?;
    let prototypes = build_prototypes(&model, &state.triple.labelled)?;
    let plan = &config.augmentations;
    let std_mode = config.confidence.std_mode;
    let weights = match config.confidence.weights {
        WeightSource::Fixed(w) => w,
        WeightSource::Calibrate => calibrate_weights(
            &model,
            &prototypes,
            plan,
            std_mode,
            &state.triple.validation,
            seed::derive(base_seed, &[tag::CALIBRATE, it]),
        )?,
    };
    let ctx = ScoringContext {
        model: &model,
        prototypes: &prototypes,
        plan,
        weights,
        combine: config.confidence.combine,
        std_mode,
    };
    let augment_seed = seed::derive(base_seed, &[tag::AUGMENT, it]);

    let threshold = match (config.threshold.manual, state.frozen_threshold) {
        (Some(t), _) => ThresholdPolicy::manual(t, config.threshold.target_accuracy, weights),
        (None, Some(t)) => ThresholdPolicy::manual(t, config.threshold.target_accuracy, weights),
        (None, None) => {
            let clean = state.triple.clean_labelled();
            let reports = score_pool(&ctx, &clean, augment_seed, pool)?;
            let scored: Vec<ScoredSample> = clean
                .iter()
                .zip(reports)
                .filter_map(|(s, r)| {
                    let r = r?;
                    Some(ScoredSample {
                        confidence: r.combined,
                        predicted: r.predicted_label,
                        truth: s.assigned_label?,
                    })
                })
                .collect();
            if scored.is_empty() {
                ThresholdPolicy::manual(f64::INFINITY, config.threshold.target_accuracy, weights)
            } else {
                ThresholdPolicy::learn(&scored, config.threshold.target_accuracy, weights)?
            }
        }
    };
    if config.threshold.refresh == ThresholdRefresh::FreezeAfterFirst {
        state.frozen_threshold.get_or_insert(threshold.threshold);
    }

    let released_count = if config.schedule.rescore_pseudo {
        state.triple.release_pseudo()
    } else {
        0
    };

    let reports = score_pool(&ctx, &state.triple.unlabelled, augment_seed, pool)?;
    let unscorable_count = reports.iter().filter(|r| r.is_none()).count();
    let scored: Vec<(SampleId, ConfidenceReport)> = state
        .triple
        .unlabelled
        .iter()
        .zip(reports)
        .filter_map(|(s, r)| r.map(|r| (s.id, r)))
        .collect();
    let admissions = select_admissions(&scored, threshold.threshold);
    let record = state.triple.admit(&admissions, iteration)?;
    state.triple.check_invariants()?;

    if config.schedule.rescore_pseudo {
        // Cumulative figures describe the current pseudo-labelled set.
        state.added = record.len();
        state.correct = record.correct.or(Some(0).filter(|_| record.is_empty()));
    } else {
        state.added += record.len();
        state.correct = match (state.correct, record.correct) {
            (Some(c), Some(n)) => Some(c + n),
            (Some(c), None) if record.is_empty() => Some(c),
            _ => None,
        };
    }

    let out = IterationRecord {
        iteration,
        dl_size,
        du_size,
        added_count: record.len(),
        released_count,
        unscorable_count,
        addition_accuracy: record.addition_accuracy,
        cumulative_addition_accuracy: state.cumulative_addition_accuracy(),
        val_error,
        threshold: threshold.threshold,
        weights,
        wall_time: started.elapsed().as_secs_f64(),
    };
    info!(
        "iteration {iteration}: |D_l|={dl_size} |D_u|={du_size} T_c={:.6} added={} acc={:?} val_err={:?}",
        out.threshold, out.added_count, out.addition_accuracy, out.val_error
    );
    Ok(out)
}

pub fn should_stop(
    history: &[IterationRecord],
    schedule: &ScheduleConfig,
    unlabelled_left: usize,
) -> bool {
    if history.len() >= schedule.max_iterations || unlabelled_left == 0 {
        return true;
    }
    schedule.patience > 0
        && history.len() >= schedule.patience
        && history[history.len() - schedule.patience..]
            .iter()
            .all(|r| r.added_count == 0)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// A single run from an already-split triple. `observe` sees the state after
/// every iteration.
pub fn run_on_triple(
    config: &LoopConfig,
    triple: DatasetTriple,
    base_seed: u64,
    workers: usize,
    mut observe: impl FnMut(&LoopState, &IterationRecord),
) -> Result<RunReport> {
    config.validate()?;
    config.augmentations.check_dim(triple.dim)?;
    triple.check_invariants()?;
    let pool = thread_pool(workers)?;

    let initial_labelled = triple.labelled.len();
    let initial_unlabelled = triple.unlabelled.len();
    let validation_size = triple.validation.len();

    // Same seeds as iteration 1, so the baseline and the first iteration
    // train identical models.
    let benchmark = train_model(config, &triple, 1, base_seed)?;
    let benchmark_val_error = validation_error(&benchmark, &triple)?;
    debug!("benchmark validation error {benchmark_val_error:?}");

    let mut state = LoopState::new(triple);
    let mut records = Vec::new();
    while !should_stop(&records, &config.schedule, state.triple.unlabelled.len()) {
        let iteration = records.len() as u32 + 1;
        let record = run_iteration(&mut state, config, iteration, base_seed, &pool)?;
        observe(&state, &record);
        records.push(record);
    }

    let final_val_error = if records.is_empty() {
        benchmark_val_error
    } else {
        let final_model = train_model(config, &state.triple, records.len() as u32 + 1, base_seed)?;
        validation_error(&final_model, &state.triple)?
    };
    let improvement = final_val_error.zip(benchmark_val_error).map(|(f, b)| f - b);

    Ok(RunReport {
        config: config.clone(),
        seed: base_seed,
        initial_labelled,
        initial_unlabelled,
        validation_size,
        records,
        benchmark_val_error,
        final_val_error,
        improvement,
        final_labelled: state.triple.labelled.len(),
        total_added: state.total_added(),
        cumulative_addition_accuracy: state.cumulative_addition_accuracy(),
    })
}

/// Split `samples` with the run seed, then run.
pub fn run(
    config: &LoopConfig,
    samples: &[Sample],
    classes: usize,
    base_seed: u64,
    workers: usize,
) -> Result<RunReport> {
    config.validate()?;
    let triple = split(
        samples,
        classes,
        config.split.labelled_per_class,
        config.split.validation_count,
        base_seed,
    )?;
    run_on_triple(config, triple, base_seed, workers, |_, _| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub repeats: usize,
    pub benchmark_val_error: Option<MeanStd>,
    pub final_val_error: Option<MeanStd>,
    pub improvement: Option<MeanStd>,
    pub total_added: MeanStd,
    pub addition_accuracy: Option<MeanStd>,
}

impl RepeatSummary {
    pub fn from_runs(runs: &[RunReport]) -> Self {
        let collect = |f: &dyn Fn(&RunReport) -> Option<f64>| -> Option<MeanStd> {
            let vals: Option<Vec<f64>> = runs.iter().map(f).collect();
            vals.and_then(|v| MeanStd::of(&v))
        };
        RepeatSummary {
            repeats: runs.len(),
            benchmark_val_error: collect(&|r| r.benchmark_val_error),
            final_val_error: collect(&|r| r.final_val_error),
            improvement: collect(&|r| r.improvement),
            total_added: MeanStd::of(
                &runs
                    .iter()
                    .map(|r| r.total_added as f64)
                    .collect::<Vec<_>>(),
            )
            .unwrap_or(MeanStd {
                mean: 0.0,
                std: 0.0,
            }),
            addition_accuracy: collect(&|r| r.cumulative_addition_accuracy),
        }
    }
}

/// Seed of repeat `index` under `base_seed`. Repeat 0 uses the base seed.
pub fn repeat_seed(base_seed: u64, index: usize) -> u64 {
    if index == 0 {
        base_seed
    } else {
        seed::derive(base_seed, &[tag::REPEAT, index as u64])
    }
}

/// `repeat_count` independent runs, each with its own split.
pub fn run_repeated(
    config: &LoopConfig,
    samples: &[Sample],
    classes: usize,
    base_seed: u64,
    workers: usize,
) -> Result<(Vec<RunReport>, RepeatSummary)> {
    let runs = (0..config.schedule.repeat_count)
        .map(|i| run(config, samples, classes, repeat_seed(base_seed, i), workers))
        .collect::<Result<Vec<_>>>()?;
    let summary = RepeatSummary::from_runs(&runs);
    Ok((runs, summary))
}
