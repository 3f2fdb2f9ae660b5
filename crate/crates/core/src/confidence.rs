// SPDX-License-Identifier: Apache-2.0

//! Confidence metrics over a posterior distribution.
//!
//! - `c_a`: the top posterior probability.
//! - `c_b`: the margin between the top two probabilities.
//! - `c_c`: Euclidean distance to the class prototype of the predicted
//!   class, where a prototype is the mean posterior over the labelled
//!   samples assigned to that class.
//!
//! The three are folded into one score with non-negative weights; `c_c` is
//! inverted first so that higher is better for every term.

use serde::{Deserialize, Serialize};

use crate::augment::AugmentationPlan;
use crate::classifier::{ClassDistribution, ModelState};
use crate::datasets::Sample;
use crate::ensemble::{ensemble_predict, StdMode};
use crate::error::{Error, Result};

/// Labels of the largest and second-largest probabilities. Lower indices
/// win ties.
pub fn top_two(dist: &ClassDistribution) -> (usize, usize) {
    let p = dist.probs();
    let (mut y1, mut y2) = if p[1] > p[0] { (1, 0) } else { (0, 1) };
    for (i, &v) in p.iter().enumerate().skip(2) {
        if v > p[y1] {
            y2 = y1;
            y1 = i;
        } else if v > p[y2] {
            y2 = i;
        }
    }
    (y1, y2)
}

pub fn metric_ca(dist: &ClassDistribution) -> f64 {
    let (y1, _) = top_two(dist);
    dist.probs()[y1]
}

pub fn metric_cb(dist: &ClassDistribution) -> f64 {
    let (y1, y2) = top_two(dist);
    dist.probs()[y1] - dist.probs()[y2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeTable {
    /// `None` for classes with no labelled samples.
    rows: Vec<Option<ClassDistribution>>,
    counts: Vec<usize>,
}

impl PrototypeTable {
    /// Table from explicit rows; counts are 1 for present rows.
    pub fn from_rows(rows: Vec<Option<ClassDistribution>>) -> Self {
        let counts = rows.iter().map(|r| usize::from(r.is_some())).collect();
        PrototypeTable { rows, counts }
    }

    pub fn get(&self, class: usize) -> Option<&ClassDistribution> {
        self.rows.get(class).and_then(Option::as_ref)
    }

    pub fn count(&self, class: usize) -> usize {
        self.counts.get(class).copied().unwrap_or(0)
    }

    pub fn classes(&self) -> usize {
        self.rows.len()
    }

    pub fn is_present(&self, class: usize) -> bool {
        self.get(class).is_some()
    }
}

/// Mean posterior per assigned label over `labelled`.
pub fn build_prototypes(model: &ModelState, labelled: &[Sample]) -> Result<PrototypeTable> {
    if labelled.is_empty() {
        return Err(Error::Training(
            "cannot build prototypes from an empty set".into(),
        ));
    }
    let classes = model.classes();
    let mut sums = vec![vec![0.0; classes]; classes];
    let mut counts = vec![0usize; classes];
    for s in labelled {
        let label = s
            .assigned_label
            .filter(|&l| l < classes)
            .ok_or_else(|| Error::Training(format!("sample {} has no usable label", s.id)))?;
        let dist = model.predict_proba(&s.features)?;
        for (acc, p) in sums[label].iter_mut().zip(dist.probs()) {
            *acc += p;
        }
        counts[label] += 1;
    }
    let rows = sums
        .into_iter()
        .zip(&counts)
        .map(|(sum, &n)| match n {
            0 => None,
            n => Some(mean_distribution(sum, n)),
        })
        .collect();
    Ok(PrototypeTable { rows, counts })
}

fn mean_distribution(sum: Vec<f64>, n: usize) -> ClassDistribution {
    let mut mean: Vec<f64> = sum.into_iter().map(|v| v / n as f64).collect();
    let total: f64 = mean.iter().sum();
    if (total - 1.0).abs() > ClassDistribution::SUM_TOLERANCE {
        mean.iter_mut().for_each(|v| *v /= total);
    }
    ClassDistribution::new(mean).expect("mean of distributions is a distribution")
}

pub fn metric_cc(dist: &ClassDistribution, prototypes: &PrototypeTable) -> Result<f64> {
    let (y1, _) = top_two(dist);
    let proto = prototypes.get(y1).ok_or(Error::MissingPrototype(y1))?;
    Ok(euclidean(dist.probs(), proto.probs()))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricWeights {
    pub w_a: f64,
    pub w_b: f64,
    pub w_c: f64,
}

impl MetricWeights {
    pub fn new(w_a: f64, w_b: f64, w_c: f64) -> Result<Self> {
        let w = MetricWeights { w_a, w_b, w_c };
        w.validate()?;
        Ok(w)
    }

    pub fn equal() -> Self {
        MetricWeights {
            w_a: 1.0 / 3.0,
            w_b: 1.0 / 3.0,
            w_c: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.w_a, self.w_b, self.w_c];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(
                "metric weights must be finite and >= 0".into(),
            ));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("metric weights must not all be zero".into()));
        }
        Ok(())
    }

    /// Weights proportional to per-metric accuracies, summing to one. Falls
    /// back to equal weights when every accuracy is zero.
    pub fn from_accuracies(acc: [f64; 3]) -> Self {
        let total: f64 = acc.iter().sum();
        if !(total > 0.0) {
            return MetricWeights::equal();
        }
        MetricWeights {
            w_a: acc[0] / total,
            w_b: acc[1] / total,
            w_c: acc[2] / total,
        }
    }
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights::equal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CombineMode {
    /// `c_c` enters as `1 / (1 + c_c)`, bounded in `(0, 1]`.
    #[default]
    Bounded,
    /// `c_c` enters as `1 / max(c_c, epsilon)`.
    PaperLiteral { epsilon: f64 },
}


impl CombineMode {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn invert(self, c_c: f64) -> f64 {
        match self {
            CombineMode::Bounded => 1.0 / (1.0 + c_c),
            CombineMode::PaperLiteral { epsilon } => 1.0 / c_c.max(epsilon),
        }
    }
}

pub fn combine(c_a: f64, c_b: f64, c_c: f64, weights: &MetricWeights, mode: CombineMode) -> f64 {
    weights.w_a * c_a + weights.w_b * c_b + weights.w_c * mode.invert(c_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub predicted_label: usize,
    pub runner_up: usize,
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub combined: f64,
}

/// Everything needed to score samples against one trained model.
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub model: &'a ModelState,
    pub prototypes: &'a PrototypeTable,
    pub plan: &'a AugmentationPlan,
    pub weights: MetricWeights,
    pub combine: CombineMode,
    pub std_mode: StdMode,
}

impl ScoringContext<'_> {
    /// Ensemble prediction, then metrics on the winning unscaled
    /// distribution. Fails with [`Error::MissingPrototype`] when the
    /// predicted class has no prototype.
    pub fn score(&self, sample: &Sample, seed: u64) -> Result<ConfidenceReport> {
        let ens = ensemble_predict(self.model, self.plan, sample, seed, self.std_mode)?;
        report_for(
            &ens.distribution,
            self.prototypes,
            &self.weights,
            self.combine,
        )
    }
}

pub(crate) fn report_for(
    dist: &ClassDistribution,
    prototypes: &PrototypeTable,
    weights: &MetricWeights,
    mode: CombineMode,
) -> Result<ConfidenceReport> {
    let (y1, y2) = top_two(dist);
    let p = dist.probs();
    let c_a = p[y1];
    let c_b = p[y1] - p[y2];
    let c_c = metric_cc(dist, prototypes)?;
    Ok(ConfidenceReport {
        predicted_label: y1,
        runner_up: y2,
        c_a,
        c_b,
        c_c,
        combined: combine(c_a, c_b, c_c, weights, mode),
    })
}

pub fn score_sample(
    ctx: &ScoringContext<'_>,
    sample: &Sample,
    seed: u64,
) -> Result<ConfidenceReport> {
    ctx.score(sample, seed)
}

/// Per-metric weights from held-out labelled samples.
///
/// Each metric alone ranks the calibration samples (descending for `c_a`
/// and `c_b`, ascending distance for `c_c`); the accuracy of the predicted
/// label over the top half of each ranking sets that metric's weight.
/// Samples without a prototype for their predicted class rank last on
/// `c_c`.
pub fn calibrate_weights(
    model: &ModelState,
    prototypes: &PrototypeTable,
    plan: &AugmentationPlan,
    std_mode: StdMode,
    calibration: &[Sample],
    seed: u64,
) -> Result<MetricWeights> {
    if calibration.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    struct Row {
        ca: f64,
        cb: f64,
        cc: f64,
        correct: bool,
    }
    let rows = calibration
        .iter()
        .map(|s| {
            let label = s
                .assigned_label
                .ok_or_else(|| Error::Calibration(format!("sample {} has no label", s.id)))?;
            let dist = ensemble_predict(model, plan, s, seed, std_mode)?.distribution;
            let (y1, _) = top_two(&dist);
            Ok(Row {
                ca: metric_ca(&dist),
                cb: metric_cb(&dist),
                cc: metric_cc(&dist, prototypes).unwrap_or(f64::INFINITY),
                correct: y1 == label,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let top = rows.len().div_ceil(2);
    let top_half_accuracy = |key: &dyn Fn(&Row) -> f64| {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.sort_by(|&i, &j| key(&rows[j]).total_cmp(&key(&rows[i])));
        idx[..top].iter().filter(|&&i| rows[i].correct).count() as f64 / top as f64
    };
    Ok(MetricWeights::from_accuracies([
        top_half_accuracy(&|r| r.ca),
        top_half_accuracy(&|r| r.cb),
        top_half_accuracy(&|r| -r.cc),
    ]))
}
