// SPDX-License-Identifier: Apache-2.0

//! Probabilistic classifiers trained by mini-batch gradient descent on
//! cross-entropy.
//!
//! Parameters live in one flat vector. Softmax regression stores `W` (C×d,
//! row-major) then `b` (C). The MLP stores `W1` (h×d), `b1` (h), `W2` (C×h),
//! `b2` (C), with a tanh hidden layer.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::seed;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ILEM";

/// A posterior probability vector over C classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Config("empty class distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config(
                "distribution entries must be finite and >= 0".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Config(format!("distribution sums to {sum}, not 1")));
        }
        Ok(ClassDistribution(probs))
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= sum;
        }
        ClassDistribution(probs)
    }

    pub fn uniform(classes: usize) -> Self {
        ClassDistribution(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    SoftmaxRegression,
    Mlp { hidden_units: usize },
}

impl Architecture {
    fn tag(self) -> u32 {
        match self {
            Architecture::SoftmaxRegression => 0,
            Architecture::Mlp { .. } => 1,
        }
    }

    pub fn parameter_count(self, dim: usize, classes: usize) -> usize {
        match self {
            Architecture::SoftmaxRegression => classes * dim + classes,
            Architecture::Mlp { hidden_units: h } => dim * h + h + h * classes + classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub l2: f64,
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.1,
            batch_size: 32,
            l2: 1e-4,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    architecture: Architecture,
    dim: usize,
    classes: usize,
    params: Vec<f64>,
    init_seed: u64,
    trained: bool,
}

impl ModelState {
    /// Fresh untrained model. Weights are uniform in `[-s, s]` with
    /// `s = sqrt(6 / (fan_in + fan_out))`; biases start at zero.
    pub fn init(architecture: Architecture, dim: usize, classes: usize, seed: u64) -> Result<Self> {
        check_shape(architecture, dim, classes)?;
        let mut rng = seed::rng(seed);
        let mut params = Vec::with_capacity(architecture.parameter_count(dim, classes));
        let mut layer = |params: &mut Vec<f64>, fan_in: usize, fan_out: usize| {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-s..=s)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        };
        match architecture {
            Architecture::SoftmaxRegression => layer(&mut params, dim, classes),
            Architecture::Mlp { hidden_units } => {
                layer(&mut params, dim, hidden_units);
                layer(&mut params, hidden_units, classes);
            }
        }
        Ok(ModelState {
            architecture,
            dim,
            classes,
            params,
            init_seed: seed,
            trained: false,
        })
    }

    /// A trained model with the given parameters, e.g. restored from a
    /// checkpoint.
    pub fn from_parameters(
        architecture: Architecture,
        dim: usize,
        classes: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        check_shape(architecture, dim, classes)?;
        let expected = architecture.parameter_count(dim, classes);
        if params.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: params.len(),
            });
        }
        Ok(ModelState {
            architecture,
            dim,
            classes,
            params,
            init_seed: 0,
            trained: true,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    fn hidden_units(&self) -> usize {
        match self.architecture {
            Architecture::SoftmaxRegression => 0,
            Architecture::Mlp { hidden_units } => hidden_units,
        }
    }

    /// Raw logits, plus tanh activations for the MLP.
    fn forward(&self, x: &[f64], hidden: &mut Vec<f64>) -> Vec<f64> {
        let (d, c) = (self.dim, self.classes);
        let p = &self.params;
        match self.architecture {
            Architecture::SoftmaxRegression => {
                let (w, b) = p.split_at(c * d);
                (0..c)
                    .map(|k| b[k] + dot(&w[k * d..(k + 1) * d], x))
                    .collect()
            }
            Architecture::Mlp { hidden_units: h } => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                hidden.clear();
                hidden.extend((0..h).map(|j| (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh()));
                (0..c)
                    .map(|k| b2[k] + dot(&w2[k * h..(k + 1) * h], hidden))
                    .collect()
            }
        }
    }

    /// Mean cross-entropy over the batch plus `l2/2 * ||weights||^2`
    /// (biases are not penalized), and its gradient with respect to the flat
    /// parameter vector.
    pub fn loss_and_gradient(&self, batch: &[(&[f64], usize)], l2: f64) -> (f64, Vec<f64>) {
        let (d, c, h) = (self.dim, self.classes, self.hidden_units());
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n = batch.len().max(1) as f64;
        let mut hidden = Vec::with_capacity(h);
        let mut dh = vec![0.0; h];
        for &(x, y) in batch {
            let logits = self.forward(x, &mut hidden);
            let probs = ClassDistribution::from_logits(&logits).into_inner();
            loss -= probs[y].max(f64::MIN_POSITIVE).ln() / n;
            let delta: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(k, &pk)| (pk - f64::from(u8::from(k == y))) / n)
                .collect();
            match self.architecture {
                Architecture::SoftmaxRegression => {
                    let (gw, gb) = grad.split_at_mut(c * d);
                    for k in 0..c {
                        axpy(delta[k], x, &mut gw[k * d..(k + 1) * d]);
                        gb[k] += delta[k];
                    }
                }
                Architecture::Mlp { .. } => {
                    let w2 = &self.params[h * d + h..h * d + h + c * h];
                    let (gw1, rest) = grad.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(c * h);
                    dh.iter_mut().for_each(|v| *v = 0.0);
                    for k in 0..c {
                        axpy(delta[k], &hidden, &mut gw2[k * h..(k + 1) * h]);
                        gb2[k] += delta[k];
                        axpy(delta[k], &w2[k * h..(k + 1) * h], &mut dh);
                    }
                    for j in 0..h {
                        let g = dh[j] * (1.0 - hidden[j] * hidden[j]);
                        axpy(g, x, &mut gw1[j * d..(j + 1) * d]);
                        gb1[j] += g;
                    }
                }
            }
        }
        if l2 > 0.0 {
            for range in self.weight_ranges() {
                for i in range {
                    loss += 0.5 * l2 * self.params[i] * self.params[i];
                    grad[i] += l2 * self.params[i];
                }
            }
        }
        (loss, grad)
    }

    fn weight_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let (d, c, h) = (self.dim, self.classes, self.hidden_units());
        match self.architecture {
            Architecture::SoftmaxRegression => vec![0..c * d],
            Architecture::Mlp { .. } => vec![0..h * d, h * d + h..h * d + h + c * h],
        }
    }

    /// Train from the current parameters with a fixed epoch budget.
    pub fn fit(self, labelled: &[Sample], config: &TrainConfig, seed: u64) -> Result<ModelState> {
        self.fit_monitored(labelled, None, config, seed)
    }

    /// As [`fit`](Self::fit), with optional early stopping on `validation`
    /// error. When early stopping is active the best-scoring parameters are
    /// kept.
    pub fn fit_monitored(
        mut self,
        labelled: &[Sample],
        validation: Option<&[Sample]>,
        config: &TrainConfig,
        seed: u64,
    ) -> Result<ModelState> {
        config.validate()?;
        if labelled.is_empty() {
            return Err(Error::Training("empty labelled set".into()));
        }
        let data: Vec<(&[f64], usize)> = labelled
            .iter()
            .map(|s| {
                let label = s.assigned_label.ok_or_else(|| {
                    Error::Training(format!("sample {} has no assigned label", s.id))
                })?;
                if s.features.len() != self.dim {
                    return Err(Error::Dimension {
                        expected: self.dim,
                        found: s.features.len(),
                    });
                }
                if label >= self.classes {
                    return Err(Error::Training(format!(
                        "sample {} label {label} outside [0, {})",
                        s.id, self.classes
                    )));
                }
                Ok((s.features.as_slice(), label))
            })
            .collect::<Result<_>>()?;

        let monitor = match (config.early_stop_patience, validation) {
            (Some(p), Some(v)) if !v.is_empty() => Some((p, v)),
            _ => None,
        };
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut stale = 0usize;

        let mut rng = seed::rng(seed::derive(seed, &[seed::tag::SHUFFLE]));
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| data[i]));
                let (_, grad) = self.loss_and_gradient(&batch, config.l2);
                for (p, g) in self.params.iter_mut().zip(&grad) {
                    *p -= config.learning_rate * g;
                }
            }
            if let Some((patience, val)) = monitor {
                self.trained = true;
                let err = self.evaluate(val)?;
                match &best {
                    Some((b, _)) if err >= *b => {
                        stale += 1;
                        if stale >= patience {
                            break;
                        }
                    }
                    _ => {
                        best = Some((err, self.params.clone()));
                        stale = 0;
                    }
                }
            }
        }
        if let Some((_, params)) = best {
            self.params = params;
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Training("parameters diverged".into()));
        }
        self.trained = true;
        Ok(self)
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<ClassDistribution> {
        if !self.trained {
            return Err(Error::State("model has not been trained".into()));
        }
        if features.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: features.len(),
            });
        }
        let mut hidden = Vec::new();
        Ok(ClassDistribution::from_logits(
            &self.forward(features, &mut hidden),
        ))
    }

    /// Fraction of samples whose argmax prediction differs from the
    /// assigned label.
    pub fn evaluate(&self, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Evaluation("empty dataset".into()));
        }
        let mut wrong = 0usize;
        for s in samples {
            let label = s
                .assigned_label
                .ok_or_else(|| Error::Evaluation(format!("sample {} has no label", s.id)))?;
            if self.predict_proba(&s.features)?.argmax() != label {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / samples.len() as f64)
    }

    /// Write `ILEM`, then little-endian `u32` architecture tag, `u32` d,
    /// `u32` C, `u32` hidden units (0 for softmax regression), then the
    /// parameter block as `f32`.
    pub fn save_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let werr = |e: std::io::Error| Error::Report(e.to_string());
        w.write_all(CHECKPOINT_MAGIC).map_err(werr)?;
        for v in [
            self.architecture.tag(),
            self.dim as u32,
            self.classes as u32,
            self.hidden_units() as u32,
        ] {
            w.write_all(&v.to_le_bytes()).map_err(werr)?;
        }
        for &p in &self.params {
            w.write_all(&(p as f32).to_le_bytes()).map_err(werr)?;
        }
        Ok(())
    }

    pub fn load_checkpoint<R: Read>(mut r: R) -> Result<ModelState> {
        let bad = |message: String| Error::Parse { line: 0, message };
        let mut buf = [0u8; 4];
        let mut word = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut buf)
                .map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
            Ok(u32::from_le_bytes(buf))
        };
        if word(&mut r)?.to_le_bytes() != *CHECKPOINT_MAGIC {
            return Err(bad("bad magic, expected ILEM".into()));
        }
        let tag = word(&mut r)?;
        let dim = word(&mut r)? as usize;
        let classes = word(&mut r)? as usize;
        let hidden = word(&mut r)? as usize;
        let architecture = match tag {
            0 => Architecture::SoftmaxRegression,
            1 => Architecture::Mlp {
                hidden_units: hidden,
            },
            t => return Err(bad(format!("unknown architecture tag {t}"))),
        };
        check_shape(architecture, dim, classes)?;
        let params = (0..architecture.parameter_count(dim, classes))
            .map(|_| word(&mut r).map(|bits| f32::from_bits(bits) as f64))
            .collect::<Result<Vec<_>>>()?;
        ModelState::from_parameters(architecture, dim, classes, params)
    }
}

fn check_shape(architecture: Architecture, dim: usize, classes: usize) -> Result<()> {
    if dim < 1 {
        return Err(Error::Config("feature dimension must be >= 1".into()));
    }
    if classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if let Architecture::Mlp { hidden_units: 0 } = architecture {
        return Err(Error::Config("mlp needs at least one hidden unit".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
