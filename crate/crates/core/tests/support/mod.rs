// SPDX-License-Identifier: Apache-2.0

//! Straight-line reference implementations and random instance generators
//! shared by the oracle tests and the acceptance suite.

#![allow(dead_code)]

use ile::{Architecture, AugmentationPlan, ModelState, Sample, Transform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Softmax of `logits`, max-shifted.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &z in logits {
        if z > m {
            m = z;
        }
    }
    let mut e = Vec::new();
    let mut total = 0.0;
    for &z in logits {
        let v = (z - m).exp();
        e.push(v);
        total += v;
    }
    for v in e.iter_mut() {
        *v /= total;
    }
    e
}

/// Posterior from flat parameters laid out as `[W (c×d), b]` for softmax
/// regression or `[W1 (h×d), b1, W2 (c×h), b2]` for the MLP.
pub fn posterior(arch: Architecture, d: usize, c: usize, params: &[f64], x: &[f64]) -> Vec<f64> {
    match arch {
        Architecture::SoftmaxRegression => {
            let mut logits = vec![0.0; c];
            for k in 0..c {
                let mut z = params[c * d + k];
                for j in 0..d {
                    z += params[k * d + j] * x[j];
                }
                logits[k] = z;
            }
            softmax(&logits)
        }
        Architecture::Mlp { hidden_units: h } => {
            let b1 = h * d;
            let w2 = b1 + h;
            let b2 = w2 + c * h;
            let mut act = vec![0.0; h];
            for u in 0..h {
                let mut z = params[b1 + u];
                for j in 0..d {
                    z += params[u * d + j] * x[j];
                }
                act[u] = z.tanh();
            }
            let mut logits = vec![0.0; c];
            for k in 0..c {
                let mut z = params[b2 + k];
                for u in 0..h {
                    z += params[w2 + k * h + u] * act[u];
                }
                logits[k] = z;
            }
            softmax(&logits)
        }
    }
}

/// Deterministic grid transforms, written cell by cell.
pub fn transform(t: &Transform, x: &[f64]) -> Vec<f64> {
    match *t {
        Transform::Identity => x.to_vec(),
        Transform::GridHflip { rows, cols } => {
            let mut out = vec![0.0; x.len()];
            for r in 0..rows {
                for c in 0..cols {
                    out[r * cols + c] = x[r * cols + (cols - 1 - c)];
                }
            }
            out
        }
        Transform::GridShift { rows, cols, dx, dy } => {
            let mut out = vec![0.0; x.len()];
            for r in 0..rows as i64 {
                for c in 0..cols as i64 {
                    let (sr, sc) = (r - dy as i64, c - dx as i64);
                    if sr >= 0 && sr < rows as i64 && sc >= 0 && sc < cols as i64 {
                        out[(r * cols as i64 + c) as usize] = x[(sr * cols as i64 + sc) as usize];
                    }
                }
            }
            out
        }
        Transform::GaussianJitter { .. } => panic!("oracle covers deterministic transforms only"),
    }
}

/// Chosen row index and its score `max_c (z[a][c] - sigma_c)`, first row on
/// ties.
pub fn ensemble_choice(rows: &[Vec<f64>], sample_std: bool) -> (usize, f64) {
    let a = rows.len();
    let c = rows[0].len();
    let mut sigma = vec![0.0; c];
    for k in 0..c {
        let mut mean = 0.0;
        for r in rows {
            mean += r[k];
        }
        mean /= a as f64;
        let mut ss = 0.0;
        for r in rows {
            ss += (r[k] - mean) * (r[k] - mean);
        }
        sigma[k] = if sample_std {
            if a > 1 {
                (ss / (a - 1) as f64).sqrt()
            } else {
                0.0
            }
        } else {
            (ss / a as f64).sqrt()
        };
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, r) in rows.iter().enumerate() {
        let mut s = f64::NEG_INFINITY;
        for k in 0..c {
            s = s.max(r[k] - sigma[k]);
        }
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    (best, best_score)
}

/// Every candidate confidence value is tried; the smallest one whose
/// admitted subset reaches `target` wins, `+inf` when none does.
pub fn exhaustive_threshold(scored: &[(f64, bool)], target: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &(t, _) in scored {
        let mut pass = 0usize;
        let mut correct = 0usize;
        for &(c, ok) in scored {
            if c >= t {
                pass += 1;
                if ok {
                    correct += 1;
                }
            }
        }
        if correct as f64 / pass as f64 >= target && t < best {
            best = t;
        }
    }
    best
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn combine_bounded(w: [f64; 3], c_a: f64, c_b: f64, c_c: f64) -> f64 {
    w[0] * c_a + w[1] * c_b + w[2] / (1.0 + c_c)
}

pub struct EnsembleInstance {
    pub model: ModelState,
    pub plan: AugmentationPlan,
    pub sample: Sample,
}

/// A random model (A ≤ 6 augmentations, C ≤ 5 classes) with a grid-shaped
/// input so every transform is deterministic.
pub fn random_ensemble_instance(rng: &mut ChaCha8Rng) -> EnsembleInstance {
    let rows = rng.random_range(1..=3);
    let cols = rng.random_range(1..=3);
    let d = rows * cols;
    let c = rng.random_range(2..=5);
    let arch = if rng.random_bool(0.5) {
        Architecture::SoftmaxRegression
    } else {
        Architecture::Mlp {
            hidden_units: rng.random_range(1..=4),
        }
    };
    let scale = rng.random_range(0.1..4.0);
    let params = (0..arch.parameter_count(d, c))
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let model = ModelState::from_parameters(arch, d, c, params).unwrap();
    let a = rng.random_range(1..=6);
    let mut transforms = vec![Transform::Identity];
    while transforms.len() < a {
        transforms.push(if rng.random_bool(0.4) {
            Transform::GridHflip { rows, cols }
        } else {
            Transform::GridShift {
                rows,
                cols,
                dx: rng.random_range(-1..=1),
                dy: rng.random_range(-1..=1),
            }
        });
    }
    let plan = AugmentationPlan::new(transforms).unwrap();
    let features = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let sample = Sample::unlabelled(rng.random_range(0..10_000), features);
    EnsembleInstance {
        model,
        plan,
        sample,
    }
}

/// Oracle posterior rows for an instance.
pub fn instance_rows(inst: &EnsembleInstance) -> Vec<Vec<f64>> {
    let m = &inst.model;
    inst.plan
        .transforms()
        .iter()
        .map(|t| {
            posterior(
                m.architecture(),
                m.dim(),
                m.classes(),
                m.parameters(),
                &transform(t, &inst.sample.features),
            )
        })
        .collect()
}

/// A random scored list with ties and confidence-dependent correctness.
pub fn random_scored_list(rng: &mut ChaCha8Rng) -> Vec<(f64, bool)> {
    let n = rng.random_range(1..=500);
    let levels: Option<u32> = rng.random_bool(0.5).then(|| rng.random_range(2..30));
    (0..n)
        .map(|_| {
            let mut c: f64 = rng.random();
            if let Some(l) = levels {
                c = (c * f64::from(l)).floor() / f64::from(l);
            }
            let ok = rng.random_bool(0.3 + 0.7 * c);
            (c, ok)
        })
        .collect()
}

pub fn random_target(rng: &mut ChaCha8Rng) -> f64 {
    match rng.random_range(0..5) {
        0 => 1.0,
        1 => 0.99,
        2 => 0.9,
        3 => 0.5,
        _ => rng.random_range(0.01..1.0),
    }
}

/// Largest relative gap between the analytic gradient and central
/// differences of the loss, over every parameter.
pub fn gradient_check(model: &ModelState, batch: &[(&[f64], usize)], l2: f64) -> f64 {
    let (_, grad) = model.loss_and_gradient(batch, l2);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..model.parameters().len() {
        let mut plus = model.clone();
        plus.parameters_mut()[i] += h;
        let mut minus = model.clone();
        minus.parameters_mut()[i] -= h;
        let fd = (plus.loss_and_gradient(batch, l2).0 - minus.loss_and_gradient(batch, l2).0)
            / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}

pub struct GradientInstance {
    pub model: ModelState,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub l2: f64,
}

impl GradientInstance {
    pub fn batch(&self) -> Vec<(&[f64], usize)> {
        self.inputs
            .iter()
            .map(Vec::as_slice)
            .zip(self.labels.iter().copied())
            .collect()
    }
}

/// d ≤ 5, C ≤ 4, at most 10 samples.
pub fn random_gradient_instance(rng: &mut ChaCha8Rng, mlp: bool) -> GradientInstance {
    let d = rng.random_range(1..=5);
    let c = rng.random_range(2..=4);
    let arch = if mlp {
        Architecture::Mlp {
            hidden_units: rng.random_range(1..=4),
        }
    } else {
        Architecture::SoftmaxRegression
    };
    let params = (0..arch.parameter_count(d, c))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let model = ModelState::from_parameters(arch, d, c, params).unwrap();
    let n = rng.random_range(1..=10);
    let inputs = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    let l2 = if rng.random_bool(0.5) { 0.0 } else { 0.01 };
    GradientInstance {
        model,
        inputs,
        labels,
        l2,
    }
}

/// A random distribution over `c` classes: peaked, flat, or one-hot-like.
pub fn random_distribution(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let scale = match rng.random_range(0..3) {
        0 => 0.01,
        1 => 2.0,
        _ => 40.0,
    };
    let logits: Vec<f64> = (0..c).map(|_| rng.random_range(-scale..scale)).collect();
    softmax(&logits)
}
