// SPDX-License-Identifier: Apache-2.0

//! Synthetic labelled datasets for desk-scale experiments.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Isotropic Gaussians around centers evenly spaced on a circle.
    Blobs,
    /// Two interleaved half circles.
    Moons,
    /// Concentric rings, one per class.
    Rings,
    /// Random binary 8x8 templates plus Gaussian pixel noise.
    DigitsGrid,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(SynthKind::Blobs),
            "moons" => Ok(SynthKind::Moons),
            "rings" => Ok(SynthKind::Rings),
            "digits_grid" => Ok(SynthKind::DigitsGrid),
            other => Err(Error::Config(format!("unsupported synth kind `{other}`"))),
        }
    }
}

pub const DIGITS_SIDE: usize = 8;

fn default_spread() -> f64 {
    4.0
}

fn default_dim() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub classes: usize,
    pub per_class: usize,
    pub noise: f64,
    pub seed: u64,
    /// Blob center radius.
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Blob feature dimension; centers lie in the first two coordinates.
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl SynthSpec {
    pub fn blobs(classes: usize, per_class: usize, noise: f64, seed: u64) -> Self {
        SynthSpec {
            kind: SynthKind::Blobs,
            classes,
            per_class,
            noise,
            seed,
            spread: default_spread(),
            dim: default_dim(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.kind {
            SynthKind::Blobs => self.dim,
            SynthKind::Moons | SynthKind::Rings => 2,
            SynthKind::DigitsGrid => DIGITS_SIDE * DIGITS_SIDE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_class < 1 {
            return Err(Error::Config("per_class must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("classes must be >= 2".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        if self.kind == SynthKind::Moons && self.classes != 2 {
            return Err(Error::Config("moons has exactly 2 classes".into()));
        }
        if self.kind == SynthKind::Blobs && self.dim < 2 {
            return Err(Error::Config("blobs need dim >= 2".into()));
        }
        Ok(())
    }

    /// Samples `class * per_class + i` for class-major ids.
    pub fn generate(&self) -> Result<Vec<Sample>> {
        self.validate()?;
        let normal = Normal::new(0.0, self.noise).expect("validated noise");
        let mut rng = seed::rng(self.seed);
        let jitter = |rng: &mut rand_chacha::ChaCha8Rng| {
            if self.noise == 0.0 {
                0.0
            } else {
                normal.sample(rng)
            }
        };
        let templates: Vec<Vec<f64>> = if self.kind == SynthKind::DigitsGrid {
            (0..self.classes)
                .map(|_| {
                    (0..DIGITS_SIDE * DIGITS_SIDE)
                        .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };

        let mut out = Vec::with_capacity(self.classes * self.per_class);
        for class in 0..self.classes {
            for i in 0..self.per_class {
                let features = match self.kind {
                    SynthKind::Blobs => {
                        let angle = TAU * class as f64 / self.classes as f64;
                        let mut x = vec![0.0; self.dim];
                        x[0] = self.spread * angle.cos();
                        x[1] = self.spread * angle.sin();
                        x.iter_mut().for_each(|v| *v += jitter(&mut rng));
                        x
                    }
                    SynthKind::Moons => {
                        let t = PI * rng.random::<f64>();
                        let (x, y) = if class == 0 {
                            (t.cos(), t.sin())
                        } else {
                            (1.0 - t.cos(), 0.5 - t.sin())
                        };
                        vec![x + jitter(&mut rng), y + jitter(&mut rng)]
                    }
                    SynthKind::Rings => {
                        let t = TAU * rng.random::<f64>();
                        let r = (class + 1) as f64 + jitter(&mut rng);
                        vec![r * t.cos(), r * t.sin()]
                    }
                    SynthKind::DigitsGrid => templates[class]
                        .iter()
                        .map(|&v| v + jitter(&mut rng))
                        .collect(),
                };
                out.push(Sample::labelled(
                    (class * self.per_class + i) as u32,
                    features,
                    class,
                ));
            }
        }
        Ok(out)
    }
}
