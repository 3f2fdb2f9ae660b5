// SPDX-License-Identifier: Apache-2.0

//! Augmentation plans. A plan is an ordered list of transforms whose first
//! entry is always the identity, so the original sample is part of every
//! ensemble.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datasets::Sample;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Transform {
    Identity,
    /// Additive isotropic Gaussian noise.
    GaussianJitter {
        sigma: f64,
    },
    /// Mirror each row of a `rows × cols` grid laid out row-major.
    GridHflip {
        rows: usize,
        cols: usize,
    },
    /// Translate a `rows × cols` grid by `dx` columns and `dy` rows,
    /// zero-filling vacated cells.
    GridShift {
        rows: usize,
        cols: usize,
        dx: i32,
        dy: i32,
    },
}

impl Transform {
    fn grid(&self) -> Option<(usize, usize)> {
        match *self {
            Transform::GridHflip { rows, cols } | Transform::GridShift { rows, cols, .. } => {
                Some((rows, cols))
            }
            _ => None,
        }
    }

    pub fn apply(&self, features: &[f64], stream_seed: u64) -> Result<Vec<f64>> {
        if let Some((rows, cols)) = self.grid() {
            if rows * cols != features.len() {
                return Err(Error::Dimension {
                    expected: rows * cols,
                    found: features.len(),
                });
            }
        }
        Ok(match *self {
            Transform::Identity => features.to_vec(),
            Transform::GaussianJitter { sigma: 0.0 } => features.to_vec(),
            Transform::GaussianJitter { sigma } => {
                let normal = Normal::new(0.0, sigma)
                    .map_err(|e| Error::Config(format!("gaussian_jitter sigma: {e}")))?;
                let mut rng = seed::rng(stream_seed);
                features
                    .iter()
                    .map(|&x| x + normal.sample(&mut rng))
                    .collect()
            }
            Transform::GridHflip { cols, .. } => features
                .chunks(cols)
                .flat_map(|row| row.iter().rev().copied())
                .collect(),
            Transform::GridShift { rows, cols, dx, dy } => {
                let mut out = vec![0.0; features.len()];
                for r in 0..rows {
                    for c in 0..cols {
                        let src_r = r as i64 - dy as i64;
                        let src_c = c as i64 - dx as i64;
                        if (0..rows as i64).contains(&src_r) && (0..cols as i64).contains(&src_c) {
                            out[r * cols + c] = features[src_r as usize * cols + src_c as usize];
                        }
                    }
                }
                out
            }
        })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Transform::GaussianJitter { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                Error::Config(format!("gaussian_jitter sigma must be >= 0, got {sigma}")),
            ),
            Transform::GridHflip { rows, cols } | Transform::GridShift { rows, cols, .. }
                if rows == 0 || cols == 0 =>
            {
                Err(Error::Config("grid transforms need rows, cols >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Transform>", into = "Vec<Transform>")]
pub struct AugmentationPlan {
    transforms: Vec<Transform>,
}

impl AugmentationPlan {
    pub fn new(transforms: Vec<Transform>) -> Result<Self> {
        match transforms.first() {
            Some(Transform::Identity) => {}
            _ => {
                return Err(Error::Config(
                    "augmentation plan must start with identity".into(),
                ))
            }
        }
        for t in &transforms {
            t.validate()?;
        }
        Ok(AugmentationPlan { transforms })
    }

    /// `[identity]` only: a single forward pass.
    pub fn identity() -> Self {
        AugmentationPlan {
            transforms: vec![Transform::Identity],
        }
    }

    /// Ensemble size A.
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    /// Check that every transform accepts `dim`-dimensional inputs.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        for t in &self.transforms {
            if let Some((rows, cols)) = t.grid() {
                if rows * cols != dim {
                    return Err(Error::Dimension {
                        expected: rows * cols,
                        found: dim,
                    });
                }
            }
        }
        Ok(())
    }

    /// The A augmented copies of `sample`, original first. Noise streams are
    /// keyed by `(seed, sample.id, transform index)`.
    pub fn apply(&self, sample: &Sample, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.transforms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.apply(
                    &sample.features,
                    seed::derive(seed, &[u64::from(sample.id), i as u64]),
                )
            })
            .collect()
    }
}

impl TryFrom<Vec<Transform>> for AugmentationPlan {
    type Error = Error;

    fn try_from(transforms: Vec<Transform>) -> Result<Self> {
        AugmentationPlan::new(transforms)
    }
}

impl From<AugmentationPlan> for Vec<Transform> {
    fn from(plan: AugmentationPlan) -> Self {
        plan.transforms
    }
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        AugmentationPlan::identity()
    }
}
