// SPDX-License-Identifier: Apache-2.0

//! Disagreement-penalized selection over an augmentation ensemble.
//!
//! For an A×C matrix of posteriors (one row per augmented copy), the
//! per-class standard deviation across rows is subtracted from every row and
//! the row holding the largest penalized entry wins. The winning row is
//! returned unpenalized.

use serde::{Deserialize, Serialize};

use crate::augment::AugmentationPlan;
use crate::classifier::{ClassDistribution, ModelState};
use crate::datasets::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// Divide by A.
    #[default]
    Population,
    /// Divide by A - 1; zero when A = 1.
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub chosen_index: usize,
    /// Raw model output for the chosen augmentation.
    pub distribution: ClassDistribution,
    /// Per-class standard deviation across the augmentation set.
    pub sigma: Vec<f64>,
    pub scaled_max: f64,
}

/// Per-class standard deviation down the rows of `rows`.
pub fn column_std(rows: &[ClassDistribution], mode: StdMode) -> Vec<f64> {
    let a = rows.len();
    let classes = rows.first().map_or(0, ClassDistribution::classes);
    let denom = match mode {
        StdMode::Population => a as f64,
        StdMode::Sample if a > 1 => (a - 1) as f64,
        StdMode::Sample => return vec![0.0; classes],
    };
    (0..classes)
        .map(|c| {
            let mean = rows.iter().map(|r| r.probs()[c]).sum::<f64>() / a as f64;
            let ss: f64 = rows
                .iter()
                .map(|r| {
                    let dev = r.probs()[c] - mean;
                    dev * dev
                })
                .sum();
            (ss / denom).sqrt()
        })
        .collect()
}

/// Select from precomputed ensemble posteriors. Ties go to the lowest row.
pub fn select(rows: Vec<ClassDistribution>, mode: StdMode) -> Result<EnsembleResult> {
    if rows.is_empty() {
        return Err(Error::Config("empty augmentation ensemble".into()));
    }
    let classes = rows[0].classes();
    if let Some(r) = rows.iter().find(|r| r.classes() != classes) {
        return Err(Error::Dimension {
            expected: classes,
            found: r.classes(),
        });
    }
    let sigma = column_std(&rows, mode);
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, row) in rows.iter().enumerate() {
        let score = row
            .probs()
            .iter()
            .zip(&sigma)
            .map(|(p, s)| p - s)
            .fold(f64::NEG_INFINITY, f64::max);
        if score > best.1 {
            best = (i, score);
        }
    }
    let (chosen_index, scaled_max) = best;
    let distribution = rows.into_iter().nth(chosen_index).expect("index in range");
    Ok(EnsembleResult {
        chosen_index,
        distribution,
        sigma,
        scaled_max,
    })
}

/// Run every augmentation of `sample` through `model` and select.
pub fn ensemble_predict(
    model: &ModelState,
    plan: &AugmentationPlan,
    sample: &Sample,
    seed: u64,
    mode: StdMode,
) -> Result<EnsembleResult> {
    let rows = plan
        .apply(sample, seed)?
        .iter()
        .map(|x| model.predict_proba(x))
        .collect::<Result<Vec<_>>>()?;
    select(rows, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Transform;
    use crate::classifier::Architecture;

    fn dist(p: &[f64]) -> ClassDistribution {
        ClassDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_sigma() {
        let r = select(
            vec![dist(&[0.6, 0.4]), dist(&[0.6, 0.4])],
            StdMode::Population,
        )
        .unwrap();
        assert_eq!(r.sigma, vec![0.0, 0.0]);
        assert_eq!(r.chosen_index, 0);
        assert_eq!(r.distribution, dist(&[0.6, 0.4]));
    }

    #[test]
    fn disagreement_penalty_worked_example() {
        let r = select(
            vec![dist(&[0.9, 0.1]), dist(&[0.5, 0.5])],
            StdMode::Population,
        )
        .unwrap();
        assert!((r.sigma[0] - 0.2).abs() < 1e-12);
        assert!((r.sigma[1] - 0.2).abs() < 1e-12);
        assert!((r.scaled_max - 0.7).abs() < 1e-12);
        assert_eq!(r.chosen_index, 0);
        assert_eq!(r.distribution, dist(&[0.9, 0.1]));
    }

    #[test]
    fn later_row_can_win() {
        let r = select(
            vec![dist(&[0.5, 0.5]), dist(&[0.2, 0.8]), dist(&[0.4, 0.6])],
            StdMode::Population,
        )
        .unwrap();
        assert_eq!(r.chosen_index, 1);
    }

    #[test]
    fn sample_std_single_row_is_zero() {
        let r = select(vec![dist(&[0.3, 0.7])], StdMode::Sample).unwrap();
        assert_eq!(r.sigma, vec![0.0, 0.0]);
        let two = column_std(&[dist(&[0.9, 0.1]), dist(&[0.5, 0.5])], StdMode::Sample);
        assert!((two[0] - 0.08f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_augmentation_reduces_to_predict_proba() {
        let model = ModelState::from_parameters(
            Architecture::SoftmaxRegression,
            2,
            3,
            vec![1.0, -1.0, 0.5, 0.5, -2.0, 0.0, 0.1, 0.2, 0.3],
        )
        .unwrap();
        let s = Sample::unlabelled(0, vec![0.3, -0.8]);
        let r = ensemble_predict(
            &model,
            &AugmentationPlan::identity(),
            &s,
            1,
            StdMode::Population,
        )
        .unwrap();
        assert_eq!(r.chosen_index, 0);
        assert_eq!(r.distribution, model.predict_proba(&s.features).unwrap());
        assert_eq!(r.sigma, vec![0.0; 3]);

        let zero_noise = AugmentationPlan::new(vec![
            Transform::Identity,
            Transform::GaussianJitter { sigma: 0.0 },
            Transform::GaussianJitter { sigma: 0.0 },
        ])
        .unwrap();
        let r = ensemble_predict(&model, &zero_noise, &s, 1, StdMode::Population).unwrap();
        assert_eq!(r.distribution, model.predict_proba(&s.features).unwrap());
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert!(select(vec![], StdMode::Population).is_err());
    }
}
