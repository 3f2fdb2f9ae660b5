// SPDX-License-Identifier: Apache-2.0

mod support;

use ile::confidence::{self, combine, metric_ca, metric_cb, metric_cc, score_sample};
use ile::cycle;
use ile::ensemble::{self, ensemble_predict};
use ile::seed;
use ile::synth::SynthSpec;
use ile::threshold::learn_threshold;
use ile::{
    Architecture, ClassDistribution, CombineMode, LoopConfig, MetricWeights, ModelState,
    PrototypeTable, Sample, ScoredSample, ScoringContext, StdMode,
};
use support::*;

fn dist(p: &[f64]) -> ClassDistribution {
    ClassDistribution::new(p.to_vec()).unwrap()
}

#[test]
fn ensemble_matches_straight_line_selection() {
    let mut rng = seed::rng(11);
    for _ in 0..1000 {
        let inst = random_ensemble_instance(&mut rng);
        let rows = instance_rows(&inst);
        for (mode, sample_std) in [(StdMode::Population, false), (StdMode::Sample, true)] {
            let got = ensemble_predict(&inst.model, &inst.plan, &inst.sample, 0, mode).unwrap();
            let (idx, score) = ensemble_choice(&rows, sample_std);
            assert!((got.scaled_max - score).abs() <= 1e-9);
            for (g, e) in got.distribution.probs().iter().zip(&rows[idx]) {
                assert!((g - e).abs() <= 1e-9, "{g} vs {e}");
            }
        }
    }
}

#[test]
fn ensemble_select_prefers_agreeing_rows() {
    let rows = vec![dist(&[0.9, 0.1]), dist(&[0.5, 0.5]), dist(&[0.6, 0.4])];
    let oracle: Vec<Vec<f64>> = rows.iter().map(|r| r.probs().to_vec()).collect();
    let got = ensemble::select(rows, StdMode::Population).unwrap();
    assert_eq!(got.chosen_index, ensemble_choice(&oracle, false).0);
}

#[test]
fn threshold_matches_exhaustive_sweep() {
    let mut rng = seed::rng(12);
    let mut infinite = 0;
    for _ in 0..500 {
        let list = random_scored_list(&mut rng);
        let target = random_target(&mut rng);
        let scored: Vec<ScoredSample> = list
            .iter()
            .map(|&(confidence, ok)| ScoredSample {
                confidence,
                predicted: 0,
                truth: usize::from(!ok),
            })
            .collect();
        let got = learn_threshold(&scored, target).unwrap();
        let expected = exhaustive_threshold(&list, target);
        assert_eq!(got, expected);
        infinite += usize::from(got.is_infinite());
    }
    assert!(infinite > 0, "sentinel path not exercised");
}

fn random_prototypes(rng: &mut rand_chacha::ChaCha8Rng, c: usize) -> PrototypeTable {
    PrototypeTable::from_rows(
        (0..c)
            .map(|_| Some(dist(&random_distribution(rng, c))))
            .collect(),
    )
}

#[test]
fn score_sample_matches_straight_line_pipeline() {
    let mut rng = seed::rng(13);
    for _ in 0..1000 {
        let inst = random_ensemble_instance(&mut rng);
        let c = inst.model.classes();
        let protos = random_prototypes(&mut rng, c);
        let weights = MetricWeights::equal();
        let ctx = ScoringContext {
            model: &inst.model,
            prototypes: &protos,
            plan: &inst.plan,
            weights,
            combine: CombineMode::Bounded,
            std_mode: StdMode::Population,
        };
        let got = score_sample(&ctx, &inst.sample, 5).unwrap();

        let rows = instance_rows(&inst);
        let p = &rows[ensemble_choice(&rows, false).0];
        let mut y1 = 0;
        for k in 1..c {
            if p[k] > p[y1] {
                y1 = k;
            }
        }
        let mut y2 = usize::from(y1 == 0);
        for k in 0..c {
            if k != y1 && p[k] > p[y2] {
                y2 = k;
            }
        }
        let c_a = p[y1];
        let c_b = p[y1] - p[y2];
        let c_c = euclidean(p, protos.get(y1).unwrap().probs());
        let w = [1.0 / 3.0; 3];
        assert_eq!(got.predicted_label, y1);
        assert!((got.c_a - c_a).abs() <= 1e-9);
        assert!((got.c_b - c_b).abs() <= 1e-9);
        assert!((got.c_c - c_c).abs() <= 1e-9);
        assert!((got.combined - combine_bounded(w, c_a, c_b, c_c)).abs() <= 1e-9);
    }
}

#[test]
fn prototype_distance_example() {
    let protos = PrototypeTable::from_rows(vec![Some(dist(&[0.6, 0.4])), None]);
    let got = metric_cc(&dist(&[0.8, 0.2]), &protos).unwrap();
    let oracle = euclidean(&[0.8, 0.2], &[0.6, 0.4]);
    assert!((got - oracle).abs() <= 1e-12);
    assert!((got - 0.2828).abs() <= 1e-4);
}

#[test]
fn combine_example() {
    let w = MetricWeights::equal();
    let got = combine(0.7, 0.5, 0.2828, &w, CombineMode::Bounded);
    let oracle = combine_bounded([1.0 / 3.0; 3], 0.7, 0.5, 0.2828);
    assert!((got - oracle).abs() <= 1e-12);
    assert!((got - 0.65985).abs() <= 5e-6);
}

#[test]
fn metric_ranges_on_fuzzed_distributions() {
    let mut rng = seed::rng(14);
    for _ in 0..10_000 {
        let c = rand::Rng::random_range(&mut rng, 2..=10);
        let d = dist(&random_distribution(&mut rng, c));
        let protos = random_prototypes(&mut rng, c);
        let (a, b) = (metric_ca(&d), metric_cb(&d));
        let cc = metric_cc(&d, &protos).unwrap();
        assert!(a >= 1.0 / c as f64 - 1e-12 && a <= 1.0 + 1e-12, "c_a {a}");
        assert!(b >= 0.0 && b <= a, "c_b {b}");
        assert!((0.0..=2f64.sqrt() + 1e-12).contains(&cc), "c_c {cc}");
        let combined = combine(a, b, cc, &MetricWeights::equal(), CombineMode::Bounded);
        assert!((0.0..=1.0 + 1e-12).contains(&combined));
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = seed::rng(15);
    for mlp in [false, true] {
        for _ in 0..50 {
            let inst = random_gradient_instance(&mut rng, mlp);
            let err = gradient_check(&inst.model, &inst.batch(), inst.l2);
            assert!(err <= 1e-4, "relative error {err} (mlp: {mlp})");
        }
    }
}

#[test]
fn predict_proba_matches_hand_forward_pass() {
    let mut rng = seed::rng(16);
    for _ in 0..200 {
        let inst = random_ensemble_instance(&mut rng);
        let m = &inst.model;
        let got = m.predict_proba(&inst.sample.features).unwrap();
        let expected = posterior(
            m.architecture(),
            m.dim(),
            m.classes(),
            m.parameters(),
            &inst.sample.features,
        );
        for (g, e) in got.probs().iter().zip(&expected) {
            assert!((g - e).abs() <= 1e-12);
        }
    }
}

#[test]
fn prototypes_are_class_means_of_posteriors() {
    let samples = SynthSpec::blobs(3, 6, 1.0, 4).generate().unwrap();
    let params = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
    let model = ModelState::from_parameters(Architecture::SoftmaxRegression, 2, 3, params).unwrap();
    let labelled: Vec<Sample> = samples.iter().filter(|s| s.id % 4 != 0).cloned().collect();
    let table = confidence::build_prototypes(&model, &labelled).unwrap();
    for class in 0..3 {
        let members: Vec<&Sample> = labelled
            .iter()
            .filter(|s| s.assigned_label == Some(class))
            .collect();
        let mut mean = [0.0; 3];
        for s in &members {
            let p = posterior(model.architecture(), 2, 3, model.parameters(), &s.features);
            for k in 0..3 {
                mean[k] += p[k] / members.len() as f64;
            }
        }
        let got = table.get(class).unwrap().probs();
        assert_eq!(table.count(class), members.len());
        for k in 0..3 {
            assert!((got[k] - mean[k]).abs() <= 1e-12);
        }
    }
}

#[test]
fn perfect_target_on_separated_blobs_admits_only_correct_labels() {
    let json = r#"{
        "split": {"labelled_per_class": 5, "validation_count": 50},
        "classifier": {"architecture": {"kind": "softmax_regression"},
                       "train": {"epochs": 100, "learning_rate": 0.1, "batch_size": 16, "l2": 0.0001}},
        "threshold": {"target_accuracy": 1.0},
        "schedule": {"max_iterations": 4, "patience": 0}
    }"#;
    let cfg: LoopConfig = serde_json::from_str(json).unwrap();
    let samples = SynthSpec::blobs(3, 100, 0.3, 21).generate().unwrap();
    let report = cycle::run(&cfg, &samples, 3, 8, 1).unwrap();
    assert!(report.total_added > 0);
    assert_eq!(report.cumulative_addition_accuracy, Some(1.0));
}
