use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crpo::evalbench::{
    chance_rates, evaluate_policy, evaluate_records, pair_accuracy, predict_records, records_for,
    synthetic_manifest, Decode, PairRecord, Predictions, Side,
};
use crpo::optimizer::PolicyParams;
use crpo::seeds::{rng_for, Stream};
use crpo::types::{AnswerId, Direction, ObservationChannel, TaskType};
use crpo::world::{build_paired_benchmark, OptionCounts, WorldConfig};
use proptest::prelude::*;
use rand::Rng;

/// Logit +50 on the correct label for every full-video signature.
fn oracle_policy(records: &[PairRecord]) -> PolicyParams {
    let mut params = PolicyParams::default();
    for r in records {
        for side in Side::BOTH {
            let state = r.state(side).unwrap();
            let obs = crpo::world::observe(state, &r.question, ObservationChannel::FullVideo);
            let label = r.question.label(r.answer(side)).unwrap().to_string();
            let motion = obs.features().last().unwrap();
            params.set(motion, &label, 50.0);
        }
    }
    params
}

#[test]
fn oracle_policy_solves_every_pair() {
    let records = synthetic_manifest(&WorldConfig::default(), 300, 11).unwrap();
    let params = oracle_policy(&records);
    let report = evaluate_records(
        &params,
        &records,
        ObservationChannel::FullVideo,
        Decode::Greedy,
    )
    .unwrap();
    assert_eq!(report.p_acc, 1.0);
    assert_eq!(report.acc, 1.0);
}

#[test]
fn text_only_never_scores_a_pair() {
    let records = synthetic_manifest(&WorldConfig::default(), 300, 12).unwrap();
    let params = oracle_policy(&records);
    let report = evaluate_records(
        &params,
        &records,
        ObservationChannel::TextOnly,
        Decode::Greedy,
    )
    .unwrap();
    assert_eq!(report.p_acc, 0.0);
}

fn direction_only() -> WorldConfig {
    WorldConfig {
        question_mix: [(TaskType::Spatiotemporal, 1.0)].into_iter().collect(),
        direction_set: vec![
            Direction::Left,
            Direction::Right,
            Direction::Up,
            Direction::Down,
        ],
        option_count: OptionCounts {
            direction: 4,
            ..OptionCounts::default()
        },
        ..WorldConfig::default()
    }
}

#[test]
fn uniform_sampler_lands_near_four_way_chance() {
    let world = direction_only();
    let mut rng = rng_for(5, Stream::Eval, 0);
    let pairs = build_paired_benchmark(&world, 10_000, &mut rng).unwrap();
    assert!(pairs.iter().all(|p| p.a.question.options.len() == 4));
    let report = evaluate_policy(
        &PolicyParams::default(),
        &pairs,
        ObservationChannel::FullVideo,
        Decode::Sample { seed: 9 },
    );
    // the null option is a fifth choice, so the sampler sits at 1/25
    assert!((report.p_acc - 0.0625).abs() <= 0.03, "{}", report.p_acc);
    assert!(
        (report.p_acc - 0.04).abs() <= 3.0 * (0.04f64 * 0.96 / 1e4).sqrt(),
        "{}",
        report.p_acc
    );
}

#[test]
fn real_option_guesser_matches_chance_rates() {
    let records = synthetic_manifest(&WorldConfig::default(), 20_000, 3).unwrap();
    let mut rng = rng_for(3, Stream::Eval, 1);
    let mut preds = Predictions::new();
    for r in &records {
        for side in Side::BOTH {
            let k = r.question.options.len();
            preds.insert(
                (r.pair_id.clone(), side),
                AnswerId::Listed(rng.gen_range(0..k)),
            );
        }
    }
    let report = pair_accuracy(&records, &preds).unwrap();
    let counts: Vec<usize> = records.iter().map(|r| r.question.options.len()).collect();
    let (acc, p_acc) = chance_rates(&counts);
    let n = records.len() as f64;
    assert!((report.p_acc - p_acc).abs() <= 3.0 * (p_acc * (1.0 - p_acc) / n).sqrt());
    assert!((report.acc - acc).abs() <= 3.0 * (acc * (1.0 - acc) / (2.0 * n)).sqrt());
}

#[test]
fn subtask_scores_aggregate_to_overall() {
    let records = synthetic_manifest(&WorldConfig::default(), 400, 8).unwrap();
    let report = evaluate_records(
        &PolicyParams::default(),
        &records,
        ObservationChannel::FullVideo,
        Decode::Sample { seed: 1 },
    )
    .unwrap();
    let n: usize = report.per_subtask.values().map(|s| s.n_pairs).sum();
    assert_eq!(n, report.n_pairs);
    let acc: f64 = report
        .per_subtask
        .values()
        .map(|s| s.acc * s.n_pairs as f64)
        .sum::<f64>()
        / n as f64;
    let p_acc: f64 = report
        .per_subtask
        .values()
        .map(|s| s.p_acc * s.n_pairs as f64)
        .sum::<f64>()
        / n as f64;
    assert!((acc - report.acc).abs() < 1e-12);
    assert!((p_acc - report.p_acc).abs() < 1e-12);
}

#[test]
fn records_and_policy_evaluation_agree() {
    let mut rng = rng_for(2, Stream::Eval, 0);
    let pairs =
        build_paired_benchmark(&WorldConfig::default().dynamic_only(), 100, &mut rng).unwrap();
    let records = records_for(&pairs);
    let params = oracle_policy(&records);
    for channel in ObservationChannel::ALL {
        let a = evaluate_policy(&params, &pairs, channel, Decode::Greedy);
        let b = evaluate_records(&params, &records, channel, Decode::Greedy).unwrap();
        assert_eq!(a, b);
    }
}

/// A predictor that sees only the prompt and the option list.
fn side_blind(seed: u64, r: &PairRecord) -> AnswerId {
    let mut h = DefaultHasher::new();
    (seed, &r.question.prompt_key, &r.question.options).hash(&mut h);
    let n = r.question.options.len() + 1;
    AnswerId::from_index((h.finish() % n as u64) as usize, n - 1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn side_blind_predictors_score_zero(seed in any::<u64>(), manifest_seed in 0u64..1000) {
        let records = synthetic_manifest(&WorldConfig::default(), 50, manifest_seed).unwrap();
        let preds: Predictions = records
            .iter()
            .flat_map(|r| Side::BOTH.map(|s| ((r.pair_id.clone(), s), side_blind(seed, r))))
            .collect();
        prop_assert_eq!(pair_accuracy(&records, &preds).unwrap().p_acc, 0.0);
    }

    #[test]
    fn pair_accuracy_never_exceeds_accuracy(seed in any::<u64>(), bias in 0.0f64..1.0) {
        let records = synthetic_manifest(&WorldConfig::default(), 40, seed % 97).unwrap();
        let mut rng = rng_for(seed, Stream::Eval, 0);
        let mut preds = Predictions::new();
        for r in &records {
            for side in Side::BOTH {
                let answer = if rng.gen_bool(bias) {
                    r.answer(side)
                } else {
                    AnswerId::Listed(rng.gen_range(0..r.question.options.len()))
                };
                preds.insert((r.pair_id.clone(), side), answer);
            }
        }
        let report = pair_accuracy(&records, &preds).unwrap();
        prop_assert!(report.p_acc <= report.acc);
    }

    #[test]
    fn greedy_text_only_predictions_match_across_sides(seed in 0u64..500) {
        let records = synthetic_manifest(&WorldConfig::default(), 30, seed).unwrap();
        let mut params = PolicyParams::default();
        let mut rng = rng_for(seed, Stream::Eval, 1);
        for r in &records {
            for label in r.question.choices() {
                params.set(&format!("prompt:{}", r.question.prompt_key), &label, rng.gen_range(-2.0..2.0));
            }
        }
        let preds = predict_records(&params, &records, ObservationChannel::TextOnly, Decode::Greedy).unwrap();
        for r in &records {
            prop_assert_eq!(preds[&(r.pair_id.clone(), Side::A)], preds[&(r.pair_id.clone(), Side::B)]);
        }
    }
}
