use crpo::evalbench::{evaluate_records, synthetic_manifest, Decode};
use crpo::optimizer::{train, Algorithm, NormScheme, PolicyParams, TrainConfig};
use crpo::types::{ObservationChannel, RewardConfig};
use crpo::world::WorldConfig;

fn short(algorithm: Algorithm) -> TrainConfig {
    TrainConfig {
        steps: 40,
        algorithm,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn every_algorithm_trains_and_reports() {
    let world = WorldConfig::default();
    for algorithm in [
        Algorithm::Grpo,
        Algorithm::Tgrpo,
        Algorithm::ArrowRl,
        Algorithm::Crpo,
    ] {
        let (params, diags) = train(
            &PolicyParams::default(),
            &world,
            &short(algorithm),
            &RewardConfig::default(),
        )
        .unwrap();
        assert_eq!(diags.len(), 40);
        params.validate().unwrap();
        for (i, d) in diags.iter().enumerate() {
            assert_eq!(d.step, i);
            assert_eq!(d.algorithm, algorithm);
            assert!((0.0..=1.0).contains(&d.zero_advantage_fraction));
            assert!((0.0..=1.0).contains(&d.zero_advantage_fraction_merged));
            assert!((0.0..=1.0).contains(&d.mean_correct_reward));
            assert_eq!(d.csv_row().split(',').count(), 8);
        }
    }
}

#[test]
fn baselines_carry_no_crr() {
    let world = WorldConfig::default();
    for algorithm in [Algorithm::Grpo, Algorithm::Tgrpo, Algorithm::ArrowRl] {
        let (_, diags) = train(
            &PolicyParams::default(),
            &world,
            &short(algorithm),
            &RewardConfig::default(),
        )
        .unwrap();
        assert!(
            diags.iter().all(|d| d.mean_crr_reward == 0.0),
            "{algorithm}"
        );
    }
}

#[test]
fn training_is_reproducible() {
    let world = WorldConfig::default();
    let cfg = short(Algorithm::Crpo);
    let a = train(
        &PolicyParams::default(),
        &world,
        &cfg,
        &RewardConfig::default(),
    )
    .unwrap();
    let b = train(
        &PolicyParams::default(),
        &world,
        &cfg,
        &RewardConfig::default(),
    )
    .unwrap();
    assert_eq!(a, b);
    let other = TrainConfig { seed: 5, ..cfg };
    let c = train(
        &PolicyParams::default(),
        &world,
        &other,
        &RewardConfig::default(),
    )
    .unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn every_norm_scheme_improves_on_the_blank_policy() {
    let world = WorldConfig::default();
    let records = synthetic_manifest(&world, 200, 1).unwrap();
    let blank = evaluate_records(
        &PolicyParams::default(),
        &records,
        ObservationChannel::FullVideo,
        Decode::Greedy,
    )
    .unwrap()
    .acc;
    for norm_scheme in NormScheme::ALL {
        let cfg = TrainConfig {
            steps: 300,
            norm_scheme,
            ..TrainConfig::default()
        };
        let (params, _) = train(
            &PolicyParams::default(),
            &world,
            &cfg,
            &RewardConfig::default(),
        )
        .unwrap();
        let acc = evaluate_records(
            &params,
            &records,
            ObservationChannel::FullVideo,
            Decode::Greedy,
        )
        .unwrap()
        .acc;
        assert!(acc > blank, "{norm_scheme:?}: {acc} <= {blank}");
    }
}

#[test]
fn invalid_settings_name_their_field() {
    let world = WorldConfig::default();
    let cfg = TrainConfig {
        group_size: 1,
        ..TrainConfig::default()
    };
    let err = train(
        &PolicyParams::default(),
        &world,
        &cfg,
        &RewardConfig::default(),
    )
    .unwrap_err();
    assert!(err.to_string().starts_with("train.group_size"), "{err}");
    let reward = RewardConfig {
        w_aug: -1.0,
        ..RewardConfig::default()
    };
    let err = train(
        &PolicyParams::default(),
        &world,
        &short(Algorithm::Crpo),
        &reward,
    )
    .unwrap_err();
    assert!(err.to_string().starts_with("reward.w_aug"), "{err}");
}
