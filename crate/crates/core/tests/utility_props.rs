mod common;

use std::collections::BTreeSet;

use common::*;
use liet_core::utility::{
    collect_exploratory_dataset, evaluate_utility, split_episodes, train_utility, train_utility_model, CollectConfig,
    ConstantCostModel, ExplorationSample, ExploratoryDataset, FeaturizerSpec, OracleCostModel, Split, TrainConfig,
};
use liet_core::world::household_suite;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_dataset(seed: u64) -> ExploratoryDataset {
    let cfg = CollectConfig { episodes_per_task: 1, seed, exploration_horizon: Some(120), ..Default::default() };
    collect_exploratory_dataset(&household_suite(), &cfg).unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig { epochs: 3, featurizer: FeaturizerSpec { dim: 256, ..Default::default() }, ..Default::default() }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let err = gradient_check(seed, 16, 8);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn training_is_bit_deterministic() {
    let ds = small_dataset(3);
    let a = train_utility(&ds, &quick_config()).unwrap();
    let b = train_utility(&ds, &quick_config()).unwrap();
    assert_eq!(a.head.params, b.head.params);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn sample_order_does_not_matter() {
    let ds = small_dataset(4);
    let (train, holdout) = (ds.train(), ds.holdout());
    let mut shuffled = train.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    assert_ne!(shuffled, train);
    let a = train_utility_model(&train, &holdout, &quick_config()).unwrap();
    let b = train_utility_model(&shuffled, &holdout, &quick_config()).unwrap();
    let (ma, mb) = (a.metadata.holdout_mse.unwrap(), b.metadata.holdout_mse.unwrap());
    assert!((ma - mb).abs() <= 1e-9, "{ma} vs {mb}");
}

#[test]
fn mse_is_zero_exactly_for_perfect_predictions() {
    let ds = small_dataset(5);
    let holdout = ds.holdout();
    let perfect = evaluate_utility(&OracleCostModel::from_samples(&holdout), &holdout).unwrap();
    assert_eq!(perfect.mse, 0.0);
    let labels: Vec<f64> = holdout.iter().map(|s| s.cost as f64).collect();
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let constant = evaluate_utility(&ConstantCostModel(mean), &holdout).unwrap();
    assert!(constant.mse > 0.0);
    // The mean predictor's MSE is the label variance.
    assert!((constant.mse - variance(&labels)).abs() < 1e-9);
}

#[test]
fn collected_split_keeps_episodes_whole() {
    let ds = small_dataset(6);
    let train_eps: BTreeSet<u64> = ds.train().iter().map(|s| s.episode_id).collect();
    let hold_eps: BTreeSet<u64> = ds.holdout().iter().map(|s| s.episode_id).collect();
    assert!(train_eps.is_disjoint(&hold_eps));
    assert!(!hold_eps.is_empty() && !train_eps.is_empty());
}

fn sample(ep: u64, cost: u32) -> ExplorationSample {
    ExplorationSample {
        obs_text: format!("obs {ep}"),
        action_text: format!("act {cost}"),
        cost,
        episode_id: ep,
        probe_state: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_by_episode(eps in proptest::collection::btree_set(0u64..500, 2..60), frac in 0.1f64..0.9, seed in any::<u64>()) {
        let split = split_episodes(&eps, frac, seed);
        prop_assert_eq!(split.keys().copied().collect::<BTreeSet<_>>(), eps.clone());
        let mut ds = ExploratoryDataset::default();
        for &e in &eps {
            ds.samples.push(sample(e, 1 + (e % 7) as u32));
            ds.samples.push(sample(e, 2 + (e % 5) as u32));
        }
        ds.split = split.clone();
        let train: BTreeSet<u64> = ds.train().iter().map(|s| s.episode_id).collect();
        let hold: BTreeSet<u64> = ds.holdout().iter().map(|s| s.episode_id).collect();
        prop_assert!(train.is_disjoint(&hold));
        for (e, side) in split {
            prop_assert_eq!(train.contains(&e), side == Split::Train);
        }
    }

    #[test]
    fn mse_never_negative(costs in proptest::collection::vec(1u32..60, 1..40), guess in -10.0f64..80.0) {
        let samples: Vec<ExplorationSample> = costs.iter().enumerate().map(|(i, c)| sample(i as u64, *c)).collect();
        let r = evaluate_utility(&ConstantCostModel(guess), &samples);
        if let Ok(r) = r {
            prop_assert!(r.mse >= 0.0);
            prop_assert_eq!(r.mse == 0.0, costs.iter().all(|c| *c as f64 == guess));
        }
    }
}
