//! Mini-batch regression of tick costs with AdamW.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::ExplorationSample;
use super::featurize::{FeatureVector, FeaturizerSpec};
use super::model::{Objective, TrainingMetadata, UtilityModel, ValueHead, HIDDEN, MODEL_FORMAT_VERSION};
use super::UtilityError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub featurizer: FeaturizerSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 0.1,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            featurizer: FeaturizerSpec::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), UtilityError> {
        let bad = |what: &str| Err(UtilityError::InvalidConfig(what.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.featurizer.dim == 0 || self.featurizer.ngram_orders.is_empty() {
            return bad("featurizer needs a dimension and at least one n-gram order");
        }
        Ok(())
    }
}

/// Decoupled weight decay Adam over a flat parameter vector.
struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    decay_mask: Vec<bool>,
}

impl AdamW {
    fn new(head: &ValueHead) -> Self {
        let n = head.params.len();
        let mut decay_mask = vec![false; n];
        for r in head.weight_ranges() {
            decay_mask[r].iter_mut().for_each(|d| *d = true);
        }
        AdamW { m: vec![0.0; n], v: vec![0.0; n], t: 0, decay_mask }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            if self.decay_mask[i] {
                params[i] -= cfg.learning_rate * cfg.weight_decay * params[i];
            }
            params[i] -= cfg.learning_rate * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + cfg.eps);
        }
    }
}

fn label_stats(labels: &[f64]) -> (f64, f64) {
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let var = labels.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-9 { std } else { 1.0 })
}

fn featurize_all(spec: &FeaturizerSpec, samples: &[&ExplorationSample]) -> Vec<(FeatureVector, f64)> {
    samples.iter().map(|s| (spec.featurize(&s.obs_text, &s.action_text), s.cost as f64)).collect()
}

fn mse(obj: &Objective<'_>, data: &[(FeatureVector, f64)]) -> f64 {
    let batch: Vec<(&FeatureVector, f64)> = data.iter().map(|(x, c)| (x, *c)).collect();
    obj.loss(&batch)
}

/// Fit a utility model on `train`; `holdout` only feeds the reported metric.
/// Samples are put into a canonical order first so that the result depends on
/// the sample set and the seed, not on the order the caller supplies.
pub fn train_utility_model(
    train: &[ExplorationSample],
    holdout: &[ExplorationSample],
    cfg: &TrainConfig,
) -> Result<UtilityModel, UtilityError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(UtilityError::EmptyDataset);
    }
    let mut ordered: Vec<&ExplorationSample> = train.iter().collect();
    ordered.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let data = featurize_all(&cfg.featurizer, &ordered);
    let held = featurize_all(&cfg.featurizer, &holdout.iter().collect::<Vec<_>>());
    let labels: Vec<f64> = data.iter().map(|d| d.1).collect();
    let (label_mean, label_scale) = label_stats(&labels);

    let mut head = ValueHead::init(cfg.featurizer.dim, HIDDEN, cfg.seed);
    let mut opt = AdamW::new(&head);
    let mut grad = vec![0.0; head.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut per_epoch = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&FeatureVector, f64)> = chunk.iter().map(|&i| (&data[i].0, data[i].1)).collect();
            let obj = Objective { head: &head, label_mean, label_scale };
            let loss = obj.loss_and_grad(&batch, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(UtilityError::NonFiniteLoss { epoch });
            }
            opt.step(&mut head.params, &grad, cfg);
        }
        let epoch_mse = mse(&Objective { head: &head, label_mean, label_scale }, &data);
        if !epoch_mse.is_finite() {
            return Err(UtilityError::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: train mse {epoch_mse:.4}");
        per_epoch.push(epoch_mse);
    }

    let obj = Objective { head: &head, label_mean, label_scale };
    let final_train_mse = mse(&obj, &data);
    let holdout_mse = (!held.is_empty()).then(|| mse(&obj, &held));
    Ok(UtilityModel {
        format_version: MODEL_FORMAT_VERSION,
        featurizer: cfg.featurizer.clone(),
        head,
        label_mean,
        label_scale,
        metadata: TrainingMetadata {
            config: cfg.clone(),
            epochs: cfg.epochs,
            train_mse_per_epoch: per_epoch,
            final_train_mse,
            holdout_mse,
            n_train: data.len(),
            n_holdout: held.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(obs: &str, act: &str, cost: u32, ep: u64) -> ExplorationSample {
        ExplorationSample { obs_text: obs.into(), action_text: act.into(), cost, episode_id: ep, probe_state: None }
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig { featurizer: FeaturizerSpec { dim: 64, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(train_utility_model(&[], &[], &TrainConfig::default()), Err(UtilityError::EmptyDataset));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrainConfig { batch_size: 0, ..small_cfg() };
        let data = [sample("a", "b", 1, 0)];
        assert!(matches!(train_utility_model(&data, &[], &cfg), Err(UtilityError::InvalidConfig(_))));
    }

    #[test]
    fn huge_learning_rate_is_reported_not_propagated() {
        let cfg = TrainConfig { learning_rate: 1e300, weight_decay: 0.0, ..small_cfg() };
        let data: Vec<_> = (0..50).map(|i| sample(&format!("o{i}"), &format!("a{}", i % 7), 1 + i % 9, 0)).collect();
        match train_utility_model(&data, &[], &cfg) {
            Err(UtilityError::NonFiniteLoss { .. }) => {}
            Ok(m) => assert!(m.head.params.iter().all(|p| p.is_finite())),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn zero_epochs_predicts_mean() {
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        let data = [sample("a", "b", 2, 0), sample("c", "d", 4, 0)];
        let m = train_utility_model(&data, &[], &cfg).unwrap();
        assert!((m.raw_prediction("x", "y") - 3.0).abs() < 1e-12);
        assert!((m.metadata.final_train_mse - 1.0).abs() < 1e-12);
    }
}
