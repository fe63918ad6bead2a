//! Value head: a small fully connected network over hashed text features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::featurize::{FeatureVector, FeaturizerSpec};
use super::train::TrainConfig;
use super::UtilityError;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const HIDDEN: usize = 32;
/// No action takes less than one tick.
pub const MIN_COST: f64 = 1.0;

/// `dim -> hidden -> hidden -> 1` with ReLU activations. All parameters live
/// in one flat vector: W1 (dim x hidden, input-major), b1, W2 (hidden x
/// hidden), b2, w3, b3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueHead {
    pub dim: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct Activations {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    pub(crate) out: f64,
}

impl ValueHead {
    pub fn param_count(dim: usize, hidden: usize) -> usize {
        dim * hidden + hidden + hidden * hidden + hidden + hidden + 1
    }

    fn offsets(&self) -> [usize; 6] {
        let h = self.hidden;
        let w1 = 0;
        let b1 = w1 + self.dim * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + h;
        [w1, b1, w2, b2, w3, b3]
    }

    /// Ranges of the weight matrices (decayed); biases are excluded.
    pub(crate) fn weight_ranges(&self) -> [std::ops::Range<usize>; 3] {
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        [w1..b1, w2..b2, w3..b3]
    }

    /// He-uniform hidden layers; the output layer starts at zero so an
    /// untrained head predicts the label mean.
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut head = Self::random(dim, hidden, seed);
        let [.., w3, _] = head.offsets();
        for p in &mut head.params[w3..] {
            *p = 0.0;
        }
        head
    }

    /// Every parameter random, including the output layer.
    pub fn random(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = ValueHead { dim, hidden, params: vec![0.0; Self::param_count(dim, hidden)] };
        let [w1, b1, w2, b2, w3, b3] = head.offsets();
        let bound1 = (6.0 / 8.0f64).sqrt();
        let bound2 = (6.0 / hidden as f64).sqrt();
        for p in &mut head.params[w1..b1] {
            *p = rng.gen_range(-bound1..bound1);
        }
        for p in &mut head.params[w2..b2] {
            *p = rng.gen_range(-bound2..bound2);
        }
        for p in &mut head.params[w3..b3] {
            *p = rng.gen_range(-bound2..bound2) * 0.5;
        }
        for r in [b1..w2, b2..w3] {
            for p in &mut head.params[r] {
                *p = rng.gen_range(-0.1..0.1);
            }
        }
        head.params[b3] = rng.gen_range(-0.1..0.1);
        head
    }

    pub(crate) fn forward(&self, x: &FeatureVector) -> Activations {
        let h = self.hidden;
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let p = &self.params;
        let mut z1 = p[b1..b1 + h].to_vec();
        for (&i, &v) in x.indices.iter().zip(&x.values) {
            let row = &p[w1 + i as usize * h..w1 + (i as usize + 1) * h];
            for (z, w) in z1.iter_mut().zip(row) {
                *z += v * w;
            }
        }
        let a1: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
        let mut z2 = p[b2..b2 + h].to_vec();
        for (j, &a) in a1.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &p[w2 + j * h..w2 + (j + 1) * h];
            for (z, w) in z2.iter_mut().zip(row) {
                *z += a * w;
            }
        }
        let a2: Vec<f64> = z2.iter().map(|z| z.max(0.0)).collect();
        let out = p[b3] + a2.iter().zip(&p[w3..w3 + h]).map(|(a, w)| a * w).sum::<f64>();
        Activations { z1, a1, z2, a2, out }
    }

    pub fn output(&self, x: &FeatureVector) -> f64 {
        self.forward(x).out
    }

    /// Accumulate `d_out * d(out)/d(params)` into `grad`.
    pub(crate) fn backward(&self, x: &FeatureVector, act: &Activations, d_out: f64, grad: &mut [f64]) {
        let h = self.hidden;
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let p = &self.params;
        grad[b3] += d_out;
        let mut d_z2 = vec![0.0; h];
        for k in 0..h {
            grad[w3 + k] += d_out * act.a2[k];
            if act.z2[k] > 0.0 {
                d_z2[k] = d_out * p[w3 + k];
            }
        }
        let mut d_z1 = vec![0.0; h];
        for j in 0..h {
            let row = w2 + j * h;
            let mut d_a1 = 0.0;
            for k in 0..h {
                grad[row + k] += act.a1[j] * d_z2[k];
                d_a1 += p[row + k] * d_z2[k];
            }
            if act.z1[j] > 0.0 {
                d_z1[j] = d_a1;
            }
        }
        for k in 0..h {
            grad[b2 + k] += d_z2[k];
            grad[b1 + k] += d_z1[k];
        }
        for (&i, &v) in x.indices.iter().zip(&x.values) {
            let row = w1 + i as usize * h;
            for j in 0..h {
                grad[row + j] += v * d_z1[j];
            }
        }
    }
}

/// Regression objective: mean squared error between labels and
/// `mean + scale * head(x)`.
pub struct Objective<'a> {
    pub head: &'a ValueHead,
    pub label_mean: f64,
    pub label_scale: f64,
}

impl Objective<'_> {
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        self.label_mean + self.label_scale * self.head.output(x)
    }

    pub fn loss(&self, batch: &[(&FeatureVector, f64)]) -> f64 {
        let n = batch.len().max(1) as f64;
        batch.iter().map(|(x, c)| (c - self.predict(x)).powi(2)).sum::<f64>() / n
    }

    /// Loss and its gradient with respect to every head parameter.
    pub fn loss_and_grad(&self, batch: &[(&FeatureVector, f64)], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = batch.len().max(1) as f64;
        let mut loss = 0.0;
        for (x, c) in batch {
            let act = self.head.forward(x);
            let pred = self.label_mean + self.label_scale * act.out;
            let err = pred - c;
            loss += err * err;
            self.head.backward(x, &act, 2.0 * err * self.label_scale / n, grad);
        }
        loss / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: TrainConfig,
    pub epochs: usize,
    pub train_mse_per_epoch: Vec<f64>,
    pub final_train_mse: f64,
    pub holdout_mse: Option<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
}

/// A trained cost regressor: featurizer, value head and label scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityModel {
    pub format_version: u32,
    pub featurizer: FeaturizerSpec,
    pub head: ValueHead,
    pub label_mean: f64,
    pub label_scale: f64,
    pub metadata: TrainingMetadata,
}

/// Anything that can estimate the tick cost of an action from text.
pub trait CostModel {
    fn predict_cost(&self, obs_text: &str, action_text: &str) -> f64;

    /// Costs of several candidates sharing one observation.
    fn predict_many(&self, obs_text: &str, actions: &[String]) -> Vec<f64> {
        actions.iter().map(|a| self.predict_cost(obs_text, a)).collect()
    }
}

impl UtilityModel {
    fn objective(&self) -> Objective<'_> {
        Objective { head: &self.head, label_mean: self.label_mean, label_scale: self.label_scale }
    }

    /// Unclamped regression output.
    pub fn raw_prediction(&self, obs_text: &str, action_text: &str) -> f64 {
        self.objective().predict(&self.featurizer.featurize(obs_text, action_text))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, UtilityError> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text).map_err(|e| UtilityError::Format(e.to_string()))?;
        if v.format_version != MODEL_FORMAT_VERSION {
            return Err(UtilityError::Format(format!("unsupported model format version {}", v.format_version)));
        }
        let model: UtilityModel = serde_json::from_str(text).map_err(|e| UtilityError::Format(e.to_string()))?;
        let expected = ValueHead::param_count(model.head.dim, model.head.hidden);
        if model.head.params.len() != expected || model.head.dim != model.featurizer.dim {
            return Err(UtilityError::Format("parameter shapes inconsistent".into()));
        }
        if model.head.params.iter().any(|p| !p.is_finite()) {
            return Err(UtilityError::Format("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), UtilityError> {
        std::fs::write(path, self.to_json()).map_err(|e| UtilityError::Io(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, UtilityError> {
        let text = std::fs::read_to_string(path).map_err(|e| UtilityError::Io(e.to_string()))?;
        Self::from_json(&text)
    }
}

impl CostModel for UtilityModel {
    fn predict_cost(&self, obs_text: &str, action_text: &str) -> f64 {
        self.raw_prediction(obs_text, action_text).max(MIN_COST)
    }

    fn predict_many(&self, obs_text: &str, actions: &[String]) -> Vec<f64> {
        let prepared = self.featurizer.prepare(obs_text);
        let objective = self.objective();
        actions
            .iter()
            .map(|a| objective.predict(&self.featurizer.featurize_prepared(&prepared, a)).max(MIN_COST))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(spec: &FeaturizerSpec, a: &str) -> FeatureVector {
        spec.featurize("obs", a)
    }

    #[test]
    fn zero_output_layer_predicts_mean() {
        let spec = FeaturizerSpec { dim: 16, ..Default::default() };
        let head = ValueHead::init(16, HIDDEN, 1);
        let obj = Objective { head: &head, label_mean: 3.0, label_scale: 2.0 };
        assert_eq!(obj.predict(&fv(&spec, "x")), 3.0);
    }

    #[test]
    fn mean_predictor_on_two_and_four() {
        let spec = FeaturizerSpec { dim: 16, ..Default::default() };
        let head = ValueHead::init(16, HIDDEN, 1);
        let obj = Objective { head: &head, label_mean: 3.0, label_scale: 1.0 };
        let (a, b) = (fv(&spec, "a"), fv(&spec, "b"));
        assert!((obj.loss(&[(&a, 2.0), (&b, 4.0)]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_layout_shapes() {
        let head = ValueHead::init(2048, HIDDEN, 0);
        assert_eq!(head.params.len(), 2048 * 32 + 32 + 32 * 32 + 32 + 32 + 1);
    }
}
