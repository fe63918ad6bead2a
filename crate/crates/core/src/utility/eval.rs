//! Holdout metrics for cost models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::ExplorationSample;
use super::model::CostModel;
use super::UtilityError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub mse: f64,
    pub mae: f64,
    /// Mean per-state Spearman correlation over states whose true costs are
    /// not all equal.
    pub rank_correlation: f64,
    pub label_variance: f64,
    pub n_samples: usize,
    pub n_states: usize,
}

/// Wraps known true costs; answers 1.0 for anything unseen.
#[derive(Debug, Clone, Default)]
pub struct OracleCostModel {
    table: BTreeMap<(String, String), f64>,
}

impl OracleCostModel {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a ExplorationSample>) -> Self {
        let table = samples
            .into_iter()
            .map(|s| ((s.obs_text.clone(), s.action_text.clone()), s.cost as f64))
            .collect();
        OracleCostModel { table }
    }
}

impl CostModel for OracleCostModel {
    fn predict_cost(&self, obs_text: &str, action_text: &str) -> f64 {
        self.table.get(&(obs_text.to_string(), action_text.to_string())).copied().unwrap_or(1.0)
    }
}

/// Predicts the same value for everything.
#[derive(Debug, Clone, Copy)]
pub struct ConstantCostModel(pub f64);

impl CostModel for ConstantCostModel {
    fn predict_cost(&self, _: &str, _: &str) -> f64 {
        self.0
    }
}

/// Average ranks, ties sharing the mean of their positions (1-based).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Spearman's rho; `None` when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Score `model` on `samples`. States are the probe groups when present,
/// otherwise samples sharing an observation text. A state whose predictions
/// are constant while its labels are not counts as zero correlation.
pub fn evaluate_utility(model: &dyn CostModel, samples: &[ExplorationSample]) -> Result<UtilityReport, UtilityError> {
    if samples.is_empty() {
        return Err(UtilityError::EmptyDataset);
    }
    let state_key = |s: &ExplorationSample| match s.probe_state {
        Some(p) => (s.episode_id, Some(p), String::new()),
        None => (s.episode_id, None, s.obs_text.clone()),
    };
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut rhos = Vec::new();
    // Predictions are made per state so a shared observation is featurized once.
    let mut by_obs: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_obs.entry(s.obs_text.as_str()).or_default().push(i);
    }
    let mut preds = vec![0.0; samples.len()];
    for (obs, idx) in &by_obs {
        let actions: Vec<String> = idx.iter().map(|&i| samples[i].action_text.clone()).collect();
        for (&i, p) in idx.iter().zip(model.predict_many(obs, &actions)) {
            preds[i] = p;
        }
    }
    let mut groups: BTreeMap<_, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (s, p) in samples.iter().zip(&preds) {
        let g = groups.entry(state_key(s)).or_default();
        g.0.push(*p);
        g.1.push(s.cost as f64);
        let err = p - s.cost as f64;
        sq += err * err;
        abs += err.abs();
    }
    for (p, labels) in groups.values() {
        if labels.iter().all(|l| *l == labels[0]) {
            continue;
        }
        rhos.push(spearman(p, labels).unwrap_or(0.0));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.cost as f64).sum::<f64>() / n;
    let label_variance = samples.iter().map(|s| (s.cost as f64 - mean).powi(2)).sum::<f64>() / n;
    let (mse, mae) = (sq / n, abs / n);
    if label_variance == 0.0 || rhos.is_empty() {
        return Err(UtilityError::DegenerateHoldout { mse, mae });
    }
    Ok(UtilityReport {
        mse,
        mae,
        rank_correlation: rhos.iter().sum::<f64>() / rhos.len() as f64,
        label_variance,
        n_samples: samples.len(),
        n_states: rhos.len(),
    })
}
