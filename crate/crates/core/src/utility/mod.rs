//! Learned cost estimates for candidate actions.
//!
//! Agents explore at random, log each action's text with the ticks it took,
//! and fit a regressor from `(observation text, action text)` to cost. The
//! text encoder is deterministic feature hashing; the regressor is a two
//! hidden-layer value head trained on squared error.

mod dataset;
mod eval;
mod featurize;
mod model;
mod train;

use thiserror::Error;

pub use dataset::{
    collect_exploratory_dataset, split_episodes, CollectConfig, ExplorationSample, ExploratoryDataset, Split,
    DEFAULT_EXPLORATION_HORIZON, DEFAULT_TRAIN_FRACTION,
};
pub use eval::{average_ranks, evaluate_utility, spearman, ConstantCostModel, OracleCostModel, UtilityReport};
pub use featurize::{tokenize, FeatureVector, FeaturizerSpec, PreparedObs, SEPARATOR};
pub use model::{
    CostModel, Objective, TrainingMetadata, UtilityModel, ValueHead, HIDDEN, MIN_COST, MODEL_FORMAT_VERSION,
};
pub use train::{train_utility_model, TrainConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("dataset has no executed actions")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("holdout labels are all identical; rank correlation undefined (mse {mse:.4}, mae {mae:.4})")]
    DegenerateHoldout { mse: f64, mae: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
    #[error("simulator: {0}")]
    World(String),
}

/// Train on the dataset's train split, reporting holdout MSE in metadata.
pub fn train_utility(dataset: &ExploratoryDataset, cfg: &TrainConfig) -> Result<UtilityModel, UtilityError> {
    train_utility_model(&dataset.train(), &dataset.holdout(), cfg)
}

/// Clamped cost prediction.
pub fn predict_cost(model: &UtilityModel, obs_text: &str, action_text: &str) -> f64 {
    model.predict_cost(obs_text, action_text)
}
