//! The fusion network, its losses, training loop and prediction paths.
//!
//! Everything is hand-differentiated f64; the gradient of every loss is
//! validated against central finite differences in the test suites.

mod checkpoint;
mod features;
mod loss;
mod net;
mod optim;
mod predict;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use features::{wave_stats_features, CovariateScaler, FeatureExtractor};
pub use loss::{
    ensure_positive_event, logistic_hazard_survival, loss_bce, loss_cox_batch, loss_deephit_batch,
    loss_logistic_hazard, loss_mtlr, mtlr_pmf, pmf_survival, DiscreteLabel, LossKind, PROB_FLOOR,
};
pub use net::{
    Architecture, EncoderKind, ForwardCache, FusionNet, NetInput, WaveInput, DEMO_DIM, ENCODER_DIM,
    TRUNK_DIM, WAVE_FEATURES,
};
pub use optim::AdamW;
pub use predict::{
    deepsurv_baseline, predict_curves, predict_curves_with, risk_scores, risk_scores_with,
    Prediction,
};
pub use train::{evaluate_loss, train, EpochStats, TrainConfig, TrainOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error("no events: {0}")]
    NoEvents(String),
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
