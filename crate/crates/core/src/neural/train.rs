//! The training loop: shuffled mini-batches, decoupled-weight-decay
//! adaptive moments, plateau-driven learning-rate decay, early stopping,
//! and minimum-validation-loss checkpointing.

use super::features::FeatureExtractor;
use super::loss::{
    ensure_positive_event, loss_bce, loss_cox_batch, loss_deephit_batch, loss_logistic_hazard,
    loss_mtlr, DiscreteLabel, LossKind,
};
use super::net::{FusionNet, NetInput};
use super::optim::AdamW;
use super::NeuralError;
use crate::data::{horizon_label, Cohort, Split};
use crate::exec::{self, Mode};
use crate::rng::Pcg;
use crate::survival::TimeGrid;

/// Training hyperparameters. Defaults pin the benchmark protocol:
/// learning rate 1e-3 decayed by 0.1 after 10 stale epochs (floored at
/// 1e-8), early stop after 20 stale epochs, at most 200 epochs, batches
/// of 512.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_learning_rate: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub deephit_alpha: f64,
    pub deephit_sigma: f64,
    /// Required when `loss` is [`LossKind::Bce`].
    #[serde(default)]
    pub classifier_horizon_days: Option<f64>,
}

impl TrainConfig {
    pub fn new(loss: LossKind, seed: u64) -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            plateau_patience: 10,
            plateau_factor: 0.1,
            min_learning_rate: 1e-8,
            early_stop_patience: 20,
            max_epochs: 200,
            batch_size: 512,
            weight_decay: 1e-2,
            seed,
            loss,
            deephit_alpha: 0.2,
            deephit_sigma: 0.1,
            classifier_horizon_days: None,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("plateau_factor", self.plateau_factor),
            ("min_learning_rate", self.min_learning_rate),
            ("weight_decay", self.weight_decay),
            ("deephit_alpha", self.deephit_alpha),
            ("deephit_sigma", self.deephit_sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(NeuralError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.plateau_patience == 0
            || self.early_stop_patience == 0
            || self.max_epochs == 0
            || self.batch_size == 0
        {
            return Err(NeuralError::Config("patience, epochs and batch size must be positive".into()));
        }
        if self.early_stop_patience <= self.plateau_patience {
            return Err(NeuralError::Config(format!(
                "early-stop patience {} must exceed plateau patience {}",
                self.early_stop_patience, self.plateau_patience
            )));
        }
        if self.loss == LossKind::Bce && self.classifier_horizon_days.is_none() {
            return Err(NeuralError::Config(
                "classifier loss needs classifier_horizon_days".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameter vector at the minimum validation loss.
    pub best_params: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochStats>,
}

struct SubsetData<'a> {
    inputs: Vec<NetInput<'a>>,
    times: Vec<f64>,
    events: Vec<bool>,
    labels: Vec<DiscreteLabel>,
    bce_labels: Vec<bool>,
}

fn build_subset<'a>(
    cohort: &'a Cohort,
    indices: &[usize],
    grid: &TimeGrid,
    extractor: &FeatureExtractor,
    config: &TrainConfig,
) -> Result<SubsetData<'a>, NeuralError> {
    let inputs = extractor.build_inputs(cohort, indices)?;
    let (times, events) = cohort.times_events(indices);
    let labels = times
        .iter()
        .zip(&events)
        .map(|(&t, &e)| DiscreteLabel::from_grid(grid, t, e))
        .collect();
    let horizon = config.classifier_horizon_days.unwrap_or(f64::INFINITY);
    let bce_labels = times
        .iter()
        .zip(&events)
        .map(|(&t, &e)| horizon_label(t, e, horizon))
        .collect();
    Ok(SubsetData {
        inputs,
        times,
        events,
        labels,
        bce_labels,
    })
}

/// Loss and per-record output gradients for one batch (positions into
/// the subset). Reductions are means per contributing record.
fn batch_loss(
    config: &TrainConfig,
    data: &SubsetData,
    positions: &[usize],
    outputs: &[Vec<f64>],
) -> Result<(f64, Vec<Vec<f64>>), NeuralError> {
    let b = positions.len() as f64;
    match config.loss {
        LossKind::CoxBatch => {
            let risks: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
            let times: Vec<f64> = positions.iter().map(|&p| data.times[p]).collect();
            let events: Vec<bool> = positions.iter().map(|&p| data.events[p]).collect();
            let (loss, grad) = loss_cox_batch(&risks, &times, &events)?;
            Ok((loss, grad.into_iter().map(|g| vec![g]).collect()))
        }
        LossKind::LogisticHazard | LossKind::Mtlr => {
            let mut total = 0.0;
            let mut grads = Vec::with_capacity(positions.len());
            for (k, &p) in positions.iter().enumerate() {
                let (loss, mut grad) = if config.loss == LossKind::LogisticHazard {
                    loss_logistic_hazard(&outputs[k], data.labels[p])
                } else {
                    loss_mtlr(&outputs[k], data.labels[p])
                };
                total += loss;
                for g in grad.iter_mut() {
                    *g /= b;
                }
                grads.push(grad);
            }
            Ok((total / b, grads))
        }
        LossKind::DeepHit => {
            let labels: Vec<DiscreteLabel> = positions.iter().map(|&p| data.labels[p]).collect();
            let times: Vec<f64> = positions.iter().map(|&p| data.times[p]).collect();
            loss_deephit_batch(outputs, &labels, &times, config.deephit_alpha, config.deephit_sigma)
        }
        LossKind::Bce => {
            let mut total = 0.0;
            let mut grads = Vec::with_capacity(positions.len());
            for (k, &p) in positions.iter().enumerate() {
                let (loss, grad) = loss_bce(outputs[k][0], data.bce_labels[p]);
                total += loss;
                grads.push(vec![grad / b]);
            }
            Ok((total / b, grads))
        }
    }
}

fn forward_positions(
    net: &FusionNet,
    data: &SubsetData,
    positions: &[usize],
    mode: Mode,
) -> Result<Vec<super::net::ForwardCache>, NeuralError> {
    let results = exec::map_collect(positions.len(), mode, |k| {
        net.forward_cached(&data.inputs[positions[k]])
    });
    results.into_iter().collect()
}

/// Parameter gradient of one batch: per-record backward passes fanned
/// out over fixed chunks and combined in chunk order.
fn batch_gradient(
    net: &FusionNet,
    caches: &[super::net::ForwardCache],
    d_outputs: &[Vec<f64>],
    mode: Mode,
) -> Vec<f64> {
    exec::map_reduce(
        caches.len(),
        mode,
        |range| {
            let mut grad = vec![0.0; net.param_count()];
            for k in range {
                net.backward(&caches[k], &d_outputs[k], &mut grad);
            }
            grad
        },
        vec![0.0; net.param_count()],
        |mut acc, part| {
            for (a, p) in acc.iter_mut().zip(&part) {
                *a += p;
            }
            acc
        },
    )
}

/// Full-subset loss used for validation (and exposed for checkpoint
/// verification). DeepSurv-style losses use the whole subset as one risk
/// set; per-record losses average over the subset.
pub fn evaluate_loss(
    net: &FusionNet,
    cohort: &Cohort,
    grid: &TimeGrid,
    extractor: &FeatureExtractor,
    config: &TrainConfig,
    split: Split,
) -> Result<f64, NeuralError> {
    let indices = cohort.indices_in(split);
    if indices.is_empty() {
        return Err(NeuralError::State(format!("{split:?} split is empty")));
    }
    let data = build_subset(cohort, &indices, grid, extractor, config)?;
    let positions: Vec<usize> = (0..indices.len()).collect();
    subset_loss(net, &data, &positions, config)
}

fn subset_loss(
    net: &FusionNet,
    data: &SubsetData,
    positions: &[usize],
    config: &TrainConfig,
) -> Result<f64, NeuralError> {
    let outputs: Result<Vec<Vec<f64>>, NeuralError> =
        exec::map_collect(positions.len(), Mode::default(), |k| {
            net.forward(&data.inputs[positions[k]])
        })
        .into_iter()
        .collect();
    let (loss, _) = batch_loss(config, data, positions, &outputs?)?;
    Ok(loss)
}

/// Train on the cohort's Train split, validating on Val each epoch.
///
/// Deterministic given `(seed, config, cohort)`: batch shuffling, event
/// replacement and initialization all derive from the config seed, and
/// batch reductions are chunk-ordered. Returns the parameters at the
/// minimum validation loss and leaves them applied to `net`.
pub fn train(
    net: &mut FusionNet,
    cohort: &Cohort,
    grid: &TimeGrid,
    extractor: &FeatureExtractor,
    config: &TrainConfig,
) -> Result<TrainOutcome, NeuralError> {
    config.validate()?;
    let expected_head = config.loss.head_dim(grid.len());
    if net.arch.head_dim != expected_head {
        return Err(NeuralError::Config(format!(
            "{} needs head dim {expected_head}, net has {}",
            config.loss.name(),
            net.arch.head_dim
        )));
    }
    let train_indices = cohort.indices_in(Split::Train);
    let val_indices = cohort.indices_in(Split::Val);
    if train_indices.is_empty() || val_indices.is_empty() {
        return Err(NeuralError::State(format!(
            "need nonempty Train and Val splits, got {} / {}",
            train_indices.len(),
            val_indices.len()
        )));
    }
    let train_data = build_subset(cohort, &train_indices, grid, extractor, config)?;
    let val_data = build_subset(cohort, &val_indices, grid, extractor, config)?;
    let event_positions: Vec<usize> = (0..train_indices.len())
        .filter(|&p| train_data.events[p])
        .collect();
    if config.loss == LossKind::CoxBatch {
        if event_positions.is_empty() {
            return Err(NeuralError::NoEvents("training split has no events".into()));
        }
        if !val_data.events.iter().any(|&e| e) {
            return Err(NeuralError::NoEvents(
                "validation split has no events; validation loss is undefined".into(),
            ));
        }
    }

    let mut shuffle_rng = Pcg::new(config.seed, 1);
    let mut replace_rng = Pcg::new(config.seed, 2);
    let mut optimizer = AdamW::new(net.param_count());
    let mut lr = config.learning_rate;

    let mut best_params = net.params.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale_plateau = 0usize;
    let mut stale_early = 0usize;
    let mut history = Vec::new();
    let val_positions: Vec<usize> = (0..val_indices.len()).collect();
    let mode = Mode::default();

    for epoch in 1..=config.max_epochs {
        let mut positions: Vec<usize> = (0..train_indices.len()).collect();
        shuffle_rng.shuffle(&mut positions);

        let mut loss_sum = 0.0;
        let mut record_count = 0usize;
        for chunk in positions.chunks(config.batch_size) {
            let mut batch = chunk.to_vec();
            if config.loss == LossKind::CoxBatch {
                ensure_positive_event(&mut batch, &train_data.events, &event_positions, &mut replace_rng)?;
            }
            let caches = forward_positions(net, &train_data, &batch, mode)?;
            let outputs: Vec<Vec<f64>> = caches.iter().map(|c| c.output.clone()).collect();
            let (loss, d_outputs) = batch_loss(config, &train_data, &batch, &outputs)?;
            if !loss.is_finite() {
                return Err(NeuralError::NonFinite {
                    epoch,
                    detail: format!("training loss became {loss}"),
                });
            }
            let grad = batch_gradient(net, &caches, &d_outputs, mode);
            optimizer.step(&mut net.params, &grad, lr, config.weight_decay);
            loss_sum += loss * batch.len() as f64;
            record_count += batch.len();
        }
        let train_loss = loss_sum / record_count as f64;

        let val_loss = subset_loss(net, &val_data, &val_positions, config)?;
        if !val_loss.is_finite() {
            return Err(NeuralError::NonFinite {
                epoch,
                detail: format!("validation loss became {val_loss}"),
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(&net.params);
            stale_plateau = 0;
            stale_early = 0;
        } else {
            stale_plateau += 1;
            stale_early += 1;
            if stale_early >= config.early_stop_patience {
                break;
            }
            if stale_plateau >= config.plateau_patience {
                lr = (lr * config.plateau_factor).max(config.min_learning_rate);
                stale_plateau = 0;
            }
        }
    }

    net.params.copy_from_slice(&best_params);
    Ok(TrainOutcome {
        best_params,
        best_epoch,
        best_val_loss,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::net::{Architecture, EncoderKind};
    use crate::neural::CovariateScaler;
    use crate::survival::GRID_POINTS;

    /// Tiny cohort where training labels push the classifier one way and
    /// validation labels the other, so validation loss never improves
    /// after the first epoch.
    fn adversarial_cohort() -> (Cohort, TimeGrid) {
        let mut records = Vec::new();
        for i in 0..40 {
            let is_val = i >= 30;
            // train: events early; val: censored late
            let (tte, event) = if is_val { (900.0, false) } else { (10.0, true) };
            records.push(crate::data::test_record(
                &format!("p{i}"),
                &format!("e{i}"),
                tte,
                event,
                50.0 + (i % 7) as f64,
                (i % 2) as f64,
            ));
        }
        let mut cohort = Cohort::new(records);
        cohort.split = cohort
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                (r.ecg_id.clone(), if i >= 30 { Split::Val } else { Split::Train })
            })
            .collect();
        let grid = TimeGrid::uniform(1000.0).unwrap();
        (cohort, grid)
    }

    fn extractor_for(cohort: &Cohort, names: &[&str]) -> FeatureExtractor {
        let indices = cohort.indices_in(Split::Train);
        let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        FeatureExtractor {
            encoder: EncoderKind::TabularZero,
            scaler: CovariateScaler::fit(cohort, &indices, &names).unwrap(),
        }
    }

    #[test]
    fn early_stop_fires_and_lr_decays_on_plateau() {
        let (cohort, grid) = adversarial_cohort();
        let extractor = extractor_for(&cohort, &["age", "sex"]);
        let mut config = TrainConfig::new(LossKind::Bce, 3);
        config.classifier_horizon_days = Some(100.0);
        let mut net = FusionNet::init(
            Architecture {
                encoder: EncoderKind::TabularZero,
                covariate_dim: 2,
                head_dim: 1,
            },
            3,
        )
        .unwrap();
        let outcome = train(&mut net, &cohort, &grid, &extractor, &config).unwrap();
        // val loss rises monotonically, so the best epoch is 1 and
        // training stops 20 stale epochs later
        assert_eq!(outcome.best_epoch, 1);
        assert_eq!(outcome.history.len(), 21);
        // plateau decay kicked in once after 10 stale epochs
        assert_eq!(outcome.history[10].learning_rate, 1e-3);
        assert!((outcome.history[11].learning_rate - 1e-4).abs() < 1e-18);
        assert_eq!(outcome.history.last().unwrap().learning_rate, 1e-4);
        // returned parameters achieve exactly the minimum validation loss
        let min_val = outcome
            .history
            .iter()
            .map(|h| h.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(outcome.best_val_loss, min_val);
        let recomputed =
            evaluate_loss(&net, &cohort, &grid, &extractor, &config, Split::Val).unwrap();
        assert_eq!(recomputed.to_bits(), outcome.best_val_loss.to_bits());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (cohort, grid) = adversarial_cohort();
        let extractor = extractor_for(&cohort, &["age", "sex"]);
        let mut config = TrainConfig::new(LossKind::LogisticHazard, 8);
        config.max_epochs = 5;
        config.early_stop_patience = 4;
        config.plateau_patience = 2;
        let arch = Architecture {
            encoder: EncoderKind::TabularZero,
            covariate_dim: 2,
            head_dim: GRID_POINTS,
        };
        let mut net_a = FusionNet::init(arch.clone(), 8).unwrap();
        let mut net_b = FusionNet::init(arch, 8).unwrap();
        let a = train(&mut net_a, &cohort, &grid, &extractor, &config).unwrap();
        let b = train(&mut net_b, &cohort, &grid, &extractor, &config).unwrap();
        assert_eq!(a.best_params.len(), b.best_params.len());
        for (x, y) in a.best_params.iter().zip(&b.best_params) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
        }
    }

    #[test]
    fn config_validation_catches_bad_setups() {
        let mut config = TrainConfig::new(LossKind::Bce, 1);
        assert!(config.validate().is_err(), "bce without horizon");
        config.classifier_horizon_days = Some(10.0);
        assert!(config.validate().is_ok());
        config.early_stop_patience = 5;
        assert!(config.validate().is_err(), "early stop below plateau");
        let mut config = TrainConfig::new(LossKind::Mtlr, 1);
        config.learning_rate = 0.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn head_dim_mismatch_is_config_error() {
        let (cohort, grid) = adversarial_cohort();
        let extractor = extractor_for(&cohort, &["age", "sex"]);
        let config = TrainConfig::new(LossKind::Mtlr, 1);
        let mut net = FusionNet::init(
            Architecture {
                encoder: EncoderKind::TabularZero,
                covariate_dim: 2,
                head_dim: 1,
            },
            1,
        )
        .unwrap();
        assert!(matches!(
            train(&mut net, &cohort, &grid, &extractor, &config),
            Err(NeuralError::Config(_))
        ));
    }

    #[test]
    fn deepsurv_batch_loss_depends_on_batch_composition() {
        // the same record scored in two different batches yields
        // different per-record contributions, unlike logistic hazard
        let risks_a = [0.5, 1.0];
        let risks_b = [0.5, -2.0];
        let times = [1.0, 5.0];
        let events = [true, false];
        let (a, _) = loss_cox_batch(&risks_a, &times, &events).unwrap();
        let (b, _) = loss_cox_batch(&risks_b, &times, &events).unwrap();
        assert!((a - b).abs() > 1e-3, "batch context must matter: {a} vs {b}");
    }
}
