//! Survival-curve and biomarker prediction from a trained net.

use super::loss::{logistic_hazard_survival, mtlr_pmf, pmf_survival, LossKind};
use super::net::{FusionNet, NetInput};
use super::NeuralError;
use crate::exec::{self, Mode};
use crate::survival::{BreslowBaseline, SurvivalCurve, TimeGrid};

/// What a trained head produces on a record set.
#[derive(Debug, Clone)]
pub enum Prediction {
    Curves(Vec<SurvivalCurve>),
    /// Classifier heads produce a sigmoid probability per record, used
    /// as the biomarker of the downstream Cox stage.
    Biomarkers(Vec<f64>),
}

impl Prediction {
    pub fn curves(self) -> Result<Vec<SurvivalCurve>, NeuralError> {
        match self {
            Prediction::Curves(c) => Ok(c),
            Prediction::Biomarkers(_) => Err(NeuralError::Config(
                "expected curves, got classifier biomarkers".into(),
            )),
        }
    }

    pub fn biomarkers(self) -> Result<Vec<f64>, NeuralError> {
        match self {
            Prediction::Biomarkers(b) => Ok(b),
            Prediction::Curves(_) => Err(NeuralError::Config(
                "expected classifier biomarkers, got curves".into(),
            )),
        }
    }
}

/// Log-risk head outputs over a record set (head dim must be 1).
pub fn risk_scores(net: &FusionNet, inputs: &[NetInput]) -> Result<Vec<f64>, NeuralError> {
    risk_scores_with(net, inputs, Mode::default())
}

/// [`risk_scores`] with an explicit execution mode (for benches).
pub fn risk_scores_with(
    net: &FusionNet,
    inputs: &[NetInput],
    mode: Mode,
) -> Result<Vec<f64>, NeuralError> {
    if net.arch.head_dim != 1 {
        return Err(NeuralError::Config(format!(
            "risk scores need a 1-dim head, net has {}",
            net.arch.head_dim
        )));
    }
    exec::map_collect(inputs.len(), mode, |i| net.forward(&inputs[i]).map(|o| o[0]))
        .into_iter()
        .collect()
}

/// Breslow baseline for a trained log-risk head, fitted on the training
/// records it was optimized against.
pub fn deepsurv_baseline(
    net: &FusionNet,
    train_inputs: &[NetInput],
    train_times: &[f64],
    train_events: &[bool],
) -> Result<BreslowBaseline, NeuralError> {
    let risks = risk_scores(net, train_inputs)?;
    BreslowBaseline::fit(train_times, train_events, &risks)
        .map_err(|e| NeuralError::State(format!("baseline fit failed: {e}")))
}

/// Predict per-record survival curves (or classifier biomarkers) on the
/// grid. Log-risk heads need the Breslow baseline fitted on their
/// training data.
pub fn predict_curves(
    net: &FusionNet,
    inputs: &[NetInput],
    grid: &TimeGrid,
    kind: LossKind,
    baseline: Option<&BreslowBaseline>,
) -> Result<Prediction, NeuralError> {
    predict_curves_with(net, inputs, grid, kind, baseline, Mode::default())
}

/// [`predict_curves`] with an explicit execution mode (for benches).
pub fn predict_curves_with(
    net: &FusionNet,
    inputs: &[NetInput],
    grid: &TimeGrid,
    kind: LossKind,
    baseline: Option<&BreslowBaseline>,
    mode: Mode,
) -> Result<Prediction, NeuralError> {
    let expected_head = kind.head_dim(grid.len());
    if net.arch.head_dim != expected_head {
        return Err(NeuralError::Config(format!(
            "{} needs head dim {expected_head}, net has {}",
            kind.name(),
            net.arch.head_dim
        )));
    }
    match kind {
        LossKind::Bce => {
            let scores = risk_scores_with(net, inputs, mode)?;
            Ok(Prediction::Biomarkers(
                scores.into_iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect(),
            ))
        }
        LossKind::CoxBatch => {
            let baseline = baseline.ok_or_else(|| {
                NeuralError::Config("log-risk curves need the training baseline".into())
            })?;
            let risks = risk_scores_with(net, inputs, mode)?;
            let curves: Result<Vec<SurvivalCurve>, NeuralError> = risks
                .iter()
                .map(|&r| {
                    let values: Vec<f64> = grid
                        .points()
                        .iter()
                        .map(|&t| baseline.survival(t, r).clamp(0.0, 1.0))
                        .collect();
                    SurvivalCurve::new(values, grid)
                        .map_err(|e| NeuralError::State(format!("invalid curve: {e}")))
                })
                .collect();
            Ok(Prediction::Curves(curves?))
        }
        LossKind::LogisticHazard | LossKind::Mtlr | LossKind::DeepHit => {
            let results = exec::map_collect(inputs.len(), mode, |i| {
                let logits = net.forward(&inputs[i])?;
                let values = match kind {
                    LossKind::LogisticHazard => logistic_hazard_survival(&logits),
                    LossKind::Mtlr => pmf_survival(&mtlr_pmf(&logits)),
                    _ => {
                        // DeepHit: plain softmax PMF readout
                        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
                        let sum: f64 = exps.iter().sum();
                        let pmf: Vec<f64> = exps.into_iter().map(|e| e / sum).collect();
                        pmf_survival(&pmf)
                    }
                };
                SurvivalCurve::new(values, grid)
                    .map_err(|e| NeuralError::State(format!("invalid curve: {e}")))
            });
            let curves: Result<Vec<SurvivalCurve>, NeuralError> = results.into_iter().collect();
            Ok(Prediction::Curves(curves?))
        }
    }
}
