//! Classical survival estimation: Kaplan-Meier curves, Cox proportional
//! hazards with a Breslow baseline, survival-curve prediction, and the
//! classifier-to-Cox second stage.

mod cox;
mod grid;
mod km;

pub use cox::{fit_classifier_cox, fit_cox, predict_survival, BreslowBaseline, CoxModel};
pub use grid::{SurvivalCurve, TimeGrid, GRID_POINTS};
pub use km::{censoring_km, kaplan_meier, KaplanMeier};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurvivalError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("no events: {0}")]
    NoEvents(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("monotone likelihood: {0}")]
    MonotoneLikelihood(String),
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}
