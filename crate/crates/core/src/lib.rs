//! Survival-analysis benchmarking engine.
//!
//! The crate bundles everything needed to benchmark survival models on
//! ECG-style cohorts at desk scale:
//!
//! - [`data`] — cohort ingestion, waveform preprocessing, patient-level
//!   splits, per-channel normalization, horizon labeling.
//! - [`synthetic`] — cohort generation with known ground-truth log-risk,
//!   used as the oracle for everything downstream.
//! - [`survival`] — Kaplan-Meier, Cox proportional hazards with a Breslow
//!   baseline, survival-curve prediction, the classifier-to-Cox second stage.
//! - [`neural`] — a small fusion network trained by manual backpropagation
//!   with four deep-survival losses plus a binary-horizon classifier loss.
//! - [`metrics`] — censoring-aware evaluation (time-dependent concordance,
//!   horizon AUROC/AUPRC, bootstraps, subgroup tables).
//! - [`stats`] — the statistical comparison toolkit (Wilcoxon, Mann-Whitney,
//!   Pearson, Benjamini-Hochberg, cohort summary tables).
//!
//! Data-parallel kernels (pair loops, batch evaluation, cohort generation)
//! run on rayon when the `parallel` feature is enabled (default) and fall
//! back to sequential execution otherwise. Results are bit-identical either
//! way: work is split into fixed-size chunks and partials are combined in
//! chunk order, so the reduction tree does not depend on thread count.

pub mod data;
pub mod exec;
pub mod metrics;
pub mod neural;
pub mod rng;
pub mod stats;
pub mod survival;
pub mod synthetic;
