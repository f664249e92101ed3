//! The versioned sweep configuration file.

use crate::HarnessError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use survbench_core::data::DAYS_PER_YEAR;
use survbench_core::neural::{EncoderKind, LossKind, TrainConfig};
use survbench_core::synthetic::SyntheticSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Top-level config consumed by `sweep`, `cross-eval`, `report` and
/// `km-plot`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema: u32,
    pub datasets: Vec<DatasetSpec>,
    pub split: SplitSection,
    pub encoders: Vec<EncoderName>,
    pub methods: Vec<Method>,
    pub covariate_sets: Vec<CovariateSet>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub report: ReportSpec,
}

impl SweepConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: SweepConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("bad config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        if self.datasets.is_empty()
            || self.encoders.is_empty()
            || self.methods.is_empty()
            || self.covariate_sets.is_empty()
            || self.seeds.is_empty()
        {
            return Err(HarnessError::Config(
                "datasets, encoders, methods, covariate_sets and seeds must all be nonempty".into(),
            ));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.datasets.len() {
            return Err(HarnessError::Config("dataset names must be unique".into()));
        }
        let (a, b, c) = self.split.fractions;
        if !(a >= 0.0 && b >= 0.0 && c >= 0.0 && ((a + b + c) - 1.0).abs() < 1e-12) {
            return Err(HarnessError::Config(format!(
                "split fractions must be nonnegative and sum to 1, got {:?}",
                self.split.fractions
            )));
        }
        for d in &self.datasets {
            d.validate()?;
        }
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetSpec, HarnessError> {
        self.datasets
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| HarnessError::Config(format!("unknown dataset {name}")))
    }
}

/// One dataset: either a CSV/ECGB pair on disk or an inline synthetic
/// generator spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveforms: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        match (&self.metadata, &self.waveforms, &self.synthetic) {
            (Some(_), Some(_), None) => Ok(()),
            (None, None, Some(spec)) => {
                spec.validate()?;
                Ok(())
            }
            _ => Err(HarnessError::Config(format!(
                "dataset {} must give either metadata+waveforms or a synthetic spec",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// (train, val, test); test stays fixed across run seeds.
    pub fractions: (f64, f64, f64),
    /// Seed of the base split that pins the Test set.
    pub seed: u64,
}

/// Encoder referenced by config name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderName {
    TabularZero,
    WaveStats,
    TinyConv,
}

impl EncoderName {
    pub fn kind(&self) -> EncoderKind {
        match self {
            EncoderName::TabularZero => EncoderKind::TabularZero,
            EncoderName::WaveStats => EncoderKind::WaveStats,
            EncoderName::TinyConv => EncoderKind::TinyConv,
        }
    }

    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "TabularZero" => Ok(EncoderName::TabularZero),
            "WaveStats" => Ok(EncoderName::WaveStats),
            "TinyConv" => Ok(EncoderName::TinyConv),
            other => Err(HarnessError::Config(format!("unknown encoder {other}"))),
        }
    }
}

/// Survival-modeling method: four deep-survival losses or a horizon
/// classifier feeding a Cox second stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    DeepSurv,
    LogisticHazard,
    Mtlr,
    DeepHit,
    /// `Cla-H`: binary classifier at an H-year horizon, then Cox.
    Classifier { horizon_years: u32 },
}

pub const CLASSIFIER_HORIZONS_YEARS: [u32; 4] = [1, 2, 5, 10];

impl Method {
    pub fn loss_kind(&self) -> LossKind {
        match self {
            Method::DeepSurv => LossKind::CoxBatch,
            Method::LogisticHazard => LossKind::LogisticHazard,
            Method::Mtlr => LossKind::Mtlr,
            Method::DeepHit => LossKind::DeepHit,
            Method::Classifier { .. } => LossKind::Bce,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Method::DeepSurv => "DeepSurv".to_string(),
            Method::LogisticHazard => "LogisticHazard".to_string(),
            Method::Mtlr => "MTLR".to_string(),
            Method::DeepHit => "DeepHit".to_string(),
            Method::Classifier { horizon_years } => format!("Cla-{horizon_years}"),
        }
    }

    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "DeepSurv" => Ok(Method::DeepSurv),
            "LogisticHazard" => Ok(Method::LogisticHazard),
            "MTLR" => Ok(Method::Mtlr),
            "DeepHit" => Ok(Method::DeepHit),
            other => {
                if let Some(years) = other.strip_prefix("Cla-") {
                    let horizon_years: u32 = years
                        .parse()
                        .map_err(|_| HarnessError::Config(format!("bad method {other}")))?;
                    if !CLASSIFIER_HORIZONS_YEARS.contains(&horizon_years) {
                        return Err(HarnessError::Config(format!(
                            "classifier horizon must be one of {CLASSIFIER_HORIZONS_YEARS:?} years, got {horizon_years}"
                        )));
                    }
                    Ok(Method::Classifier { horizon_years })
                } else {
                    Err(HarnessError::Config(format!("unknown method {other}")))
                }
            }
        }
    }

    pub fn classifier_horizon_days(&self) -> Option<f64> {
        match self {
            Method::Classifier { horizon_years } => Some(*horizon_years as f64 * DAYS_PER_YEAR),
            _ => None,
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Method::parse(&name).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSet {
    None,
    AgeSex,
    AgeSexMachine,
}

impl CovariateSet {
    pub fn name(&self) -> &'static str {
        match self {
            CovariateSet::None => "none",
            CovariateSet::AgeSex => "age_sex",
            CovariateSet::AgeSexMachine => "age_sex_machine",
        }
    }

    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "none" => Ok(CovariateSet::None),
            "age_sex" => Ok(CovariateSet::AgeSex),
            "age_sex_machine" => Ok(CovariateSet::AgeSexMachine),
            other => Err(HarnessError::Config(format!("unknown covariate set {other}"))),
        }
    }

    /// Covariate column names for a dataset exposing the given machine
    /// measure columns.
    pub fn names(&self, machine_names: &[String]) -> Vec<String> {
        match self {
            CovariateSet::None => Vec::new(),
            CovariateSet::AgeSex => vec!["age".to_string(), "sex".to_string()],
            CovariateSet::AgeSexMachine => {
                let mut v = vec!["age".to_string(), "sex".to_string()];
                v.extend(machine_names.iter().cloned());
                v
            }
        }
    }
}

/// Partial overrides of the default training protocol.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plateau_patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plateau_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deephit_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deephit_sigma: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, base: &mut TrainConfig) {
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.plateau_patience {
            base.plateau_patience = v;
        }
        if let Some(v) = self.plateau_factor {
            base.plateau_factor = v;
        }
        if let Some(v) = self.min_learning_rate {
            base.min_learning_rate = v;
        }
        if let Some(v) = self.early_stop_patience {
            base.early_stop_patience = v;
        }
        if let Some(v) = self.max_epochs {
            base.max_epochs = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.weight_decay {
            base.weight_decay = v;
        }
        if let Some(v) = self.deephit_alpha {
            base.deephit_alpha = v;
        }
        if let Some(v) = self.deephit_sigma {
            base.deephit_sigma = v;
        }
    }
}

/// Report section: which pairwise comparisons to test.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSpec {
    #[serde(default)]
    pub comparisons: Vec<ComparisonSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub name: String,
    pub left: RunFilter,
    pub right: RunFilter,
    /// Paired comparisons join left and right by seed and use the
    /// signed-rank test; unpaired comparisons use the rank-sum test.
    #[serde(default)]
    pub paired_by_seed: bool,
}

/// Selects runs by exact field values; unset fields match everything.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<String>,
}

impl RunFilter {
    /// Reject filters referencing unknown names.
    pub fn validate(&self, config: &SweepConfig) -> Result<(), HarnessError> {
        if let Some(d) = &self.dataset {
            config.dataset(d)?;
        }
        if let Some(e) = &self.encoder {
            EncoderName::parse(e)?;
        }
        if let Some(m) = &self.method {
            Method::parse(m)?;
        }
        if let Some(c) = &self.covariates {
            CovariateSet::parse(c)?;
        }
        Ok(())
    }
}
