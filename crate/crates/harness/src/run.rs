//! Run specifications, stable keys, and the persisted result record.

use crate::config::{CovariateSet, EncoderName, Method, SweepConfig};
use crate::HarnessError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub dataset: String,
    pub encoder: EncoderName,
    pub method: Method,
    pub covariates: CovariateSet,
    pub seed: u64,
}

impl RunSpec {
    /// Stable key: a truncated SHA-256 of the canonicalized config
    /// fields, so results files can be resumed and joined across tools.
    pub fn key(&self) -> String {
        let canon = format!(
            "dataset={}|encoder={:?}|method={}|covariates={}|seed={}",
            self.dataset,
            self.encoder,
            self.method.name(),
            self.covariates.name(),
            self.seed
        );
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{:?}/{}/{}/seed{}",
            self.dataset,
            self.encoder,
            self.method.name(),
            self.covariates.name(),
            self.seed
        )
    }
}

/// Expand the config's Cartesian product into ordered run specs,
/// dropping combinations a dataset cannot support (machine-measure
/// covariates on datasets without machine columns). Returns the specs
/// plus one warning per dropped combination family.
pub fn expand_sweep(
    config: &SweepConfig,
    machine_by_dataset: &BTreeMap<String, bool>,
) -> Result<(Vec<RunSpec>, Vec<String>), HarnessError> {
    let mut specs = Vec::new();
    let mut warnings = Vec::new();
    for dataset in &config.datasets {
        let has_machine = machine_by_dataset.get(&dataset.name).copied().unwrap_or(false);
        for &encoder in &config.encoders {
            for &method in &config.methods {
                for &covariates in &config.covariate_sets {
                    if covariates == CovariateSet::AgeSexMachine && !has_machine {
                        if encoder == config.encoders[0]
                            && method == config.methods[0]
                        {
                            warnings.push(format!(
                                "dataset {} has no machine-measure columns; dropping {} combinations",
                                dataset.name,
                                CovariateSet::AgeSexMachine.name()
                            ));
                        }
                        continue;
                    }
                    for &seed in &config.seeds {
                        specs.push(RunSpec {
                            dataset: dataset.name.clone(),
                            encoder,
                            method,
                            covariates,
                            seed,
                        });
                    }
                }
            }
        }
    }
    if specs.is_empty() {
        return Err(HarnessError::Config("sweep expands to zero runs".into()));
    }
    Ok((specs, warnings))
}

/// A metric outcome: either a value or a typed undefined marker, so
/// aggregation can count and skip undefined cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricValue {
    Value(f64),
    Undefined { undefined: String },
}

impl MetricValue {
    pub fn from_result(r: Result<f64, survbench_core::metrics::MetricError>) -> Self {
        match r {
            Ok(v) => MetricValue::Value(v),
            Err(e) => MetricValue::Undefined {
                undefined: e.to_string(),
            },
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            MetricValue::Value(v) => Some(*v),
            MetricValue::Undefined { .. } => None,
        }
    }
}

/// All metrics of one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    /// All-time censoring-weighted time-dependent concordance.
    pub concordance: MetricValue,
    /// Concordance after censoring at 1/2/5/10 years (keyed by years).
    pub concordance_censored: BTreeMap<String, MetricValue>,
    pub auroc: BTreeMap<String, MetricValue>,
    pub auprc: BTreeMap<String, MetricValue>,
    pub bootstrap_concordance: BootstrapBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBlock {
    pub median: MetricValue,
    pub q25: MetricValue,
    pub q75: MetricValue,
    pub values: Vec<MetricValue>,
}

/// One JSON line of the results file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: String,
    pub dataset: String,
    pub encoder: EncoderName,
    pub method: Method,
    pub covariates: CovariateSet,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_val_loss: Option<f64>,
    /// Excluded from the reproducibility canon.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

impl RunRecord {
    /// The record with volatile fields (wall time) removed, serialized
    /// canonically; byte-identical across re-runs of the same config.
    pub fn canonical_json(&self) -> Result<String, HarnessError> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("wall_time_s");
        }
        Ok(serde_json::to_string(&value)?)
    }
}
