//! Cross-dataset evaluation of trained models.

use crate::config::SweepConfig;
use crate::dataset::DatasetCtx;
use crate::execute::{compute_metrics, evaluate_on, load_model, read_results};
use crate::run::{MetricValue, RunStatus};
use crate::HarnessError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One cell of the cross-evaluation matrix: a trained model scored on
/// one dataset's Test split with the model's own normalizer and grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossEvalCell {
    pub key: String,
    pub train_dataset: String,
    pub test_dataset: String,
    pub encoder: crate::config::EncoderName,
    pub method: crate::config::Method,
    pub covariates: crate::config::CovariateSet,
    pub seed: u64,
    pub concordance: MetricValue,
}

/// Evaluate every successful trained run on every config dataset.
/// Writes `cross_eval.jsonl` (cells) and `cross_eval.csv` (the
/// train x test table with median and quartiles across seeds).
pub fn cross_evaluate(config: &SweepConfig, out_dir: &Path) -> Result<Vec<CrossEvalCell>, HarnessError> {
    let datasets = crate::dataset::load_all(config)?;
    let records = read_results(&out_dir.join("results.jsonl"))?;
    let mut cells = Vec::new();
    for record in records.iter().filter(|r| r.status == RunStatus::Ok) {
        let (bundle, net) = load_model(out_dir, &record.key)?;
        for (name, ctx) in &datasets {
            let concordance = evaluate_cell(&net, &bundle, ctx);
            cells.push(CrossEvalCell {
                key: record.key.clone(),
                train_dataset: record.dataset.clone(),
                test_dataset: name.clone(),
                encoder: record.encoder,
                method: record.method,
                covariates: record.covariates,
                seed: record.seed,
                concordance,
            });
        }
    }

    let mut jsonl = std::io::BufWriter::new(std::fs::File::create(out_dir.join("cross_eval.jsonl"))?);
    for cell in &cells {
        writeln!(jsonl, "{}", serde_json::to_string(cell)?)?;
    }
    jsonl.flush()?;
    write_matrix_csv(&cells, &out_dir.join("cross_eval.csv"))?;
    Ok(cells)
}

fn evaluate_cell(
    net: &survbench_core::neural::FusionNet,
    bundle: &crate::execute::ModelBundle,
    ctx: &DatasetCtx,
) -> MetricValue {
    // covariate schema compatibility: the model's covariates must exist
    for name in &bundle.extractor.scaler.names {
        let missing = ctx.cohort.records.iter().any(|r| r.covariate(name).is_none());
        if missing {
            return MetricValue::Undefined {
                undefined: format!("dataset {} lacks covariate {name}", ctx.name),
            };
        }
    }
    match evaluate_on(net, bundle, ctx).and_then(|eval| compute_metrics(&eval)) {
        Ok(metrics) => metrics.concordance,
        Err(e) => MetricValue::Undefined { undefined: e.to_string() },
    }
}

/// Long-form CSV: one row per (train, test, encoder, method, covariates)
/// with median/q25/q75 over seeds and the count of defined cells.
fn write_matrix_csv(cells: &[CrossEvalCell], path: &Path) -> Result<(), HarnessError> {
    let mut grouped: BTreeMap<(String, String, String, String, String), Vec<f64>> = BTreeMap::new();
    let mut undefined: BTreeMap<(String, String, String, String, String), usize> = BTreeMap::new();
    for cell in cells {
        let key = (
            cell.train_dataset.clone(),
            cell.test_dataset.clone(),
            format!("{:?}", cell.encoder),
            cell.method.name(),
            cell.covariates.name().to_string(),
        );
        match cell.concordance.value() {
            Some(v) => grouped.entry(key).or_default().push(v),
            None => *undefined.entry(key).or_default() += 1,
        }
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Other(e.to_string()))?;
    w.write_record([
        "train_dataset",
        "test_dataset",
        "encoder",
        "method",
        "covariates",
        "n_seeds",
        "n_undefined",
        "median",
        "q25",
        "q75",
    ])
    .map_err(|e| HarnessError::Other(e.to_string()))?;
    let mut all_keys: Vec<_> = grouped.keys().cloned().chain(undefined.keys().cloned()).collect();
    all_keys.sort();
    all_keys.dedup();
    for key in all_keys {
        let values = grouped.get(&key).cloned().unwrap_or_default();
        let n_undef = undefined.get(&key).copied().unwrap_or(0);
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| {
            survbench_core::metrics::quantile_sorted(&sorted, p)
                .map(|v| format!("{v}"))
                .unwrap_or_else(|| "undefined".to_string())
        };
        w.write_record([
            key.0.as_str(),
            key.1.as_str(),
            key.2.as_str(),
            key.3.as_str(),
            key.4.as_str(),
            &values.len().to_string(),
            &n_undef.to_string(),
            &q(0.5),
            &q(0.25),
            &q(0.75),
        ])
        .map_err(|e| HarnessError::Other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
