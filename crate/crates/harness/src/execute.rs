//! Run execution: training, evaluation, artifact persistence, and the
//! resumable sweep loop.

use crate::config::{CovariateSet, Method, SweepConfig};
use crate::dataset::DatasetCtx;
use crate::run::{BootstrapBlock, MetricValue, MetricsBlock, RunRecord, RunSpec, RunStatus};
use crate::HarnessError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use survbench_core::data::{fit_apply_normalizer, ChannelNormalizer, Cohort, Split, DAYS_PER_YEAR};
use survbench_core::metrics::{
    bootstrap_per_patient, concordance_censored_at, concordance_td, horizon_roc_prc, RiskScores,
    Weighting, BOOTSTRAP_REPS,
};
use survbench_core::neural::{
    deepsurv_baseline, load_checkpoint, predict_curves, save_checkpoint, train, Architecture,
    CheckpointHeader, CovariateScaler, FeatureExtractor, FusionNet, LossKind, TrainConfig,
};
use survbench_core::survival::{
    fit_classifier_cox, predict_survival, BreslowBaseline, CoxModel, SurvivalCurve, TimeGrid,
};

/// Horizons (years) at which censored concordance and AUROC/AUPRC are
/// reported.
pub const REPORT_HORIZONS_YEARS: [u32; 4] = [1, 2, 5, 10];

/// Everything needed to score new records with a trained run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub key: String,
    pub spec: RunSpec,
    pub architecture: Architecture,
    pub train_config: TrainConfig,
    pub normalizer: ChannelNormalizer,
    pub extractor: FeatureExtractor,
    pub grid: TimeGrid,
    pub extra: ModelExtra,
    /// Checkpoint path relative to the output directory.
    pub checkpoint: String,
}

/// Method-specific second stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelExtra {
    /// Discrete-time heads need nothing beyond the net.
    None,
    /// Log-risk head: Breslow baseline fitted on the training split.
    DeepSurv { baseline: BreslowBaseline },
    /// Classifier head: the Cox second stage fitted on validation.
    ClassifierCox { model: CoxModel },
}

/// Persisted per-run evaluation data: curves and labels of the scored
/// test set. Every reported metric is recomputable from this file alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalBundle {
    pub key: String,
    pub dataset: String,
    pub grid: TimeGrid,
    pub curves: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub biomarkers: Option<Vec<f64>>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub patient_ids: Vec<String>,
    pub ages: Vec<f64>,
    pub sexes: Vec<f64>,
    /// Seed of the bootstrap draws.
    pub bootstrap_seed: u64,
}

/// Recompute the full metric block from persisted evaluation data.
pub fn compute_metrics(eval: &EvalBundle) -> Result<MetricsBlock, HarnessError> {
    let curves: Vec<SurvivalCurve> = eval
        .curves
        .iter()
        .map(|v| SurvivalCurve::new(v.clone(), &eval.grid))
        .collect::<Result<_, _>>()?;
    let scores = RiskScores::Curves {
        grid: &eval.grid,
        curves: &curves,
    };
    let concordance =
        MetricValue::from_result(concordance_td(&scores, &eval.times, &eval.events, Weighting::Km));

    let mut concordance_censored = BTreeMap::new();
    let mut auroc = BTreeMap::new();
    let mut auprc = BTreeMap::new();
    for years in REPORT_HORIZONS_YEARS {
        let horizon = years as f64 * DAYS_PER_YEAR;
        concordance_censored.insert(
            years.to_string(),
            MetricValue::from_result(concordance_censored_at(
                &scores,
                &eval.times,
                &eval.events,
                horizon,
                Weighting::Km,
            )),
        );
        match horizon_roc_prc(&eval.grid, &curves, &eval.times, &eval.events, horizon) {
            Ok((roc, prc)) => {
                auroc.insert(years.to_string(), MetricValue::Value(roc));
                auprc.insert(years.to_string(), MetricValue::Value(prc));
            }
            Err(e) => {
                auroc.insert(years.to_string(), MetricValue::Undefined { undefined: e.to_string() });
                auprc.insert(years.to_string(), MetricValue::Undefined { undefined: e.to_string() });
            }
        }
    }

    // one-record-per-patient bootstrap of the all-time concordance
    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, pid) in eval.patient_ids.iter().enumerate() {
        by_patient.entry(pid).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_patient.into_values().collect();
    let summary = bootstrap_per_patient(&groups, BOOTSTRAP_REPS, eval.bootstrap_seed, |chosen| {
        let sub_curves: Vec<SurvivalCurve> = chosen.iter().map(|&i| curves[i].clone()).collect();
        let sub_times: Vec<f64> = chosen.iter().map(|&i| eval.times[i]).collect();
        let sub_events: Vec<bool> = chosen.iter().map(|&i| eval.events[i]).collect();
        concordance_td(
            &RiskScores::Curves { grid: &eval.grid, curves: &sub_curves },
            &sub_times,
            &sub_events,
            Weighting::Km,
        )
    });
    let to_metric = |v: Option<f64>| match v {
        Some(x) => MetricValue::Value(x),
        None => MetricValue::Undefined { undefined: "no defined replicates".into() },
    };
    let bootstrap_concordance = BootstrapBlock {
        median: to_metric(summary.median),
        q25: to_metric(summary.q25),
        q75: to_metric(summary.q75),
        values: summary.values.into_iter().map(MetricValue::from_result).collect(),
    };

    Ok(MetricsBlock {
        concordance,
        concordance_censored,
        auroc,
        auprc,
        bootstrap_concordance,
    })
}

/// Score a trained model bundle on a dataset's fixed Test split using
/// the model's own normalizer and time grid. Both the in-distribution
/// evaluation after training and cross-dataset evaluation go through
/// this single path.
pub fn evaluate_on(
    net: &FusionNet,
    bundle: &ModelBundle,
    ctx: &DatasetCtx,
) -> Result<EvalBundle, HarnessError> {
    let test_patients: BTreeSet<&str> = ctx.test_patients.iter().map(|s| s.as_str()).collect();
    let mut records: Vec<survbench_core::data::EcgRecord> = ctx
        .cohort
        .records
        .iter()
        .filter(|r| test_patients.contains(r.patient_id.as_str()))
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(HarnessError::Other(format!(
            "dataset {} has an empty test split",
            ctx.name
        )));
    }
    for rec in &mut records {
        bundle.normalizer.apply(&mut rec.waveform);
    }
    let inputs: Vec<survbench_core::neural::NetInput> = records
        .iter()
        .map(|r| bundle.extractor.build_input(r))
        .collect::<Result<_, _>>()?;

    let loss_kind = bundle.spec.method.loss_kind();
    let (curve_values, biomarkers) = match &bundle.extra {
        ModelExtra::DeepSurv { baseline } => {
            let prediction =
                predict_curves(net, &inputs, &bundle.grid, LossKind::CoxBatch, Some(baseline))?;
            (curves_to_values(prediction.curves()?), None)
        }
        ModelExtra::ClassifierCox { model } => {
            let marks = predict_curves(net, &inputs, &bundle.grid, LossKind::Bce, None)?.biomarkers()?;
            let rows: Vec<Vec<f64>> = marks.iter().map(|&m| vec![m]).collect();
            let curves = predict_survival(model, &rows, &bundle.grid)?;
            (curves_to_values(curves), Some(marks))
        }
        ModelExtra::None => {
            let prediction = predict_curves(net, &inputs, &bundle.grid, loss_kind, None)?;
            (curves_to_values(prediction.curves()?), None)
        }
    };

    Ok(EvalBundle {
        key: bundle.key.clone(),
        dataset: ctx.name.clone(),
        grid: bundle.grid.clone(),
        curves: curve_values,
        biomarkers,
        times: records.iter().map(|r| r.time_to_event).collect(),
        events: records.iter().map(|r| r.event).collect(),
        patient_ids: records.iter().map(|r| r.patient_id.clone()).collect(),
        ages: records.iter().map(|r| r.covariate("age").unwrap_or(f64::NAN)).collect(),
        sexes: records.iter().map(|r| r.covariate("sex").unwrap_or(f64::NAN)).collect(),
        bootstrap_seed: bundle.spec.seed,
    })
}

fn curves_to_values(curves: Vec<SurvivalCurve>) -> Vec<Vec<f64>> {
    curves.into_iter().map(|c| c.values().to_vec()).collect()
}

/// Train, evaluate and persist one run. Artifacts land under
/// `out_dir/{models,history,eval}/<key>.*`.
pub fn run_one(
    ctx: &DatasetCtx,
    spec: &RunSpec,
    config: &SweepConfig,
    out_dir: &Path,
) -> Result<RunRecord, HarnessError> {
    let started = std::time::Instant::now();
    let key = spec.key();

    let mut cohort = ctx.cohort.clone();
    cohort.assign_split(&ctx.run_split_spec(config, spec.seed))?;
    fit_apply_normalizer(&mut cohort)?;
    let normalizer = cohort.normalizer.clone().expect("normalizer just fitted");

    let val_indices = cohort.indices_in(Split::Val);
    let (val_times, val_events) = cohort.times_events(&val_indices);
    let max_val_time = val_times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid = TimeGrid::uniform(max_val_time)?;

    let cov_names = spec.covariates.names(&ctx.machine_names);
    let train_indices = cohort.indices_in(Split::Train);
    let scaler = if cov_names.is_empty() {
        CovariateScaler::empty()
    } else {
        CovariateScaler::fit(&cohort, &train_indices, &cov_names)?
    };
    let extractor = FeatureExtractor {
        encoder: spec.encoder.kind(),
        scaler,
    };

    let loss = spec.method.loss_kind();
    let mut train_config = TrainConfig::new(loss, spec.seed);
    config.train.apply(&mut train_config);
    train_config.classifier_horizon_days = spec.method.classifier_horizon_days();

    let arch = Architecture {
        encoder: spec.encoder.kind(),
        covariate_dim: extractor.covariate_dim(),
        head_dim: loss.head_dim(grid.len()),
    };
    let mut net = FusionNet::init(arch.clone(), spec.seed)?;
    let outcome = train(&mut net, &cohort, &grid, &extractor, &train_config)?;

    let extra = match spec.method {
        Method::DeepSurv => {
            let train_inputs = extractor.build_inputs(&cohort, &train_indices)?;
            let (times, events) = cohort.times_events(&train_indices);
            ModelExtra::DeepSurv {
                baseline: deepsurv_baseline(&net, &train_inputs, &times, &events)?,
            }
        }
        Method::Classifier { .. } => {
            let val_inputs = extractor.build_inputs(&cohort, &val_indices)?;
            let marks = predict_curves(&net, &val_inputs, &grid, LossKind::Bce, None)?.biomarkers()?;
            ModelExtra::ClassifierCox {
                model: fit_classifier_cox(&marks, &val_times, &val_events)?,
            }
        }
        _ => ModelExtra::None,
    };

    let checkpoint_rel = format!("models/{key}.ckpt");
    let bundle = ModelBundle {
        key: key.clone(),
        spec: spec.clone(),
        architecture: arch.clone(),
        train_config: train_config.clone(),
        normalizer,
        extractor,
        grid,
        extra,
        checkpoint: checkpoint_rel.clone(),
    };
    save_checkpoint(
        &out_dir.join(&checkpoint_rel),
        &CheckpointHeader {
            architecture: arch,
            config: train_config,
            epoch: outcome.best_epoch,
            val_loss: outcome.best_val_loss,
        },
        &outcome.best_params,
    )?;
    let bundle_rel = format!("models/{key}.json");
    write_json(&out_dir.join(&bundle_rel), &bundle)?;
    let history_rel = format!("history/{key}.json");
    write_json(&out_dir.join(&history_rel), &outcome.history)?;

    let eval = evaluate_on(&net, &bundle, ctx)?;
    let eval_rel = format!("eval/{key}.json");
    write_json(&out_dir.join(&eval_rel), &eval)?;
    let metrics = compute_metrics(&eval)?;

    Ok(RunRecord {
        key,
        dataset: spec.dataset.clone(),
        encoder: spec.encoder,
        method: spec.method,
        covariates: spec.covariates,
        seed: spec.seed,
        status: RunStatus::Ok,
        error: None,
        metrics: Some(metrics),
        history_path: Some(history_rel),
        model_path: Some(bundle_rel),
        eval_path: Some(eval_rel),
        best_epoch: Some(outcome.best_epoch),
        best_val_loss: Some(outcome.best_val_loss),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, value)?;
    file.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Load a persisted model: bundle JSON plus checkpoint parameters.
pub fn load_model(out_dir: &Path, key: &str) -> Result<(ModelBundle, FusionNet), HarnessError> {
    let bundle: ModelBundle = read_json(&out_dir.join(format!("models/{key}.json")))?;
    let (header, params) = load_checkpoint(&out_dir.join(&bundle.checkpoint))?;
    let mut net = FusionNet::new(header.architecture)?;
    net.set_params(params)?;
    Ok((bundle, net))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecuteSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Keys already present in the results file.
pub fn existing_keys(results_path: &Path) -> Result<BTreeSet<String>, HarnessError> {
    let mut keys = BTreeSet::new();
    if results_path.exists() {
        for line in std::fs::read_to_string(results_path)?.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let record: RunRecord = serde_json::from_str(line)
                .map_err(|e| HarnessError::Other(format!("corrupt results line: {e}")))?;
            keys.insert(record.key);
        }
    }
    Ok(keys)
}

/// Execute every run of the sweep that is not already present in the
/// results file. Runs execute in parallel chunks of `parallelism`, but
/// records append in spec order, so a completed sweep file is
/// byte-identical across re-runs regardless of the worker count.
pub fn execute_sweep(
    config: &SweepConfig,
    out_dir: &Path,
    parallelism: usize,
) -> Result<ExecuteSummary, HarnessError> {
    for sub in ["models", "history", "eval", "report"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    let datasets = crate::dataset::load_all(config)?;
    let machine: BTreeMap<String, bool> = datasets
        .iter()
        .map(|(name, ctx)| (name.clone(), ctx.has_machine_measures()))
        .collect();
    let (specs, warnings) = crate::run::expand_sweep(config, &machine)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let results_path = out_dir.join("results.jsonl");
    let done = existing_keys(&results_path)?;
    let todo: Vec<&RunSpec> = specs.iter().filter(|s| !done.contains(&s.key())).collect();
    let mut summary = ExecuteSummary {
        skipped: specs.len() - todo.len(),
        ..Default::default()
    };

    let mut results_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&results_path)?;

    let workers = parallelism.max(1);
    for chunk in todo.chunks(workers) {
        let records: Vec<RunRecord> = if workers == 1 || chunk.len() == 1 {
            chunk
                .iter()
                .map(|spec| run_with_failure_capture(&datasets, spec, config, out_dir))
                .collect()
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|spec| {
                        let datasets = &datasets;
                        scope.spawn(move || run_with_failure_capture(datasets, spec, config, out_dir))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            })
        };
        for record in records {
            match record.status {
                RunStatus::Ok => summary.executed += 1,
                RunStatus::Failed => summary.failed += 1,
            }
            writeln!(results_file, "{}", serde_json::to_string(&record)?)?;
        }
        results_file.flush()?;
    }
    Ok(summary)
}

fn run_with_failure_capture(
    datasets: &BTreeMap<String, DatasetCtx>,
    spec: &RunSpec,
    config: &SweepConfig,
    out_dir: &Path,
) -> RunRecord {
    let started = std::time::Instant::now();
    let outcome = datasets
        .get(&spec.dataset)
        .ok_or_else(|| HarnessError::Config(format!("dataset {} not loaded", spec.dataset)))
        .and_then(|ctx| run_one(ctx, spec, config, out_dir));
    match outcome {
        Ok(record) => record,
        Err(err) => RunRecord {
            key: spec.key(),
            dataset: spec.dataset.clone(),
            encoder: spec.encoder,
            method: spec.method,
            covariates: spec.covariates,
            seed: spec.seed,
            status: RunStatus::Failed,
            error: Some(err.to_string()),
            metrics: None,
            history_path: None,
            model_path: None,
            eval_path: None,
            best_epoch: None,
            best_val_loss: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    }
}

/// All records of a results file, in file order.
pub fn read_results(results_path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut records = Vec::new();
    for line in std::fs::read_to_string(results_path)?.lines() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line)?);
    }
    Ok(records)
}
