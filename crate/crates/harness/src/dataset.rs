//! Loaded datasets with their fixed base split.

use crate::config::{DatasetSpec, SweepConfig};
use crate::HarnessError;
use std::collections::BTreeMap;
use survbench_core::data::{load_cohort, Cohort, Split, SplitSpec};
use survbench_core::synthetic::generate;

/// A dataset ready for runs: the raw cohort, its fixed Test patients
/// (from the base split seed), and which machine-measure columns exist.
#[derive(Debug, Clone)]
pub struct DatasetCtx {
    pub name: String,
    /// Unnormalized records; each run normalizes its own copy.
    pub cohort: Cohort,
    /// Patients pinned to Test for every run seed.
    pub test_patients: Vec<String>,
    /// Covariate columns beyond age/sex.
    pub machine_names: Vec<String>,
    /// Ground-truth log-risk for synthetic datasets.
    pub true_log_risk: Option<Vec<f64>>,
}

impl DatasetCtx {
    pub fn load(spec: &DatasetSpec, config: &SweepConfig) -> Result<Self, HarnessError> {
        let (cohort, true_log_risk) = match &spec.synthetic {
            Some(synth) => {
                let (cohort, risks) = generate(synth)?;
                (cohort, Some(risks))
            }
            None => {
                let metadata = spec.metadata.as_ref().unwrap();
                let waveforms = spec.waveforms.as_ref().unwrap();
                let (cohort, _report) = load_cohort(metadata, waveforms)?;
                (cohort, None)
            }
        };
        if cohort.is_empty() {
            return Err(HarnessError::Config(format!("dataset {} is empty", spec.name)));
        }
        let machine_names: Vec<String> = cohort
            .covariate_names()
            .into_iter()
            .filter(|n| n != "age" && n != "sex")
            .collect();

        let base = SplitSpec::new(config.split.fractions, config.split.seed);
        let base_split = survbench_core::data::split_by_patient(&cohort, &base)?;
        let mut test_patients: Vec<String> = cohort
            .records
            .iter()
            .filter(|r| base_split.get(&r.ecg_id) == Some(&Split::Test))
            .map(|r| r.patient_id.clone())
            .collect();
        test_patients.sort_unstable();
        test_patients.dedup();

        Ok(DatasetCtx {
            name: spec.name.clone(),
            cohort,
            test_patients,
            machine_names,
            true_log_risk,
        })
    }

    pub fn has_machine_measures(&self) -> bool {
        !self.machine_names.is_empty()
    }

    /// Per-run split: Test pinned to the base split, Train/Val shuffled
    /// by the run seed.
    pub fn run_split_spec(&self, config: &SweepConfig, run_seed: u64) -> SplitSpec {
        SplitSpec {
            fractions: config.split.fractions,
            seed: run_seed,
            fixed_test: Some(self.test_patients.clone()),
        }
    }
}

/// Load every dataset named in the config, keyed by name.
pub fn load_all(config: &SweepConfig) -> Result<BTreeMap<String, DatasetCtx>, HarnessError> {
    config
        .datasets
        .iter()
        .map(|spec| Ok((spec.name.clone(), DatasetCtx::load(spec, config)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_with_synth(n: usize) -> SweepConfig {
        serde_json::from_value(serde_json::json!({
            "schema": 1,
            "datasets": [
                {"name": "synth", "synthetic": {"n": n, "beta": [0.0, 0.5], "gamma": 1.0,
                 "weibull_shape": 1.0, "weibull_scale": 500.0, "censor_max": 2000.0, "seed": 3}}
            ],
            "split": {"fractions": [0.64, 0.16, 0.20], "seed": 5},
            "encoders": ["TabularZero"],
            "methods": ["DeepSurv"],
            "covariate_sets": ["age_sex"],
            "seeds": [1]
        }))
        .unwrap()
    }

    #[test]
    fn test_patients_stay_fixed_across_run_seeds() {
        let config = config_with_synth(100);
        let ctx = DatasetCtx::load(&config.datasets[0], &config).unwrap();
        assert!(!ctx.test_patients.is_empty());
        assert!(!ctx.has_machine_measures());

        let mut cohort_a = ctx.cohort.clone();
        cohort_a.assign_split(&ctx.run_split_spec(&config, 1)).unwrap();
        let mut cohort_b = ctx.cohort.clone();
        cohort_b.assign_split(&ctx.run_split_spec(&config, 2)).unwrap();
        let tests_a: Vec<&String> = cohort_a
            .split
            .iter()
            .filter(|(_, s)| **s == Split::Test)
            .map(|(k, _)| k)
            .collect();
        let tests_b: Vec<&String> = cohort_b
            .split
            .iter()
            .filter(|(_, s)| **s == Split::Test)
            .map(|(k, _)| k)
            .collect();
        assert_eq!(tests_a, tests_b);
        assert_ne!(cohort_a.split, cohort_b.split);
    }
}
