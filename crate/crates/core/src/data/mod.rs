//! Cohort data model: records, waveforms, splits, normalization and
//! horizon labeling.
//!
//! All times are stored in days; use [`DAYS_PER_YEAR`] to convert
//! year-denominated horizons. Observed times are floored at
//! [`MIN_TTE_DAYS`] on ingestion.

mod io;
mod normalize;
mod preprocess;
mod split;

pub use io::{load_cohort, save_cohort, write_ecgb, write_metadata_csv, LoadReport};
pub use normalize::{fit_apply_normalizer, ChannelNormalizer};
pub use preprocess::preprocess_waveform;
pub use split::split_by_patient;

use indexmap::IndexMap;
use thiserror::Error;

/// Samples per channel after preprocessing.
pub const SAMPLES: usize = 4096;
/// Channel count of a standard 12-lead recording.
pub const CHANNELS: usize = 12;
/// Samples covering the 10-second active window at [`TARGET_RATE_HZ`].
pub const ACTIVE_SAMPLES: usize = 4000;
/// Zero padding on each side of a full-length active window.
pub const EDGE_PAD: usize = 48;
/// Resampling target rate.
pub const TARGET_RATE_HZ: f64 = 400.0;
/// Floor applied to observed time-to-event on ingestion.
pub const MIN_TTE_DAYS: f64 = 0.5;
/// Calendar conversion used for year-denominated horizons.
pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
}

/// A multichannel waveform stored channel-major: all samples of channel 0,
/// then channel 1, and so on. Per-channel data is therefore contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Waveform {
    pub fn new(samples: usize, channels: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if data.len() != samples * channels {
            return Err(DataError::Shape(format!(
                "waveform buffer holds {} values, expected {} x {}",
                data.len(),
                samples,
                channels
            )));
        }
        Ok(Waveform {
            samples,
            channels,
            data,
        })
    }

    pub fn zeros(samples: usize, channels: usize) -> Self {
        Waveform {
            samples,
            channels,
            data: vec![0.0; samples * channels],
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        &mut self.data[c * self.samples..(c + 1) * self.samples]
    }

    pub fn get(&self, sample: usize, channel: usize) -> f32 {
        self.data[channel * self.samples + sample]
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    /// True when the shape matches the preprocessed 4096 x 12 contract.
    pub fn is_standard(&self) -> bool {
        self.samples == SAMPLES && self.channels == CHANNELS
    }
}

/// One observation: a preprocessed ECG with its outcome and covariates.
#[derive(Debug, Clone)]
pub struct EcgRecord {
    pub patient_id: String,
    pub ecg_id: String,
    pub waveform: Waveform,
    /// Ordered covariates; `age` and `sex` first, machine measures after.
    pub covariates: IndexMap<String, f64>,
    /// Observed time in days, floored at [`MIN_TTE_DAYS`].
    pub time_to_event: f64,
    /// True when death was observed at `time_to_event`.
    pub event: bool,
}

impl EcgRecord {
    pub fn covariate(&self, name: &str) -> Option<f64> {
        self.covariates.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// How to partition a cohort by patient.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    /// (train, val, test) fractions; must sum to 1.
    pub fractions: (f64, f64, f64),
    pub seed: u64,
    /// Patients pinned to Test. When set, only Train/Val reshuffle per seed.
    #[serde(default)]
    pub fixed_test: Option<Vec<String>>,
}

impl SplitSpec {
    pub fn new(fractions: (f64, f64, f64), seed: u64) -> Self {
        SplitSpec {
            fractions,
            seed,
            fixed_test: None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let (a, b, c) = self.fractions;
        if a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(DataError::Config(format!(
                "split fractions must be nonnegative, got {:?}",
                self.fractions
            )));
        }
        if ((a + b + c) - 1.0).abs() > 1e-12 {
            return Err(DataError::Config(format!(
                "split fractions must sum to 1, got {}",
                a + b + c
            )));
        }
        Ok(())
    }
}

/// A set of records plus (optionally) their split assignment and the
/// normalizer fitted on the training split.
#[derive(Debug, Clone, Default)]
pub struct Cohort {
    pub records: Vec<EcgRecord>,
    /// ecg_id -> split; empty until a split is assigned.
    pub split: std::collections::BTreeMap<String, Split>,
    pub normalizer: Option<ChannelNormalizer>,
}

impl Cohort {
    pub fn new(records: Vec<EcgRecord>) -> Self {
        Cohort {
            records,
            split: Default::default(),
            normalizer: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_of(&self, ecg_id: &str) -> Option<Split> {
        self.split.get(ecg_id).copied()
    }

    /// Record indices assigned to `split`, in record order.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| self.split_of(&r.ecg_id) == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn assign_split(&mut self, spec: &SplitSpec) -> Result<(), DataError> {
        self.split = split_by_patient(self, spec)?;
        Ok(())
    }

    /// Covariate names shared by every record, in first-record order.
    pub fn covariate_names(&self) -> Vec<String> {
        match self.records.first() {
            Some(first) => first
                .covariates
                .keys()
                .filter(|k| self.records.iter().all(|r| r.covariates.contains_key(*k)))
                .cloned()
                .collect(),
            None => Vec::new(),
        }
    }

    /// Covariate matrix (row per index) for the named columns.
    pub fn covariate_matrix(
        &self,
        indices: &[usize],
        names: &[String],
    ) -> Result<Vec<Vec<f64>>, DataError> {
        indices
            .iter()
            .map(|&i| {
                names
                    .iter()
                    .map(|n| {
                        self.records[i].covariate(n).ok_or_else(|| {
                            DataError::Consistency(format!(
                                "record {} lacks covariate {n}",
                                self.records[i].ecg_id
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    pub fn times_events(&self, indices: &[usize]) -> (Vec<f64>, Vec<bool>) {
        let times = indices.iter().map(|&i| self.records[i].time_to_event).collect();
        let events = indices.iter().map(|&i| self.records[i].event).collect();
        (times, events)
    }
}

/// Binary label: did an observed event occur by `horizon_days`?
/// Censored-before-horizon records count as non-events.
pub fn horizon_label(time_to_event: f64, event: bool, horizon_days: f64) -> bool {
    debug_assert!(horizon_days > 0.0);
    event && time_to_event <= horizon_days
}

/// Percentage of records with an observed event by each horizon (years
/// in, `(years, percent)` out). Monotone non-decreasing across horizons.
pub fn event_rate_table(cohort: &Cohort, horizons_years: &[f64]) -> Vec<(f64, f64)> {
    if cohort.is_empty() {
        return Vec::new();
    }
    let n = cohort.len() as f64;
    horizons_years
        .iter()
        .map(|&h| {
            let hits = cohort
                .records
                .iter()
                .filter(|r| horizon_label(r.time_to_event, r.event, h * DAYS_PER_YEAR))
                .count();
            (h, 100.0 * hits as f64 / n)
        })
        .collect()
}

#[cfg(test)]
pub(crate) fn test_record(
    patient: &str,
    ecg: &str,
    tte: f64,
    event: bool,
    age: f64,
    sex: f64,
) -> EcgRecord {
    let mut covariates = IndexMap::new();
    covariates.insert("age".to_string(), age);
    covariates.insert("sex".to_string(), sex);
    EcgRecord {
        patient_id: patient.to_string(),
        ecg_id: ecg.to_string(),
        waveform: Waveform::zeros(SAMPLES, CHANNELS),
        covariates,
        time_to_event: tte,
        event,
    }
}
