//! Fixed waveform features and covariate scaling.

use super::net::{EncoderKind, NetInput, WaveInput, WAVE_FEATURES};
use super::NeuralError;
use crate::data::{Cohort, EcgRecord, Waveform};

/// Six fixed summaries per channel: mean, standard deviation, max
/// absolute value, peak-to-peak range, mean energy, and max absolute
/// first difference. Computed on the normalized waveform.
pub fn wave_stats_features(waveform: &Waveform) -> Vec<f64> {
    let mut out = Vec::with_capacity(WAVE_FEATURES);
    for c in 0..waveform.channels() {
        let ch = waveform.channel(c);
        let n = ch.len() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut max_abs = 0.0f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut max_diff = 0.0f64;
        let mut prev = ch[0] as f64;
        for (i, &v) in ch.iter().enumerate() {
            let v = v as f64;
            sum += v;
            sum_sq += v * v;
            max_abs = max_abs.max(v.abs());
            min = min.min(v);
            max = max.max(v);
            if i > 0 {
                max_diff = max_diff.max((v - prev).abs());
            }
            prev = v;
        }
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        out.push(mean);
        out.push(var.sqrt());
        out.push(max_abs);
        out.push(max - min);
        out.push(sum_sq / n);
        out.push(max_diff);
    }
    out
}

/// Train-set standardization of covariate inputs; applied identically at
/// evaluation time, including cross-dataset evaluation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CovariateScaler {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl CovariateScaler {
    /// Identity scaler over no covariates.
    pub fn empty() -> Self {
        CovariateScaler {
            names: Vec::new(),
            means: Vec::new(),
            stds: Vec::new(),
        }
    }

    pub fn fit(cohort: &Cohort, indices: &[usize], names: &[String]) -> Result<Self, NeuralError> {
        let rows = cohort
            .covariate_matrix(indices, names)
            .map_err(|e| NeuralError::Config(e.to_string()))?;
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; names.len()];
        let mut stds = vec![0.0; names.len()];
        for j in 0..names.len() {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
            means[j] = mean;
            stds[j] = var.sqrt().max(1e-8);
        }
        Ok(CovariateScaler {
            names: names.to_vec(),
            means,
            stds,
        })
    }

    pub fn scale(&self, record: &EcgRecord) -> Result<Vec<f64>, NeuralError> {
        self.names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let v = record.covariate(name).ok_or_else(|| {
                    NeuralError::Shape(format!("record {} lacks covariate {name}", record.ecg_id))
                })?;
                Ok((v - self.means[j]) / self.stds[j])
            })
            .collect()
    }
}

/// Turns cohort records into network inputs for one encoder/covariate
/// configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureExtractor {
    pub encoder: EncoderKind,
    pub scaler: CovariateScaler,
}

impl FeatureExtractor {
    pub fn covariate_dim(&self) -> usize {
        self.scaler.names.len()
    }

    pub fn build_input<'a>(&self, record: &'a EcgRecord) -> Result<NetInput<'a>, NeuralError> {
        let wave = match self.encoder {
            EncoderKind::TabularZero => WaveInput::None,
            EncoderKind::WaveStats => WaveInput::Stats(wave_stats_features(&record.waveform)),
            EncoderKind::TinyConv => WaveInput::Raw(&record.waveform),
        };
        Ok(NetInput {
            wave,
            covariates: self.scaler.scale(record)?,
        })
    }

    pub fn build_inputs<'a>(
        &self,
        cohort: &'a Cohort,
        indices: &[usize],
    ) -> Result<Vec<NetInput<'a>>, NeuralError> {
        indices
            .iter()
            .map(|&i| self.build_input(&cohort.records[i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CHANNELS, SAMPLES};

    #[test]
    fn features_of_zero_waveform_are_zero() {
        let w = Waveform::zeros(SAMPLES, CHANNELS);
        let f = wave_stats_features(&w);
        assert_eq!(f.len(), WAVE_FEATURES);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn features_track_known_signal() {
        let mut w = Waveform::zeros(SAMPLES, CHANNELS);
        // channel 0: alternating +-1
        for (i, v) in w.channel_mut(0).iter_mut().enumerate() {
            *v = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let f = wave_stats_features(&w);
        assert!(f[0].abs() < 1e-12); // mean
        assert!((f[1] - 1.0).abs() < 1e-12); // std
        assert_eq!(f[2], 1.0); // max abs
        assert_eq!(f[3], 2.0); // peak to peak
        assert!((f[4] - 1.0).abs() < 1e-12); // energy
        assert_eq!(f[5], 2.0); // max first difference
        // other channels untouched
        assert!(f[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaler_standardizes_training_rows() {
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(crate::data::test_record(
                &format!("p{i}"),
                &format!("e{i}"),
                10.0,
                false,
                40.0 + i as f64,
                (i % 2) as f64,
            ));
        }
        let cohort = Cohort::new(records);
        let indices: Vec<usize> = (0..10).collect();
        let names = vec!["age".to_string(), "sex".to_string()];
        let scaler = CovariateScaler::fit(&cohort, &indices, &names).unwrap();
        let scaled: Vec<Vec<f64>> = cohort
            .records
            .iter()
            .map(|r| scaler.scale(r).unwrap())
            .collect();
        for j in 0..2 {
            let mean: f64 = scaled.iter().map(|r| r[j]).sum::<f64>() / 10.0;
            let var: f64 = scaled.iter().map(|r| r[j] * r[j]).sum::<f64>() / 10.0 - mean * mean;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }
}
