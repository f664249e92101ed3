//! Per-channel z-score normalization fitted on the training split.

use super::{Cohort, DataError, Split, CHANNELS};

/// Standard-deviation floor that keeps flat channels from dividing by zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel (mean, std) pairs fitted on training waveform samples.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelNormalizer {
    /// One (mean, std) per channel; std is floored at [`STD_FLOOR`].
    pub stats: Vec<(f64, f64)>,
}

impl ChannelNormalizer {
    /// Fit over all waveform samples of the given records.
    pub fn fit<'a>(records: impl Iterator<Item = &'a super::EcgRecord> + Clone) -> Self {
        let mut sums = vec![NeumaierSum::default(); CHANNELS];
        let mut counts = vec![0u64; CHANNELS];
        for rec in records.clone() {
            for c in 0..CHANNELS {
                for &v in rec.waveform.channel(c) {
                    sums[c].add(v as f64);
                }
                counts[c] += rec.waveform.samples() as u64;
            }
        }
        let means: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s.total() / n as f64 })
            .collect();

        let mut sq = vec![NeumaierSum::default(); CHANNELS];
        for rec in records {
            for c in 0..CHANNELS {
                let m = means[c];
                for &v in rec.waveform.channel(c) {
                    let d = v as f64 - m;
                    sq[c].add(d * d);
                }
            }
        }
        let stats = means
            .into_iter()
            .zip(sq.iter().zip(&counts))
            .map(|(mean, (s, &n))| {
                let var = if n == 0 { 0.0 } else { s.total() / n as f64 };
                (mean, var.sqrt().max(STD_FLOOR))
            })
            .collect();
        ChannelNormalizer { stats }
    }

    /// Transform one waveform in place: `(v - mean) / std` per channel.
    pub fn apply(&self, waveform: &mut super::Waveform) {
        for c in 0..CHANNELS.min(waveform.channels()) {
            let (mean, std) = self.stats[c];
            for v in waveform.channel_mut(c) {
                *v = ((*v as f64 - mean) / std) as f32;
            }
        }
    }
}

/// Compensated summation; plain f64 accumulation loses too much over
/// tens of millions of samples.
#[derive(Debug, Clone, Copy, Default)]
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Fit per-channel statistics on the Train split and transform every
/// record's waveform with them (Val/Test included).
pub fn fit_apply_normalizer(cohort: &mut Cohort) -> Result<(), DataError> {
    if cohort.split.is_empty() {
        return Err(DataError::State(
            "assign a split before normalizing".to_string(),
        ));
    }
    let train: Vec<&super::EcgRecord> = cohort
        .records
        .iter()
        .filter(|r| cohort.split.get(&r.ecg_id) == Some(&Split::Train))
        .collect();
    if train.is_empty() {
        return Err(DataError::State(
            "training split is empty; cannot fit normalizer".to_string(),
        ));
    }
    let normalizer = ChannelNormalizer::fit(train.iter().copied());
    for rec in &mut cohort.records {
        normalizer.apply(&mut rec.waveform);
    }
    cohort.normalizer = Some(normalizer);
    Ok(())
}
