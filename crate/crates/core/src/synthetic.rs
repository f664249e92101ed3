//! Synthetic cohorts with known ground-truth log-risk.
//!
//! Event times follow a Weibull proportional-hazards model
//! `T = lambda * (-ln U * exp(-r))^(1/k)` with uniform administrative
//! censoring, so the cumulative hazard is `(t/lambda)^k * exp(r)` and the
//! true log-risk `r = beta . [age, sex] + gamma * z` is known per record.
//! Waveforms carry the latent `z` through their QRS amplitude, giving
//! feature extractors a learnable target with a known ceiling.

use crate::data::{
    Cohort, EcgRecord, Waveform, ACTIVE_SAMPLES, CHANNELS, EDGE_PAD, MIN_TTE_DAYS, SAMPLES,
};
use crate::exec::{self, Mode};
use crate::metrics::{concordance_td, MetricError, RiskScores, Weighting};
use crate::rng::Pcg;
use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Generator parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Log-hazard-ratio per covariate, ordered [age, sex].
    pub beta: Vec<f64>,
    /// Coefficient of the waveform latent.
    pub gamma: f64,
    pub weibull_shape: f64,
    /// Scale in days.
    pub weibull_scale: f64,
    /// Administrative censoring is uniform on (0, censor_max] days.
    pub censor_max: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.beta.len() != 2 {
            return Err(SyntheticError::InvalidSpec(format!(
                "beta must cover [age, sex], got {} entries",
                self.beta.len()
            )));
        }
        if !(self.weibull_shape > 0.0) {
            return Err(SyntheticError::InvalidSpec("weibull_shape must be > 0".into()));
        }
        if !(self.weibull_scale > 0.0) {
            return Err(SyntheticError::InvalidSpec("weibull_scale must be > 0".into()));
        }
        if !(self.censor_max > 0.0) {
            return Err(SyntheticError::InvalidSpec("censor_max must be > 0".into()));
        }
        Ok(())
    }
}

/// Weibull event-time draw for log-risk `r`: inverse-CDF sampling of the
/// proportional-hazards survival function.
pub fn sample_event_time(rng: &mut Pcg, shape: f64, scale: f64, log_risk: f64) -> f64 {
    let u = rng.f64_open();
    scale * (-u.ln() * (-log_risk).exp()).powf(1.0 / shape)
}

// One-second beat template at 400 Hz: Gaussian bumps for the P wave, the
// QRS complex and the T wave. The QRS part is scaled by the risk latent;
// P and T are not. Constants are frozen so feature extractors have a
// stable target.
const BEAT_RATE: usize = 400;
const P_WAVE: (f64, f64, f64) = (0.12, 0.18, 0.025);
const Q_WAVE: (f64, f64, f64) = (-0.15, 0.355, 0.008);
const R_WAVE: (f64, f64, f64) = (1.0, 0.38, 0.012);
const S_WAVE: (f64, f64, f64) = (-0.22, 0.405, 0.009);
const T_WAVE: (f64, f64, f64) = (0.30, 0.58, 0.045);
const NOISE_STD: f64 = 0.05;

/// Fixed per-channel amplitude scaling of the shared beat shape.
pub const CHANNEL_SCALE: [f64; CHANNELS] = [
    1.0, 0.9, 0.8, 0.7, 0.85, 0.95, 0.6, 1.1, 1.05, 0.9, 0.8, 0.75,
];

fn bump(t: f64, (amp, mu, sigma): (f64, f64, f64)) -> f64 {
    amp * (-((t - mu) * (t - mu)) / (2.0 * sigma * sigma)).exp()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Build one 4096 x 12 waveform: the beat tiled at 1 Hz across the
/// 10-second active window, QRS amplitude scaled by
/// `1 - 0.3 * sigmoid(z)`, Gaussian noise on the active region, zero
/// padding at the edges.
fn build_waveform(rng: &mut Pcg, z: f64) -> Waveform {
    let qrs_amp = 1.0 - 0.3 * sigmoid(z);
    let mut beat = [0.0f64; BEAT_RATE];
    for (i, b) in beat.iter_mut().enumerate() {
        let t = i as f64 / BEAT_RATE as f64;
        let fixed = bump(t, P_WAVE) + bump(t, T_WAVE);
        let qrs = bump(t, Q_WAVE) + bump(t, R_WAVE) + bump(t, S_WAVE);
        *b = fixed + qrs_amp * qrs;
    }
    let mut w = Waveform::zeros(SAMPLES, CHANNELS);
    for (c, &scale) in CHANNEL_SCALE.iter().enumerate() {
        let ch = w.channel_mut(c);
        for s in 0..ACTIVE_SAMPLES {
            let v = scale * beat[s % BEAT_RATE] + NOISE_STD * rng.normal();
            ch[EDGE_PAD + s] = v as f32;
        }
    }
    w
}

fn generate_record(spec: &SyntheticSpec, index: usize) -> (EcgRecord, f64) {
    // Per-record stream keeps generation order-free and parallelizable.
    let mut rng = Pcg::new(spec.seed, index as u64 + 1);
    let age = rng.normal_scaled(50.0, 15.0).max(0.0);
    let sex = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
    let z = rng.normal();
    let log_risk = spec.beta[0] * age + spec.beta[1] * sex + spec.gamma * z;
    let event_time = sample_event_time(&mut rng, spec.weibull_shape, spec.weibull_scale, log_risk);
    let censor_time = rng.range(0.0, spec.censor_max);
    let event = event_time <= censor_time;
    let time_to_event = event_time.min(censor_time).max(MIN_TTE_DAYS);
    let waveform = build_waveform(&mut rng, z);

    let mut covariates = IndexMap::new();
    covariates.insert("age".to_string(), age);
    covariates.insert("sex".to_string(), sex);
    let record = EcgRecord {
        patient_id: format!("sp{index:06}"),
        ecg_id: format!("se{index:06}"),
        waveform,
        covariates,
        time_to_event,
        event,
    };
    (record, log_risk)
}

/// Generate a cohort together with the true log-risk per record.
pub fn generate(spec: &SyntheticSpec) -> Result<(Cohort, Vec<f64>), SyntheticError> {
    generate_with(spec, Mode::default())
}

/// [`generate`] with an explicit execution mode (records are derived from
/// independent per-index streams, so the output is mode-independent).
pub fn generate_with(spec: &SyntheticSpec, mode: Mode) -> Result<(Cohort, Vec<f64>), SyntheticError> {
    spec.validate()?;
    let pairs = exec::map_collect(spec.n, mode, |i| generate_record(spec, i));
    let mut records = Vec::with_capacity(spec.n);
    let mut risks = Vec::with_capacity(spec.n);
    for (record, risk) in pairs {
        records.push(record);
        risks.push(risk);
    }
    Ok((Cohort::new(records), risks))
}

/// Concordance of the generator-known log-risk: the reference ceiling
/// for trained models. Uses the same weighted time-dependent concordance
/// the benchmark reports.
pub fn oracle_concordance(cohort: &Cohort, true_log_risk: &[f64]) -> Result<f64, MetricError> {
    let times: Vec<f64> = cohort.records.iter().map(|r| r.time_to_event).collect();
    let events: Vec<bool> = cohort.records.iter().map(|r| r.event).collect();
    concordance_td(
        &RiskScores::Constant(true_log_risk),
        &times,
        &events,
        Weighting::Km,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::preprocess_waveform;

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec {
            n: 200,
            beta: vec![0.0, 0.7],
            gamma: 1.0,
            weibull_shape: 1.0,
            weibull_scale: 800.0,
            censor_max: 2500.0,
            seed: 4,
        }
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let spec = base_spec();
        let (a, ra) = generate(&spec).unwrap();
        let (b, rb) = generate(&spec).unwrap();
        assert_eq!(ra, rb);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.time_to_event.to_bits(), y.time_to_event.to_bits());
            assert_eq!(x.event, y.event);
            assert_eq!(x.waveform.raw(), y.waveform.raw());
        }
    }

    #[test]
    fn sequential_and_parallel_generation_agree() {
        let spec = base_spec();
        let (a, ra) = generate_with(&spec, Mode::Sequential).unwrap();
        let (b, rb) = generate_with(&spec, Mode::Parallel).unwrap();
        assert_eq!(ra, rb);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.waveform.raw(), y.waveform.raw());
        }
    }

    #[test]
    fn zero_coefficients_give_uninformative_risk() {
        let mut spec = base_spec();
        spec.beta = vec![0.0, 0.0];
        spec.gamma = 0.0;
        let (cohort, risks) = generate(&spec).unwrap();
        assert!(risks.iter().all(|&r| r == 0.0));
        let c = oracle_concordance(&cohort, &risks).unwrap();
        assert_eq!(c, 0.5);
    }

    #[test]
    fn exponential_mean_matches_scale() {
        // shape 1, scale 1000, r = 0: mean event time is the scale
        let mut rng = Pcg::seeded(12);
        let n = 50_000;
        let mean = (0..n)
            .map(|_| sample_event_time(&mut rng, 1.0, 1000.0, 0.0))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1000.0).abs() < 50.0, "mean {mean}");
    }

    #[test]
    fn generate_uncensored_mean_matches_scale() {
        let spec = SyntheticSpec {
            n: 3000,
            beta: vec![0.0, 0.0],
            gamma: 0.0,
            weibull_shape: 1.0,
            weibull_scale: 1000.0,
            censor_max: 1e9, // effectively uncensored
            seed: 5,
        };
        let (cohort, _) = generate(&spec).unwrap();
        let uncensored: Vec<f64> = cohort
            .records
            .iter()
            .filter(|r| r.event)
            .map(|r| r.time_to_event)
            .collect();
        assert!(uncensored.len() > 2900);
        let mean = uncensored.iter().sum::<f64>() / uncensored.len() as f64;
        assert!((mean - 1000.0).abs() < 50.0, "mean {mean}");
    }

    #[test]
    fn event_flag_matches_censoring_comparison() {
        let spec = base_spec();
        let (cohort, _) = generate(&spec).unwrap();
        let censored = cohort.records.iter().filter(|r| !r.event).count();
        assert!(censored > 0, "expect some censoring");
        assert!(censored < cohort.len(), "expect some events");
        // tighter censoring bound raises the censoring rate
        let mut tight = base_spec();
        tight.censor_max = 400.0;
        let (tight_cohort, _) = generate(&tight).unwrap();
        let tight_censored = tight_cohort.records.iter().filter(|r| !r.event).count();
        assert!(tight_censored > censored);
    }

    #[test]
    fn waveforms_are_standard_shape_and_pass_preprocessing() {
        let spec = base_spec();
        let (cohort, _) = generate(&spec).unwrap();
        for r in cohort.records.iter().take(5) {
            assert!(r.waveform.is_standard());
            let processed = preprocess_waveform(&r.waveform, 400.0).unwrap();
            assert_eq!(processed, r.waveform);
            // padding stays exact zeros
            for c in 0..CHANNELS {
                let ch = r.waveform.channel(c);
                assert!(ch[..EDGE_PAD].iter().all(|&v| v == 0.0));
                assert!(ch[SAMPLES - EDGE_PAD..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn higher_latent_means_lower_qrs_amplitude() {
        let mut lo = Pcg::seeded(1);
        let mut hi = Pcg::seeded(1);
        let w_lo = build_waveform(&mut lo, -2.0);
        let w_hi = build_waveform(&mut hi, 2.0);
        let peak = |w: &Waveform| {
            w.channel(0)
                .iter()
                .fold(0.0f32, |m, &v| m.max(v.abs()))
        };
        assert!(peak(&w_hi) < peak(&w_lo));
    }

    #[test]
    fn oracle_concordance_hand_cases() {
        // perfectly separated two-record cohort: event first, higher risk
        let mut records = vec![
            crate::data::test_record("a", "a", 10.0, true, 50.0, 0.0),
            crate::data::test_record("b", "b", 20.0, false, 50.0, 0.0),
        ];
        records[0].event = true;
        let cohort = Cohort::new(records);
        assert_eq!(oracle_concordance(&cohort, &[2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(oracle_concordance(&cohort, &[1.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn oracle_matches_brute_force_enumeration() {
        let spec = base_spec();
        let (cohort, risks) = generate(&spec).unwrap();
        let got = oracle_concordance(&cohort, &risks).unwrap();
        // independent pairwise enumeration with its own censoring weights
        let times: Vec<f64> = cohort.records.iter().map(|r| r.time_to_event).collect();
        let events: Vec<bool> = cohort.records.iter().map(|r| r.event).collect();
        let g_left = |t: f64| {
            let mut g = 1.0;
            let mut cens: Vec<f64> = times
                .iter()
                .zip(&events)
                .filter(|(_, &e)| !e)
                .map(|(&x, _)| x)
                .collect();
            cens.sort_by(|a, b| a.partial_cmp(b).unwrap());
            cens.dedup();
            for &tc in cens.iter().filter(|&&tc| tc < t) {
                let c = times.iter().zip(&events).filter(|(&x, &e)| x == tc && !e).count();
                let at_risk = times.iter().filter(|&&x| x >= tc).count();
                g *= 1.0 - c as f64 / at_risk as f64;
            }
            g
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..times.len() {
            if !events[i] {
                continue;
            }
            let g = g_left(times[i]).max(0.05);
            let w = 1.0 / (g * g);
            for j in 0..times.len() {
                if i == j || !(times[i] < times[j] || (times[i] == times[j] && !events[j])) {
                    continue;
                }
                let score = if risks[i] > risks[j] {
                    1.0
                } else if risks[i] == risks[j] {
                    0.5
                } else {
                    0.0
                };
                num += w * score;
                den += w;
            }
        }
        assert!((got - num / den).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = base_spec();
        spec.weibull_shape = 0.0;
        assert!(generate(&spec).is_err());
        let mut spec = base_spec();
        spec.beta = vec![1.0];
        assert!(generate(&spec).is_err());
        let mut spec = base_spec();
        spec.censor_max = -1.0;
        assert!(generate(&spec).is_err());
    }
}
