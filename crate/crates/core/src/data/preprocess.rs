//! Waveform resampling and padding.

use super::{DataError, Waveform, ACTIVE_SAMPLES, CHANNELS, SAMPLES, TARGET_RATE_HZ};

/// Bring a raw 12-channel signal to the standard 4096 x 12 shape.
///
/// The signal is resampled to 400 Hz by linear interpolation, then centered
/// and zero-padded to 4096 samples; a full 10-second signal receives exactly
/// 48 leading and 48 trailing zeros. Inputs longer than 10 seconds are
/// rejected, with one exception: a 4096-sample input at 400 Hz is taken as
/// already padded and passed through unchanged.
pub fn preprocess_waveform(raw: &Waveform, source_rate_hz: f64) -> Result<Waveform, DataError> {
    if raw.channels() != CHANNELS {
        return Err(DataError::Shape(format!(
            "expected {CHANNELS} channels, got {}",
            raw.channels()
        )));
    }
    if source_rate_hz <= 0.0 {
        return Err(DataError::Config(format!(
            "source rate must be positive, got {source_rate_hz}"
        )));
    }
    if raw.samples() == SAMPLES && source_rate_hz == TARGET_RATE_HZ {
        return Ok(raw.clone());
    }
    let duration_s = raw.samples() as f64 / source_rate_hz;
    if duration_s > 10.0 * (1.0 + 1e-9) {
        return Err(DataError::Unsupported(format!(
            "signal spans {duration_s:.3} s; inputs longer than 10 s are not supported"
        )));
    }

    let n_out = ((raw.samples() as f64 * TARGET_RATE_HZ / source_rate_hz).round() as usize)
        .min(ACTIVE_SAMPLES)
        .max(1);
    let left = (SAMPLES - n_out) / 2;

    let mut out = Waveform::zeros(SAMPLES, CHANNELS);
    for c in 0..CHANNELS {
        let src = raw.channel(c);
        let dst = out.channel_mut(c);
        if n_out == src.len() {
            dst[left..left + n_out].copy_from_slice(src);
        } else if src.len() == 1 {
            for d in dst[left..left + n_out].iter_mut() {
                *d = src[0];
            }
        } else {
            // Endpoint-aligned linear interpolation.
            let scale = (src.len() - 1) as f64 / (n_out - 1) as f64;
            for (i, d) in dst[left..left + n_out].iter_mut().enumerate() {
                let pos = i as f64 * scale;
                let lo = (pos.floor() as usize).min(src.len() - 1);
                let hi = (lo + 1).min(src.len() - 1);
                let frac = pos - lo as f64;
                *d = ((1.0 - frac) * src[lo] as f64 + frac * src[hi] as f64) as f32;
            }
        }
    }
    Ok(out)
}
