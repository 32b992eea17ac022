use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::audio::AudioClip;

/// Spectral-flux onset detector settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnsetConfig {
    pub frame_size: usize,
    pub hop_size: usize,
    /// Peaks must exceed `threshold` times both the clip-wide median flux
    /// and the mean flux over the preceding `local_window`.
    pub threshold: f64,
    /// Trailing window for the local mean, in seconds. Suppresses the
    /// fluctuations inside a sustained noisy event.
    pub local_window: f64,
    /// Peaks must also exceed this absolute flux, in window-normalized
    /// magnitude units (a full-scale sine peaks near 0.5 in its bin).
    pub floor: f64,
    /// Minimum spacing between reported onsets, in seconds.
    pub min_separation: f64,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        OnsetConfig { frame_size: 1024, hop_size: 256, threshold: 1.5, local_window: 0.1, floor: 0.01, min_separation: 0.05 }
    }
}

impl OnsetConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.frame_size < 2 || self.hop_size == 0 {
            return Err(MetricsError::InvalidConfig("frame_size must be >= 2 and hop_size >= 1".into()));
        }
        for (name, v) in [("threshold", self.threshold), ("local_window", self.local_window), ("floor", self.floor), ("min_separation", self.min_separation)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MetricsError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One detected onset and its flux strength, usable as a confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    pub time: f64,
    pub strength: f64,
}

/// Half-wave rectified spectral flux of the mono downmix, one value per
/// analysis frame (frame 0 has no predecessor and is 0). Frame `i` starts at
/// sample `i × hop`.
pub fn spectral_flux(clip: &AudioClip, config: &OnsetConfig) -> Result<Vec<f64>, MetricsError> {
    config.validate()?;
    let mono = clip.to_mono();
    let x = mono.channel(0);
    if x.len() < config.frame_size {
        return Err(MetricsError::TooShort { frames: x.len(), needed: config.frame_size });
    }
    let n = config.frame_size;
    let window: Vec<f64> =
        (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
    let norm = 1.0 / window.iter().sum::<f64>();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    let count = (x.len() - n) / config.hop_size + 1;
    let bins = n / 2 + 1;
    let mut prev = vec![0.0; bins];
    let mut flux = Vec::with_capacity(count);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for i in 0..count {
        let start = i * config.hop_size;
        for ((b, &s), &w) in buf.iter_mut().zip(&x[start..start + n]).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        let mut total = 0.0;
        for (k, p) in prev.iter_mut().enumerate() {
            let mag = buf[k].norm() * norm;
            if i > 0 {
                total += (mag - *p).max(0.0);
            }
            *p = mag;
        }
        flux.push(total);
    }
    Ok(flux)
}

/// Spectral-flux onsets with strengths, in time order.
///
/// A frame is a peak when its flux is a local maximum (`>=` the previous
/// frame, `>` the next), exceeds `floor`, and exceeds `threshold` times the
/// larger of the clip-wide median and the trailing local mean.
/// Peaks closer than `min_separation` are resolved in favour of the stronger
/// one. Times are frame centres.
pub fn detect_onsets_scored(clip: &AudioClip, config: &OnsetConfig) -> Result<Vec<Onset>, MetricsError> {
    let flux = spectral_flux(clip, config)?;
    let mut sorted = flux[1..].to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let sr = clip.sample_rate() as f64;
    let window = ((config.local_window * sr / config.hop_size as f64).round() as usize).max(1);
    let mut peaks: Vec<Onset> = Vec::new();
    for i in 1..flux.len() {
        let f = flux[i];
        let next = flux.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        let from = i.saturating_sub(window).max(1);
        let local = flux[from..i].iter().sum::<f64>() / (i - from).max(1) as f64;
        let cut = (config.threshold * median.max(local)).max(config.floor);
        if f > cut && f >= flux[i - 1] && f > next {
            let time = (i * config.hop_size) as f64 / sr + config.frame_size as f64 / (2.0 * sr);
            peaks.push(Onset { time, strength: f });
        }
    }
    peaks.sort_by(|a, b| b.strength.total_cmp(&a.strength).then(a.time.total_cmp(&b.time)));
    let mut kept: Vec<Onset> = Vec::new();
    for p in peaks {
        if kept.iter().all(|k| (k.time - p.time).abs() >= config.min_separation) {
            kept.push(p);
        }
    }
    kept.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(kept)
}

/// Onset times in seconds.
pub fn detect_onsets(clip: &AudioClip, config: &OnsetConfig) -> Result<Vec<f64>, MetricsError> {
    Ok(detect_onsets_scored(clip, config)?.into_iter().map(|o| o.time).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::audio::frames_for;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: u32 = 16_000;

    pub fn bursts(times: &[f64], duration: f64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = vec![0.0; frames_for(duration, SR)];
        for &t in times {
            let start = frames_for(t, SR);
            for s in &mut x[start..start + frames_for(0.1, SR)] {
                *s = rng.random_range(-0.5..0.5);
            }
        }
        AudioClip::mono(x, SR).unwrap()
    }

    #[test]
    fn silence_has_no_onsets() {
        let clip = AudioClip::silence(SR as usize * 2, 1, SR).unwrap();
        assert!(detect_onsets(&clip, &OnsetConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn two_bursts() {
        let onsets = detect_onsets(&bursts(&[1.0, 3.0], 4.0), &OnsetConfig::default()).unwrap();
        assert_eq!(onsets.len(), 2, "{onsets:?}");
        assert!((onsets[0] - 1.0).abs() <= 0.03, "{onsets:?}");
        assert!((onsets[1] - 3.0).abs() <= 0.03, "{onsets:?}");
    }

    #[test]
    fn steady_tone_has_no_onsets() {
        let x: Vec<f64> =
            (0..SR as usize * 2).map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / SR as f64).sin()).collect();
        let clip = AudioClip::mono(x, SR).unwrap();
        assert!(detect_onsets(&clip, &OnsetConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn too_short() {
        let clip = AudioClip::silence(1000, 1, SR).unwrap();
        assert!(matches!(detect_onsets(&clip, &OnsetConfig::default()), Err(MetricsError::TooShort { .. })));
    }
}
