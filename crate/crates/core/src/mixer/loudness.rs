//! Gated integrated loudness (K-weighted, LUFS).
//!
//! The K-weighting pre-filter is a high shelf followed by the RLB high-pass.
//! Both biquads are designed from their analog prototypes with the bilinear
//! transform at the clip's own sample rate, so 16 kHz material is measured
//! with 16 kHz coefficients rather than the 48 kHz table. The prototype
//! parameters are the ones that reproduce the 48 kHz reference table:
//!
//! | stage     | f0 (Hz)            | Q                  | gain (dB)         |
//! |-----------|--------------------|--------------------|-------------------|
//! | shelf     | 1681.974450955533  | 0.7071752369554196 | 3.999843853973347 |
//! | high-pass | 38.13547087602444  | 0.5003270373238773 | -                 |
//!
//! Integrated loudness uses 400 ms blocks with a 100 ms hop, an absolute gate
//! at -70 LUFS and a relative gate 10 LU below the mean of the blocks that pass
//! the absolute gate. Every channel is weighted 1.0.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::audio::{amplitude_to_db, AudioClip};

pub const ABSOLUTE_GATE_LUFS: f64 = -70.0;
pub const RELATIVE_GATE_LU: f64 = -10.0;
const BLOCK_SECS: f64 = 0.4;
const HOP_SECS: f64 = 0.1;
const OFFSET: f64 = -0.691;

/// Direct form I biquad with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn high_shelf(sample_rate: f64) -> Biquad {
        let gain_db = 3.999843853973347;
        let q = 0.7071752369554196;
        let f0 = 1681.974450955533;
        let k = (PI * f0 / sample_rate).tan();
        let vh = 10f64.powf(gain_db / 20.0);
        let vb = vh.powf(0.4996667741545416);
        let a0 = 1.0 + k / q + k * k;
        Biquad {
            b: [(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0],
            a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
        }
    }

    pub fn rlb_high_pass(sample_rate: f64) -> Biquad {
        let q = 0.5003270373238773;
        let f0 = 38.13547087602444;
        let k = (PI * f0 / sample_rate).tan();
        let a0 = 1.0 + k / q + k * k;
        Biquad { b: [1.0, -2.0, 1.0], a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0] }
    }

    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        input
            .iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

pub fn k_weight(samples: &[f64], sample_rate: u32) -> Vec<f64> {
    let sr = sample_rate as f64;
    Biquad::rlb_high_pass(sr).filter(&Biquad::high_shelf(sr).filter(samples))
}

/// Result of a loudness measurement. Silence reports `-inf` for both values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoudnessMeasurement {
    #[serde(with = "crate::util::db_value")]
    pub integrated_loudness: f64,
    /// False when the clip was shorter than one 400 ms block and the value is
    /// an ungated whole-clip estimate.
    pub gated: bool,
    #[serde(with = "crate::util::db_value")]
    pub sample_peak: f64,
}

impl LoudnessMeasurement {
    pub fn is_silent(&self) -> bool {
        self.integrated_loudness == f64::NEG_INFINITY
    }
}

fn power_to_lufs(power: f64) -> f64 {
    if power > 0.0 {
        OFFSET + 10.0 * power.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Integrated loudness of `clip`.
///
/// Clips shorter than 400 ms get an ungated estimate over the whole clip,
/// flagged with `gated = false`. All-zero clips report `-inf` with
/// `gated = true` regardless of length.
pub fn measure_loudness(clip: &AudioClip) -> LoudnessMeasurement {
    let peak = clip.peak();
    let sample_peak = if peak > 0.0 { amplitude_to_db(peak) } else { f64::NEG_INFINITY };
    if clip.is_silent() {
        return LoudnessMeasurement { integrated_loudness: f64::NEG_INFINITY, gated: true, sample_peak };
    }

    let sr = clip.sample_rate();
    let weighted: Vec<Vec<f64>> = clip.channels().iter().map(|c| k_weight(c, sr)).collect();
    let frames = clip.frames();
    let block = ((BLOCK_SECS * sr as f64).round() as usize).max(1);
    let hop = ((HOP_SECS * sr as f64).round() as usize).max(1);

    if frames < block {
        let power: f64 = weighted
            .iter()
            .map(|c| c.iter().map(|x| x * x).sum::<f64>() / frames as f64)
            .sum();
        return LoudnessMeasurement { integrated_loudness: power_to_lufs(power), gated: false, sample_peak };
    }

    // Running prefix sums of squares per channel make each block O(channels).
    let prefix: Vec<Vec<f64>> = weighted
        .iter()
        .map(|c| {
            let mut acc = 0.0;
            std::iter::once(0.0)
                .chain(c.iter().map(|x| {
                    acc += x * x;
                    acc
                }))
                .collect()
        })
        .collect();
    let block_powers: Vec<f64> = (0..=(frames - block) / hop)
        .map(|j| {
            let start = j * hop;
            prefix.iter().map(|p| (p[start + block] - p[start]) / block as f64).sum()
        })
        .collect();

    let above_absolute: Vec<f64> =
        block_powers.iter().copied().filter(|&p| power_to_lufs(p) > ABSOLUTE_GATE_LUFS).collect();
    if above_absolute.is_empty() {
        return LoudnessMeasurement { integrated_loudness: f64::NEG_INFINITY, gated: true, sample_peak };
    }
    let relative_gate =
        power_to_lufs(above_absolute.iter().sum::<f64>() / above_absolute.len() as f64) + RELATIVE_GATE_LU;
    let kept: Vec<f64> = above_absolute.into_iter().filter(|&p| power_to_lufs(p) > relative_gate).collect();
    let integrated = power_to_lufs(kept.iter().sum::<f64>() / kept.len() as f64);
    LoudnessMeasurement { integrated_loudness: integrated, gated: true, sample_peak }
}
