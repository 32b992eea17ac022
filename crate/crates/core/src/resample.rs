//! Rational-ratio polyphase windowed-sinc resampling.
//!
//! The interpolation kernel is a Kaiser-windowed sinc (beta 8.6, 24 zero
//! crossings per side) with its cutoff at 0.94 of the lower Nyquist
//! frequency. For a 440 Hz tone resampled 8 kHz -> 16 kHz the interior error
//! against the analytic signal stays below 1e-3 of full scale.

use crate::audio::AudioClip;

const ZERO_CROSSINGS: f64 = 24.0;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.94;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Interpolation kernel for a relative cutoff `cutoff` (1.0 = input Nyquist),
/// evaluated at offset `t` in input samples.
pub fn kernel(t: f64, cutoff: f64) -> f64 {
    let half_width = ZERO_CROSSINGS / cutoff;
    if t.abs() >= half_width {
        return 0.0;
    }
    let x = cutoff * t;
    let sinc = if x == 0.0 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    };
    let r = t / half_width;
    let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA);
    cutoff * sinc * window
}

/// Kernel cutoff used for a given rate pair.
pub fn cutoff_for(from_rate: u32, to_rate: u32) -> f64 {
    ROLLOFF * (to_rate as f64 / from_rate as f64).min(1.0)
}

/// Output length for `frames` input frames.
pub fn output_len(frames: usize, from_rate: u32, to_rate: u32) -> usize {
    ((frames as u128 * to_rate as u128 + from_rate as u128 / 2) / from_rate as u128) as usize
}

/// Polyphase resampler for one fixed rate pair. The filter bank holds one
/// tap set per output phase.
pub struct Resampler {
    up: u64,
    down: u64,
    from_rate: u32,
    to_rate: u32,
    reach: i64,
    phases: Vec<Vec<f64>>,
}

impl Resampler {
    pub fn new(from_rate: u32, to_rate: u32) -> Self {
        assert!(from_rate > 0 && to_rate > 0, "sample rates must be positive");
        let g = gcd(from_rate as u64, to_rate as u64);
        let up = to_rate as u64 / g;
        let down = from_rate as u64 / g;
        let cutoff = cutoff_for(from_rate, to_rate);
        let reach = (ZERO_CROSSINGS / cutoff).ceil() as i64;
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                (-reach + 1..=reach).map(|j| kernel(frac - j as f64, cutoff)).collect()
            })
            .collect();
        Resampler { up, down, from_rate, to_rate, reach, phases }
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let n_out = output_len(input.len(), self.from_rate, self.to_rate);
        let n_in = input.len() as i64;
        (0..n_out as u64)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as i64;
                let taps = &self.phases[(pos % self.up) as usize];
                let mut acc = 0.0;
                for (k, tap) in taps.iter().enumerate() {
                    let idx = base - self.reach + 1 + k as i64;
                    if (0..n_in).contains(&idx) {
                        acc += input[idx as usize] * tap;
                    }
                }
                acc
            })
            .collect()
    }
}

/// Resamples every channel of `clip` to `to_rate`.
pub fn resample(clip: &AudioClip, to_rate: u32) -> AudioClip {
    if clip.sample_rate() == to_rate {
        return clip.clone();
    }
    let rs = Resampler::new(clip.sample_rate(), to_rate);
    let channels = clip.channels().iter().map(|c| rs.process(c)).collect();
    AudioClip::new(channels, to_rate).expect("resampling preserves clip invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Direct windowed-sinc evaluation at each output instant, no phase table.
    fn reference(input: &[f64], from: u32, to: u32) -> Vec<f64> {
        let cutoff = cutoff_for(from, to);
        (0..output_len(input.len(), from, to))
            .map(|n| {
                let t = n as f64 * from as f64 / to as f64;
                input.iter().enumerate().map(|(k, x)| x * kernel(t - k as f64, cutoff)).sum()
            })
            .collect()
    }

    fn tone(freq: f64, rate: u32, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
    }

    #[test]
    fn matches_direct_reference() {
        for (from, to) in [(8000, 16_000), (22_050, 16_000), (16_000, 11_025)] {
            let x = tone(440.0, from, 600);
            let fast = Resampler::new(from, to).process(&x);
            let slow = reference(&x, from, to);
            assert_eq!(fast.len(), slow.len());
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "{from}->{to}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn upsampled_tone_matches_analytic_signal() {
        let x = tone(440.0, 8000, 8000);
        let y = Resampler::new(8000, 16_000).process(&x);
        assert_eq!(y.len(), 16_000);
        let truth = tone(440.0, 16_000, 16_000);
        let interior = 200..15_800;
        let err = interior.map(|i| (y[i] - truth[i]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "max interior error {err}");
    }

    #[test]
    fn identity_rate_is_passthrough() {
        let clip = AudioClip::mono(tone(100.0, 16_000, 100), 16_000).unwrap();
        assert_eq!(resample(&clip, 16_000), clip);
    }

    #[test]
    fn bessel_i0_known_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
    }
}
