//! Timeline assembly: per-step loudness staging, edge fades, summation and
//! overload protection.

mod loudness;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{db_to_amplitude, frames_for, AudioClip};
use crate::plan::Plan;

pub use loudness::{k_weight, measure_loudness, Biquad, LoudnessMeasurement, ABSOLUTE_GATE_LUFS, RELATIVE_GATE_LU};

/// Samples with a magnitude above this are reported as clipped.
pub const CLIP_THRESHOLD: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MixError {
    #[error("cannot gain-stage a silent clip")]
    Unmeasurable,
    #[error("step {step}: clip has {got} frames, expected {expected} (+/- 1)")]
    LengthMismatch { step: usize, got: usize, expected: usize },
    #[error("invalid mix configuration: {0}")]
    ConfigError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limiter {
    None,
    /// Scales the whole mix down when its peak exceeds the ceiling.
    #[default]
    Normalize,
    /// Leaves samples under the ceiling alone and saturates the excess with
    /// `tanh` so the output stays below full scale.
    SoftClip,
}

impl std::str::FromStr for Limiter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" | "off" => Ok(Limiter::None),
            "normalize" => Ok(Limiter::Normalize),
            "soft_clip" | "soft-clip" => Ok(Limiter::SoftClip),
            other => Err(format!("unknown limiter `{other}` (expected none, normalize or soft_clip)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixConfig {
    pub total_duration: f64,
    pub sample_rate: u32,
    /// Raised-cosine fade length applied at both edges of every clip, seconds.
    pub crossfade: f64,
    /// dBFS, at most 0.
    pub peak_ceiling: f64,
    pub limiter: Limiter,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            total_duration: 10.0,
            sample_rate: crate::audio::DEFAULT_SAMPLE_RATE,
            crossfade: 0.01,
            peak_ceiling: -1.0,
            limiter: Limiter::Normalize,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<(), MixError> {
        if !(self.total_duration.is_finite() && self.total_duration > 0.0) {
            return Err(MixError::ConfigError(format!("total_duration must be positive, got {}", self.total_duration)));
        }
        if self.sample_rate == 0 {
            return Err(MixError::ConfigError("sample_rate must be positive".into()));
        }
        if !(self.crossfade.is_finite() && self.crossfade >= 0.0) {
            return Err(MixError::ConfigError(format!("crossfade must be >= 0, got {}", self.crossfade)));
        }
        if !(self.peak_ceiling.is_finite() && self.peak_ceiling <= 0.0) {
            return Err(MixError::ConfigError(format!("peak_ceiling must be <= 0 dBFS, got {}", self.peak_ceiling)));
        }
        Ok(())
    }
}

/// A rendered clip and where it goes on the timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledClip {
    pub clip: AudioClip,
    pub start_time: f64,
    pub target_loudness: Option<f64>,
}

/// Scales `clip` uniformly so that its integrated loudness equals `target`.
/// Returns the scaled clip and the linear gain used.
pub fn apply_gain_to_target(clip: &AudioClip, target: f64) -> Result<(AudioClip, f64), MixError> {
    let measured = measure_loudness(clip).integrated_loudness;
    if !measured.is_finite() {
        return Err(MixError::Unmeasurable);
    }
    let gain = db_to_amplitude(target - measured);
    if gain == 1.0 {
        return Ok((clip.clone(), gain));
    }
    Ok((clip.scaled(gain), gain))
}

/// Raised-cosine gain of fade position `i` out of `n` (0 at the edge).
fn fade_gain(i: usize, n: usize) -> f64 {
    0.5 - 0.5 * (std::f64::consts::PI * i as f64 / n as f64).cos()
}

/// Applies a raised-cosine fade-in and fade-out of `fade_frames` each,
/// capped at half the clip length.
pub fn apply_edge_fades(clip: &AudioClip, fade_frames: usize) -> AudioClip {
    let len = clip.frames();
    let n = fade_frames.min(len / 2);
    if n == 0 {
        return clip.clone();
    }
    let channels = clip
        .channels()
        .iter()
        .map(|c| {
            let mut out = c.clone();
            for i in 0..n {
                let g = fade_gain(i, n);
                out[i] *= g;
                out[len - 1 - i] *= g;
            }
            out
        })
        .collect();
    AudioClip::new(channels, clip.sample_rate()).expect("fading preserves clip invariants")
}

/// Maximal runs `[start, end)` of frames where any channel exceeds
/// [`CLIP_THRESHOLD`] in magnitude.
pub fn detect_clipping(clip: &AudioClip) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for i in 0..clip.frames() {
        let hot = clip.channels().iter().any(|c| c[i].abs() > CLIP_THRESHOLD);
        match (hot, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, clip.frames()));
    }
    runs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMixReport {
    pub step: usize,
    pub description: String,
    pub start_frame: usize,
    pub frames: usize,
    pub measured: LoudnessMeasurement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_loudness: Option<f64>,
    #[serde(with = "crate::util::db_value")]
    pub applied_gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixReport {
    pub sample_rate: u32,
    pub frames: usize,
    pub steps: Vec<StepMixReport>,
    pub limiter: Limiter,
    #[serde(with = "crate::util::db_value")]
    pub peak_before_limiter_db: f64,
    #[serde(with = "crate::util::db_value")]
    pub limiter_gain_db: f64,
    pub clipping_before_limiter: Vec<(usize, usize)>,
    pub clipping: Vec<(usize, usize)>,
    pub output: LoudnessMeasurement,
}

fn soft_clip(x: f64, ceiling: f64) -> f64 {
    let mag = x.abs();
    if mag <= ceiling {
        return x;
    }
    let headroom = 1.0 - ceiling;
    let y = if headroom <= 0.0 { ceiling } else { ceiling + headroom * ((mag - ceiling) / headroom).tanh() };
    y.copysign(x)
}

/// Places each clip at its start time, gain-staged and faded, sums them in
/// step order, then applies the limiter.
pub fn render(plan: &Plan, clips: &[ScheduledClip], config: &MixConfig) -> Result<(AudioClip, MixReport), MixError> {
    config.validate()?;
    if clips.len() != plan.steps.len() {
        return Err(MixError::ConfigError(format!(
            "{} clips for {} plan steps",
            clips.len(),
            plan.steps.len()
        )));
    }
    let channels = clips.first().map(|c| c.clip.channel_count()).unwrap_or(1);
    for (i, sc) in clips.iter().enumerate() {
        if sc.clip.sample_rate() != config.sample_rate {
            return Err(MixError::ConfigError(format!(
                "step {i}: clip rate {} Hz differs from mix rate {} Hz",
                sc.clip.sample_rate(),
                config.sample_rate
            )));
        }
        if sc.clip.channel_count() != channels {
            return Err(MixError::ConfigError(format!("step {i}: channel count differs from step 0")));
        }
        if !(sc.start_time.is_finite() && sc.start_time >= 0.0) {
            return Err(MixError::ConfigError(format!("step {i}: negative start time {}", sc.start_time)));
        }
    }

    let sr = config.sample_rate;
    let total_frames = frames_for(config.total_duration, sr);
    let fade_frames = frames_for(config.crossfade, sr);
    let mut mix = vec![vec![0.0; total_frames]; channels];
    let mut step_reports = Vec::with_capacity(clips.len());

    for (i, (step, sc)) in plan.steps.iter().zip(clips).enumerate() {
        let expected = frames_for(step.duration(), sr);
        let got = sc.clip.frames();
        if got.abs_diff(expected) > 1 {
            return Err(MixError::LengthMismatch { step: i, got, expected });
        }
        let measured = measure_loudness(&sc.clip);
        let (staged, gain) = match sc.target_loudness {
            Some(target) => apply_gain_to_target(&sc.clip, target)?,
            None => (sc.clip.clone(), 1.0),
        };
        let faded = apply_edge_fades(&staged, fade_frames);
        let offset = frames_for(sc.start_time, sr);
        for (dst, src) in mix.iter_mut().zip(faded.channels()) {
            for (d, s) in dst.iter_mut().skip(offset).zip(src) {
                *d += s;
            }
        }
        step_reports.push(StepMixReport {
            step: i,
            description: step.description.clone(),
            start_frame: offset,
            frames: got,
            measured,
            target_loudness: sc.target_loudness,
            applied_gain_db: 20.0 * gain.log10(),
        });
    }

    let summed = AudioClip::new(mix, sr).map_err(|e| MixError::ConfigError(e.to_string()))?;
    let clipping_before_limiter = detect_clipping(&summed);
    let peak = summed.peak();
    let ceiling = db_to_amplitude(config.peak_ceiling);
    let (out, limiter_gain) = match config.limiter {
        Limiter::None => (summed, 1.0),
        Limiter::Normalize if peak > ceiling => {
            let g = ceiling / peak;
            let channels = summed
                .channels()
                .iter()
                .map(|c| c.iter().map(|s| (s * g).clamp(-ceiling, ceiling)).collect())
                .collect();
            (AudioClip::new(channels, sr).expect("finite"), g)
        }
        Limiter::Normalize => (summed, 1.0),
        Limiter::SoftClip => {
            let channels = summed
                .channels()
                .iter()
                .map(|c| c.iter().map(|s| soft_clip(*s, ceiling)).collect())
                .collect();
            (AudioClip::new(channels, sr).expect("finite"), 1.0)
        }
    };

    let report = MixReport {
        sample_rate: sr,
        frames: total_frames,
        steps: step_reports,
        limiter: config.limiter,
        peak_before_limiter_db: 20.0 * peak.log10(),
        limiter_gain_db: 20.0 * limiter_gain.log10(),
        clipping_before_limiter,
        clipping: detect_clipping(&out),
        output: measure_loudness(&out),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::PlanStep;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: u32 = 16_000;

    fn constant(value: f64, secs: f64) -> AudioClip {
        AudioClip::mono(vec![value; frames_for(secs, SR)], SR).unwrap()
    }

    fn noise(seed: u64, secs: f64, amp: f64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioClip::mono((0..frames_for(secs, SR)).map(|_| amp * rng.random_range(-1.0..1.0)).collect(), SR).unwrap()
    }

    fn dry(total: f64) -> MixConfig {
        MixConfig { total_duration: total, crossfade: 0.0, limiter: Limiter::None, ..MixConfig::default() }
    }

    #[test]
    fn superposition_in_overlap() {
        let plan = Plan::new(vec![PlanStep::new("a", 2.0, 5.0), PlanStep::new("b", 2.0, 5.0)], 10.0);
        let clips: Vec<_> = (0..2)
            .map(|_| ScheduledClip { clip: constant(0.25, 3.0), start_time: 2.0, target_loudness: None })
            .collect();
        let (out, report) = render(&plan, &clips, &dry(10.0)).unwrap();
        assert_eq!(out.frames(), 160_000);
        let s = out.channel(0);
        assert!(s[32_000..80_000].iter().all(|x| *x == 0.5));
        assert!(s[..32_000].iter().all(|x| *x == 0.0));
        assert!(s[80_000..].iter().all(|x| *x == 0.0));
        assert!(report.clipping.is_empty());
    }

    #[test]
    fn single_full_clip_is_the_faded_clip() {
        let plan = Plan::new(vec![PlanStep::new("a", 0.0, 10.0)], 10.0);
        let clip = noise(1, 10.0, 0.3);
        let config = MixConfig { limiter: Limiter::None, ..MixConfig::default() };
        let (out, _) = render(&plan, &[ScheduledClip { clip: clip.clone(), start_time: 0.0, target_loudness: None }], &config).unwrap();
        assert_eq!(out, apply_edge_fades(&clip, 160));
    }

    #[test]
    fn overlapping_loud_clips_clip_without_limiter() {
        let plan = Plan::new(vec![PlanStep::new("a", 0.0, 10.0), PlanStep::new("b", 2.0, 5.0)], 10.0);
        let clips = vec![
            ScheduledClip { clip: constant(0.8, 10.0), start_time: 0.0, target_loudness: None },
            ScheduledClip { clip: constant(0.8, 3.0), start_time: 2.0, target_loudness: None },
        ];
        let (_, report) = render(&plan, &clips, &dry(10.0)).unwrap();
        assert_eq!(report.clipping, vec![(32_000, 80_000)]);

        let normalized = MixConfig { limiter: Limiter::Normalize, ..dry(10.0) };
        let (out, report) = render(&plan, &clips, &normalized).unwrap();
        assert!(report.clipping.is_empty());
        assert!(detect_clipping(&out).is_empty());
        assert!(out.peak() <= db_to_amplitude(-1.0));
        assert!(!report.clipping_before_limiter.is_empty());

        let soft = MixConfig { limiter: Limiter::SoftClip, ..dry(10.0) };
        let (out, _) = render(&plan, &clips, &soft).unwrap();
        assert!(out.peak() < 1.0);
        assert_eq!(out.channel(0)[0], 0.8);
    }

    #[test]
    fn gain_identity_and_scalar_law() {
        let clip = noise(3, 3.0, 0.2);
        let measured = measure_loudness(&clip).integrated_loudness;
        let (same, g) = apply_gain_to_target(&clip, measured).unwrap();
        assert_eq!(g, 1.0);
        assert_eq!(same, clip);
        let (quieter, g) = apply_gain_to_target(&clip, measured - 6.0).unwrap();
        assert!((g - 10f64.powf(-6.0 / 20.0)).abs() < 1e-12);
        for (a, b) in quieter.channel(0).iter().zip(clip.channel(0)) {
            assert!((a - b * g).abs() < 1e-15);
        }
        assert_eq!(apply_gain_to_target(&constant(0.0, 1.0), -20.0), Err(MixError::Unmeasurable));
    }

    #[test]
    fn gain_to_target_lands_within_tenth_lu() {
        for seed in 0..5 {
            let clip = noise(seed, 2.0, 0.05 + 0.1 * seed as f64);
            let (out, _) = apply_gain_to_target(&clip, -23.0).unwrap();
            let m = measure_loudness(&out).integrated_loudness;
            assert!((m + 23.0).abs() <= 0.1, "seed {seed}: {m}");
        }
    }

    #[test]
    fn disjoint_clips_concatenate() {
        let a = noise(7, 4.0, 0.3);
        let b = noise(8, 6.0, 0.3);
        let plan = Plan::new(vec![PlanStep::new("a", 0.0, 4.0), PlanStep::new("b", 4.0, 10.0)], 10.0);
        let clips = vec![
            ScheduledClip { clip: a.clone(), start_time: 0.0, target_loudness: None },
            ScheduledClip { clip: b.clone(), start_time: 4.0, target_loudness: None },
        ];
        let (out, _) = render(&plan, &clips, &dry(10.0)).unwrap();
        let mut concat = a.channel(0).to_vec();
        concat.extend_from_slice(b.channel(0));
        assert_eq!(out.channel(0), &concat[..]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let plan = Plan::new(vec![PlanStep::new("a", 0.0, 10.0)], 10.0);
        let short = vec![ScheduledClip { clip: constant(0.1, 9.0), start_time: 0.0, target_loudness: None }];
        assert!(matches!(render(&plan, &short, &dry(10.0)), Err(MixError::LengthMismatch { step: 0, .. })));
        let ok = vec![ScheduledClip { clip: constant(0.1, 10.0), start_time: 0.0, target_loudness: None }];
        let bad = MixConfig { peak_ceiling: 1.0, ..dry(10.0) };
        assert!(matches!(render(&plan, &ok, &bad), Err(MixError::ConfigError(_))));
        let bad = MixConfig { crossfade: -1.0, ..dry(10.0) };
        assert!(matches!(render(&plan, &ok, &bad), Err(MixError::ConfigError(_))));
        assert!(matches!(render(&plan, &[], &dry(10.0)), Err(MixError::ConfigError(_))));
    }

    #[test]
    fn clipping_runs() {
        let clip = AudioClip::mono(vec![0.0, 1.0, -1.2, 0.5, 1.0, 0.999], SR).unwrap();
        assert_eq!(detect_clipping(&clip), vec![(1, 3), (4, 5)]);
        assert!(detect_clipping(&constant(0.99, 0.1)).is_empty());
    }
}
