//! The audio buffer exchanged between synthesis agents, the mixer and the
//! metrics.

use thiserror::Error;

/// Engine-wide default sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error, PartialEq)]
pub enum ClipError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("channel count must be positive")]
    ZeroChannels,
    #[error("channel {channel} has {got} samples, expected {expected}")]
    RaggedChannels { channel: usize, got: usize, expected: usize },
    #[error("non-finite sample at channel {channel}, index {index}")]
    NonFinite { channel: usize, index: usize },
}

/// Planar PCM audio in double precision.
///
/// Every channel holds the same number of frames and every sample is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self, ClipError> {
        if sample_rate == 0 {
            return Err(ClipError::ZeroSampleRate);
        }
        if channels.is_empty() {
            return Err(ClipError::ZeroChannels);
        }
        let expected = channels[0].len();
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != expected {
                return Err(ClipError::RaggedChannels { channel: c, got: ch.len(), expected });
            }
            if let Some(index) = ch.iter().position(|s| !s.is_finite()) {
                return Err(ClipError::NonFinite { channel: c, index });
            }
        }
        Ok(AudioClip { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self, ClipError> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn silence(frames: usize, channels: usize, sample_rate: u32) -> Result<Self, ClipError> {
        Self::new(vec![vec![0.0; frames]; channels.max(1)], sample_rate)
    }

    /// Builds an interleaved-to-planar clip.
    pub fn from_interleaved(data: &[f64], channels: usize, sample_rate: u32) -> Result<Self, ClipError> {
        if channels == 0 {
            return Err(ClipError::ZeroChannels);
        }
        let frames = data.len() / channels;
        let mut planar = vec![Vec::with_capacity(frames); channels];
        for frame in data.chunks_exact(channels) {
            for (c, s) in frame.iter().enumerate() {
                planar[c].push(*s);
            }
        }
        Self::new(planar, sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn frames(&self) -> usize {
        self.channels[0].len()
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn interleaved(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.frames() * self.channel_count());
        for i in 0..self.frames() {
            for ch in &self.channels {
                out.push(ch[i]);
            }
        }
        out
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    pub fn is_silent(&self) -> bool {
        self.channels.iter().all(|c| c.iter().all(|s| *s == 0.0))
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|s| s * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Averages all channels into one.
    pub fn to_mono(&self) -> AudioClip {
        if self.channel_count() == 1 {
            return self.clone();
        }
        let n = self.channel_count() as f64;
        let samples = (0..self.frames())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect();
        AudioClip { channels: vec![samples], sample_rate: self.sample_rate }
    }

    /// Truncates or zero-pads every channel to `frames` samples.
    pub fn with_length(mut self, frames: usize) -> AudioClip {
        for ch in &mut self.channels {
            ch.resize(frames, 0.0);
        }
        self
    }
}

/// Number of frames covering `seconds` at `sample_rate`, rounded to nearest.
pub fn frames_for(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round().max(0.0) as usize
}

/// Converts a linear amplitude ratio to decibels.
pub fn amplitude_to_db(amplitude: f64) -> f64 {
    20.0 * amplitude.log10()
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}
