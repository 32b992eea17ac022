//! Semantic-token codec: k-means codebooks over frame features, `<AUD_X>`
//! token text, the extended vocabulary, the temporal connector and the
//! token-level NLL objective.
//!
//! Feature extraction is out of scope; frames arrive as files in the
//! [`container`] format.

mod codebook;
pub mod container;
mod connector;
mod loss;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::ShapeError;

pub use codebook::{dequantize, fit_codebook, quantize, Codebook, KMeansFit};
pub use connector::{mean_pool_frame, temporal_aggregate};
pub use loss::nll_loss;
pub use vocab::{
    decode_token_string, encode_token_string, token_string, wrap_vta_prompt, wrap_vta_prompt_with, SpecialToken,
    VocabEntry, VocabularyMap, VTA_TEMPLATE,
};

/// Acoustic token rate (tokens per second).
pub const DEFAULT_TOKEN_RATE: f64 = 50.0;
/// Visual frame rate after temporal subsampling.
pub const DEFAULT_VISUAL_FRAME_RATE: f64 = 21.5;
pub const DEFAULT_CODEBOOK_SIZE: usize = 500;

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("token index {index} out of range for a codebook of {k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("malformed token at byte {offset}: {message}")]
    MalformedToken { offset: usize, message: String },
    #[error(transparent)]
    ShapeMismatch(#[from] ShapeError),
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {k} distinct frames to fit {k} centroids, found {distinct}")]
    InsufficientData { k: usize, distinct: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("caption must not be empty")]
    EmptyCaption,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `N` frames of dimension `D` sampled at `frame_rate` Hz, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    data: Vec<f64>,
    dim: usize,
    frame_rate: f64,
}

impl FrameSequence {
    pub fn new<R: AsRef<[f64]>>(frames: &[R], frame_rate: f64) -> Result<Self, TokenError> {
        let dim = frames.first().map_or(0, |f| f.as_ref().len());
        let mut data = Vec::with_capacity(frames.len() * dim);
        for frame in frames {
            let frame = frame.as_ref();
            if frame.len() != dim {
                return Err(TokenError::DimensionMismatch { expected: dim, found: frame.len() });
            }
            data.extend_from_slice(frame);
        }
        Ok(FrameSequence { data, dim, frame_rate })
    }

    pub fn from_flat(data: Vec<f64>, dim: usize, frame_rate: f64) -> Result<Self, TokenError> {
        if dim == 0 && !data.is_empty() || dim != 0 && !data.len().is_multiple_of(dim) {
            return Err(TokenError::DimensionMismatch { expected: dim, found: data.len() });
        }
        Ok(FrameSequence { data, dim, frame_rate })
    }

    pub fn empty(dim: usize, frame_rate: f64) -> Self {
        FrameSequence { data: Vec::new(), dim, frame_rate }
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn duration(&self) -> f64 {
        if self.frame_rate > 0.0 {
            self.len() as f64 / self.frame_rate
        } else {
            0.0
        }
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(|i| self.frame(i))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Codebook indices at a token rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticTokenSequence {
    pub indices: Vec<usize>,
    pub frame_rate: f64,
}

impl AcousticTokenSequence {
    pub fn new(indices: Vec<usize>) -> Self {
        AcousticTokenSequence { indices, frame_rate: DEFAULT_TOKEN_RATE }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Number of tokens covering `duration` seconds at `token_rate` Hz,
/// `round(duration × rate)`. Negative durations count as zero.
pub fn tokens_for_duration(duration: f64, token_rate: f64) -> usize {
    (duration * token_rate).round().max(0.0) as usize
}

/// Visual frames covering `duration`; same arithmetic as
/// [`tokens_for_duration`], kept separate so callers never conflate rates.
pub fn frames_for_duration(duration: f64, frame_rate: f64) -> usize {
    tokens_for_duration(duration, frame_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_arithmetic() {
        assert_eq!(tokens_for_duration(10.0, DEFAULT_TOKEN_RATE), 500);
        assert_eq!(tokens_for_duration(0.0, DEFAULT_TOKEN_RATE), 0);
        assert_eq!(tokens_for_duration(2.3, 50.0), 115);
        assert_eq!(frames_for_duration(10.0, DEFAULT_VISUAL_FRAME_RATE), 215);
    }

    #[test]
    fn frame_sequence_shape() {
        let s = FrameSequence::new(&[[1.0, 2.0], [3.0, 4.0]], 50.0).unwrap();
        assert_eq!((s.len(), s.dim()), (2, 2));
        assert_eq!(s.frame(1), &[3.0, 4.0]);
        assert!((s.duration() - 0.04).abs() < 1e-12);
        assert!(FrameSequence::new(&[vec![1.0], vec![1.0, 2.0]], 50.0).is_err());
        assert!(FrameSequence::from_flat(vec![1.0; 5], 2, 50.0).is_err());
        assert!(FrameSequence::empty(3, 50.0).is_empty());
    }
}
