//! RIFF/WAVE reading and writing.
//!
//! Writing always produces the canonical 44-byte layout, little-endian:
//!
//! ```text
//! 0  "RIFF"   4  u32 36+data_len   8  "WAVE"   12 "fmt "  16 u32 16
//! 20 u16 format tag (1 = PCM16, 3 = IEEE float32)      22 u16 channels
//! 24 u32 sample_rate   28 u32 byte_rate   32 u16 block_align
//! 34 u16 bits_per_sample   36 "data"   40 u32 data_len   44 interleaved samples
//! ```
//!
//! No `fact`, `LIST` or extensible chunks are written. Reading accepts
//! integer PCM of 8/16/24/32 bits and IEEE float32, including
//! `WAVE_FORMAT_EXTENSIBLE` files.
//!
//! Integer samples map to `[-1, 1)` by dividing by `2^(bits-1)`; writing
//! multiplies by `2^15`, rounds half away from zero and saturates, so a
//! decoded PCM16 file re-encodes bit-exactly.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, ClipError};

#[derive(Debug, Error)]
pub enum WavError {
    #[error("wav codec: {0}")]
    Codec(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported sample format: {bits}-bit {format:?}")]
    Unsupported { bits: u16, format: SampleFormat },
    #[error(transparent)]
    Clip(#[from] ClipError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

impl std::str::FromStr for WavFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pcm16" | "s16" | "int16" => Ok(WavFormat::Pcm16),
            "float32" | "f32" => Ok(WavFormat::Float32),
            other => Err(format!("unknown wav format `{other}` (expected pcm16 or float32)")),
        }
    }
}

pub fn quantize_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav<W: Write>(clip: &AudioClip, format: WavFormat, mut out: W) -> Result<(), WavError> {
    let (tag, bytes_per_sample): (u16, u16) = match format {
        WavFormat::Pcm16 => (1, 2),
        WavFormat::Float32 => (3, 4),
    };
    let channels = clip.channel_count() as u16;
    let block_align = channels * bytes_per_sample;
    let data_len = (clip.frames() * block_align as usize) as u32;

    let mut header = Vec::with_capacity(44);
    header.extend_from_slice(b"RIFF");
    header.extend_from_slice(&(36 + data_len).to_le_bytes());
    header.extend_from_slice(b"WAVEfmt ");
    header.extend_from_slice(&16u32.to_le_bytes());
    header.extend_from_slice(&tag.to_le_bytes());
    header.extend_from_slice(&channels.to_le_bytes());
    header.extend_from_slice(&clip.sample_rate().to_le_bytes());
    header.extend_from_slice(&(clip.sample_rate() * block_align as u32).to_le_bytes());
    header.extend_from_slice(&block_align.to_le_bytes());
    header.extend_from_slice(&(bytes_per_sample * 8).to_le_bytes());
    header.extend_from_slice(b"data");
    header.extend_from_slice(&data_len.to_le_bytes());
    out.write_all(&header)?;

    let mut data = Vec::with_capacity(data_len as usize);
    for s in clip.interleaved() {
        match format {
            WavFormat::Pcm16 => data.extend_from_slice(&quantize_pcm16(s).to_le_bytes()),
            WavFormat::Float32 => data.extend_from_slice(&(s as f32).to_le_bytes()),
        }
    }
    out.write_all(&data)?;
    out.flush()?;
    Ok(())
}

pub fn encode_wav(clip: &AudioClip, format: WavFormat) -> Result<Vec<u8>, WavError> {
    let mut bytes = Vec::new();
    write_wav(clip, format, &mut bytes)?;
    Ok(bytes)
}

pub fn read_wav<R: Read>(input: R) -> Result<AudioClip, WavError> {
    let reader = WavReader::new(input)?;
    let spec = reader.spec();
    let data: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
        (format, bits) => return Err(WavError::Unsupported { bits, format }),
    };
    Ok(AudioClip::from_interleaved(&data, spec.channels as usize, spec.sample_rate)?)
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, WavError> {
    read_wav(Cursor::new(bytes))
}

pub fn write_wav_file(path: impl AsRef<Path>, clip: &AudioClip, format: WavFormat) -> Result<(), WavError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wav(clip, format, file)
}

pub fn read_wav_file(path: impl AsRef<Path>) -> Result<AudioClip, WavError> {
    read_wav(std::io::BufReader::new(std::fs::File::open(path)?))
}
