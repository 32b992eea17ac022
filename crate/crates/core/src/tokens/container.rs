//! Binary container for frame features, codebooks and embeddings.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "FEAT"
//!      4     2  version (u16 LE, currently 1)
//!      6     2  kind (u16 LE: 0 = features, 1 = codebook)
//!      8     4  N rows (u32 LE)
//!     12     4  D columns (u32 LE)
//!     16     4  frame_rate in Hz (f32 LE; 0 for codebooks)
//!     20  4·N·D row-major f32 LE payload
//! ```
//!
//! Every file gets a JSON sidecar at `<path>.json` with the same header
//! fields and a SHA-256 of the payload. Readers check the sidecar when it
//! exists and ignore it otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Codebook, FrameSequence, TokenError};
use crate::util::sha256_hex;

pub const MAGIC: &[u8; 4] = b"FEAT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Features,
    Codebook,
}

impl ContainerKind {
    fn code(self) -> u16 {
        match self {
            ContainerKind::Features => 0,
            ContainerKind::Codebook => 1,
        }
    }

    fn from_code(code: u16) -> Result<Self, TokenError> {
        match code {
            0 => Ok(ContainerKind::Features),
            1 => Ok(ContainerKind::Codebook),
            other => Err(TokenError::Format(format!("unknown kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u16,
    pub kind: ContainerKind,
    pub n: usize,
    pub dim: usize,
    pub frame_rate: f64,
    pub payload_sha256: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Serializes `frames` (values narrowed to `f32`).
pub fn encode(frames: &FrameSequence, kind: ContainerKind) -> Result<Vec<u8>, TokenError> {
    let n = u32::try_from(frames.len()).map_err(|_| TokenError::Format("too many rows".into()))?;
    let d = u32::try_from(frames.dim()).map_err(|_| TokenError::Format("dimension too large".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * frames.as_flat().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&kind.code().to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&(frames.frame_rate() as f32).to_le_bytes());
    for &v in frames.as_flat() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(ContainerKind, FrameSequence), TokenError> {
    if bytes.len() < HEADER_LEN {
        return Err(TokenError::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(TokenError::Format("bad magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u16_at(4);
    if version != VERSION {
        return Err(TokenError::Format(format!("unsupported version {version}")));
    }
    let kind = ContainerKind::from_code(u16_at(6))?;
    let n = u32_at(8) as usize;
    let d = u32_at(12) as usize;
    let frame_rate = f32::from_bits(u32_at(16)) as f64;
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| TokenError::Format("header sizes overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(TokenError::Format(format!("payload is {} bytes, header says {expected}", payload.len())));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let frames = if n == 0 { FrameSequence::empty(d, frame_rate) } else { FrameSequence::from_flat(data, d, frame_rate)? };
    Ok((kind, frames))
}

pub fn write(path: &Path, frames: &FrameSequence, kind: ContainerKind) -> Result<(), TokenError> {
    let bytes = encode(frames, kind)?;
    let sidecar = Sidecar {
        version: VERSION,
        kind,
        n: frames.len(),
        dim: frames.dim(),
        frame_rate: frames.frame_rate() as f32 as f64,
        payload_sha256: sha256_hex(&bytes[HEADER_LEN..]),
    };
    std::fs::write(path, &bytes)?;
    let json = serde_json::to_vec_pretty(&sidecar).map_err(|e| TokenError::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<(ContainerKind, FrameSequence), TokenError> {
    let bytes = std::fs::read(path)?;
    let (kind, frames) = decode(&bytes)?;
    let side = sidecar_path(path);
    if side.exists() {
        let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(&side)?)
            .map_err(|e| TokenError::Format(format!("sidecar {}: {e}", side.display())))?;
        if sidecar.kind != kind || sidecar.n != frames.len() || sidecar.dim != frames.dim() {
            return Err(TokenError::Format(format!("sidecar {} disagrees with the header", side.display())));
        }
        if sidecar.payload_sha256 != sha256_hex(&bytes[HEADER_LEN..]) {
            return Err(TokenError::Format(format!("payload checksum does not match {}", side.display())));
        }
    }
    Ok((kind, frames))
}

pub fn write_features(path: &Path, frames: &FrameSequence) -> Result<(), TokenError> {
    write(path, frames, ContainerKind::Features)
}

pub fn read_features(path: &Path) -> Result<FrameSequence, TokenError> {
    match read(path)? {
        (ContainerKind::Features, frames) => Ok(frames),
        (kind, _) => Err(TokenError::Format(format!("{} holds {kind:?}, expected features", path.display()))),
    }
}

pub fn write_codebook(path: &Path, codebook: &Codebook) -> Result<(), TokenError> {
    write(path, codebook.centroids(), ContainerKind::Codebook)
}

pub fn read_codebook(path: &Path) -> Result<Codebook, TokenError> {
    match read(path)? {
        (ContainerKind::Codebook, frames) => Codebook::new(frames),
        (kind, _) => Err(TokenError::Format(format!("{} holds {kind:?}, expected a codebook", path.display()))),
    }
}

/// One embedding vector: a single-row feature file as is, or the mean of the
/// rows of a longer one.
pub fn read_embedding(path: &Path) -> Result<Vec<f64>, TokenError> {
    let frames = read_features(path)?;
    let rows: Vec<&[f64]> = frames.frames().collect();
    super::mean_pool_frame(&rows)
}
