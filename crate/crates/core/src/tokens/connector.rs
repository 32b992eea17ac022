use crate::linalg::{Matrix, ShapeError};

use super::{FrameSequence, TokenError};

/// Temporal connector: a same-length 1-D convolution along time with zero
/// padding, sharing one odd-width `kernel` across channels, followed by a
/// per-frame `D×E` projection.
///
/// `out[t] = Σ_j kernel[j] · x[t + j − w/2]`, i.e. correlation order, so an
/// asymmetric kernel is applied as written.
pub fn temporal_aggregate(
    features: &FrameSequence,
    kernel: &[f64],
    projection: &Matrix,
) -> Result<FrameSequence, TokenError> {
    if features.is_empty() {
        return Err(TokenError::EmptyInput);
    }
    if kernel.len().is_multiple_of(2) {
        return Err(ShapeError(format!("kernel width must be odd, got {}", kernel.len())).into());
    }
    if projection.rows() != features.dim() {
        return Err(ShapeError(format!(
            "projection is {}x{} but frames have dimension {}",
            projection.rows(),
            projection.cols(),
            features.dim()
        ))
        .into());
    }
    let n = features.len();
    let d = features.dim();
    let half = (kernel.len() / 2) as isize;
    let mut mixed = Matrix::zeros(n, d);
    for t in 0..n {
        let row = mixed.row_mut(t);
        for (j, &w) in kernel.iter().enumerate() {
            let src = t as isize + j as isize - half;
            if w == 0.0 || src < 0 || src >= n as isize {
                continue;
            }
            for (o, x) in row.iter_mut().zip(features.frame(src as usize)) {
                *o += w * x;
            }
        }
    }
    let projected = mixed.matmul(projection)?;
    FrameSequence::from_flat(projected.as_slice().to_vec(), projection.cols(), features.frame_rate())
}

/// Arithmetic mean of the patch vectors of one frame.
pub fn mean_pool_frame<R: AsRef<[f64]>>(patches: &[R]) -> Result<Vec<f64>, TokenError> {
    let first = patches.first().ok_or(TokenError::EmptyInput)?.as_ref();
    let mut sum = vec![0.0; first.len()];
    for p in patches {
        let p = p.as_ref();
        if p.len() != sum.len() {
            return Err(TokenError::DimensionMismatch { expected: sum.len(), found: p.len() });
        }
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
    }
    let n = patches.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}
