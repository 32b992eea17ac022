//! Reference implementation of text/visual cross-attention conditioning and
//! the diffusion noise-prediction objective. Single head, dense `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Matrix, ShapeError};

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error(transparent)]
    ShapeMismatch(#[from] ShapeError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Projection weights for the two attention branches. Both branches share
/// the text-side query projection `w_q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k_txt: Matrix,
    pub w_v_txt: Matrix,
    pub w_k_vis: Matrix,
    pub w_v_vis: Matrix,
    /// Key dimension used in the `1/√d` scale.
    pub d: f64,
}

impl AttentionParams {
    /// Uses `w_q.cols()` as `d`.
    pub fn new(w_q: Matrix, w_k_txt: Matrix, w_v_txt: Matrix, w_k_vis: Matrix, w_v_vis: Matrix) -> Self {
        let d = w_q.cols() as f64;
        AttentionParams { w_q, w_k_txt, w_v_txt, w_k_vis, w_v_vis, d }
    }

    pub fn validate(&self) -> Result<(), ConditioningError> {
        check_scale(self.d)?;
        for (name, m) in [
            ("w_q", &self.w_q),
            ("w_k_txt", &self.w_k_txt),
            ("w_v_txt", &self.w_v_txt),
            ("w_k_vis", &self.w_k_vis),
            ("w_v_vis", &self.w_v_vis),
        ] {
            if !m.is_finite() {
                return Err(ConditioningError::InvalidParameter(format!("{name} has non-finite entries")));
            }
        }
        let dk = self.w_q.cols();
        if self.w_k_txt.cols() != dk || self.w_k_vis.cols() != dk {
            return Err(ShapeError(format!(
                "key projections must have {dk} columns to match w_q (text {}, visual {})",
                self.w_k_txt.cols(),
                self.w_k_vis.cols()
            ))
            .into());
        }
        if self.w_v_txt.cols() != self.w_v_vis.cols() {
            return Err(ShapeError(format!(
                "value projections disagree on output width ({} vs {})",
                self.w_v_txt.cols(),
                self.w_v_vis.cols()
            ))
            .into());
        }
        Ok(())
    }
}

/// Weight on the visual branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub lambda: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig { lambda: 0.5 }
    }
}

impl GuidanceConfig {
    pub fn new(lambda: f64) -> Result<Self, ConditioningError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ConditioningError::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(GuidanceConfig { lambda })
    }
}

fn check_scale(d: f64) -> Result<(), ConditioningError> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(ConditioningError::InvalidParameter(format!("d must be finite and > 0, got {d}")))
    }
}

/// Row-wise softmax with max-subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `softmax(QKᵀ/√d)`.
pub fn attention_weights(q: &Matrix, k: &Matrix, d: f64) -> Result<Matrix, ConditioningError> {
    check_scale(d)?;
    if k.rows() == 0 {
        return Err(ShapeError("context has no rows".into()).into());
    }
    let logits = q.matmul(&k.transpose())?.scale(1.0 / d.sqrt());
    Ok(softmax_rows(&logits))
}

/// Scaled dot-product attention over precomputed `q`, `k`, `v`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, d: f64) -> Result<Matrix, ConditioningError> {
    Ok(attention_weights(q, k, d)?.matmul(v)?)
}

/// `softmax((Z·W_q)(C·W_k)ᵀ/√d)·(C·W_v)`.
pub fn cross_attention(
    z: &Matrix,
    c: &Matrix,
    w_q: &Matrix,
    w_k: &Matrix,
    w_v: &Matrix,
    d: f64,
) -> Result<Matrix, ConditioningError> {
    let q = z.matmul(w_q)?;
    attention(&q, &c.matmul(w_k)?, &c.matmul(w_v)?, d)
}

fn branches(
    z: &Matrix,
    c_txt: &Matrix,
    c_vis: &Matrix,
    p: &AttentionParams,
) -> Result<(Matrix, Matrix), ConditioningError> {
    p.validate()?;
    let text = cross_attention(z, c_txt, &p.w_q, &p.w_k_txt, &p.w_v_txt, p.d)?;
    let visual = cross_attention(z, c_vis, &p.w_q, &p.w_k_vis, &p.w_v_vis, p.d)?;
    Ok((text, visual))
}

/// Text branch plus visual branch, both queried through `w_q`.
pub fn dual_cross_attention(
    z: &Matrix,
    c_txt: &Matrix,
    c_vis: &Matrix,
    params: &AttentionParams,
) -> Result<Matrix, ConditioningError> {
    let (text, visual) = branches(z, c_txt, c_vis, params)?;
    Ok(text.add(&visual)?)
}

/// Text branch plus `λ` times the visual branch.
pub fn guided_attention(
    z: &Matrix,
    c_txt: &Matrix,
    c_vis: &Matrix,
    params: &AttentionParams,
    guidance: &GuidanceConfig,
) -> Result<Matrix, ConditioningError> {
    GuidanceConfig::new(guidance.lambda)?;
    let (text, visual) = branches(z, c_txt, c_vis, params)?;
    Ok(text.zip_with(&visual, |t, v| t + guidance.lambda * v)?)
}

/// `‖ε − ε̂‖²`, summed over all elements.
pub fn diffusion_noise_loss(eps_true: &[f64], eps_pred: &[f64]) -> Result<f64, ConditioningError> {
    if eps_true.len() != eps_pred.len() {
        return Err(ShapeError(format!("{} targets vs {} predictions", eps_true.len(), eps_pred.len())).into());
    }
    Ok(eps_true.iter().zip(eps_pred).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Mean squared error over all elements; 0 for empty inputs.
pub fn diffusion_noise_loss_mean(eps_true: &[f64], eps_pred: &[f64]) -> Result<f64, ConditioningError> {
    let sum = diffusion_noise_loss(eps_true, eps_pred)?;
    Ok(if eps_true.is_empty() { 0.0 } else { sum / eps_true.len() as f64 })
}
