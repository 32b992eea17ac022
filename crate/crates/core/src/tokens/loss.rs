use crate::linalg::ShapeError;

use super::TokenError;

/// Summed negative log-likelihood of `targets` under row-wise softmax of
/// `logits` (`T′ × |V|`). Uses max-subtraction so large logits stay finite.
pub fn nll_loss<R: AsRef<[f64]>>(logits: &[R], targets: &[usize]) -> Result<f64, TokenError> {
    if logits.len() != targets.len() {
        return Err(ShapeError(format!("{} logit rows for {} targets", logits.len(), targets.len())).into());
    }
    let vocab = logits.first().map_or(0, |r| r.as_ref().len());
    let mut loss = 0.0;
    for (t, (row, &target)) in logits.iter().zip(targets).enumerate() {
        let row = row.as_ref();
        if row.len() != vocab || vocab == 0 {
            return Err(ShapeError(format!("logit row {t} has {} entries, expected {vocab}", row.len())).into());
        }
        if target >= vocab {
            return Err(TokenError::IndexOutOfRange { index: target, k: vocab });
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(TokenError::NonFinite("logits"));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= row[target] - max - log_sum;
    }
    Ok(loss)
}
