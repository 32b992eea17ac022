//! Onset synchronization metrics and embedding similarity.

pub mod corpus;
mod onsets;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{evaluate_manifest, ClipMetrics, ManifestEntry, MetricReport};
pub use onsets::{detect_onsets, detect_onsets_scored, spectral_flux, Onset, OnsetConfig};

/// Default matching tolerance in seconds.
pub const DEFAULT_TOLERANCE: f64 = 0.1;

/// Slack added to the tolerance so that matching is not decided by float
/// rounding (e.g. after shifting every timestamp by a constant).
pub const MATCH_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("clip has {frames} samples; onset detection needs at least {needed}")]
    TooShort { frames: usize, needed: usize },
    #[error("tolerance must be finite and > 0, got {0}")]
    InvalidTolerance(f64),
    #[error("invalid onset labels: {0}")]
    InvalidLabels(String),
    #[error("invalid onset config: {0}")]
    InvalidConfig(String),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("vectors differ in length ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Wav(#[from] crate::wav::WavError),
    #[error(transparent)]
    Token(#[from] crate::tokens::TokenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Strictly increasing reference onsets within `[0, clip_duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetLabels {
    timestamps: Vec<f64>,
    clip_duration: f64,
}

impl OnsetLabels {
    pub fn new(timestamps: Vec<f64>, clip_duration: f64) -> Result<Self, MetricsError> {
        if !(clip_duration.is_finite() && clip_duration >= 0.0) {
            return Err(MetricsError::InvalidLabels(format!("clip duration {clip_duration}")));
        }
        if let Some(t) = timestamps.iter().find(|t| !(0.0..=clip_duration).contains(*t)) {
            return Err(MetricsError::InvalidLabels(format!("{t} lies outside [0, {clip_duration}]")));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(MetricsError::InvalidLabels(format!("{} does not follow {} strictly", w[1], w[0])));
        }
        Ok(OnsetLabels { timestamps, clip_duration })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn clip_duration(&self) -> f64 {
        self.clip_duration
    }
}

fn check_tolerance(tolerance: f64) -> Result<(), MetricsError> {
    if tolerance.is_finite() && tolerance > 0.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidTolerance(tolerance))
    }
}

fn sorted(times: &[f64]) -> Vec<f64> {
    let mut v = times.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-to-one matching in time order: walk both sorted lists and pair the
/// earliest unmatched prediction with the earliest unmatched reference when
/// they lie within `tolerance`, otherwise drop whichever is earlier. On a
/// line this finds a maximum matching, so the hit count never drops when the
/// tolerance grows.
pub fn count_hits(predicted: &[f64], reference: &[f64], tolerance: f64) -> usize {
    let (p, r) = (sorted(predicted), sorted(reference));
    let (mut i, mut j, mut hits) = (0, 0, 0);
    while i < p.len() && j < r.len() {
        if (p[i] - r[j]).abs() <= tolerance + MATCH_EPSILON {
            hits += 1;
            i += 1;
            j += 1;
        } else if p[i] < r[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    hits
}

/// `hits / max(|predicted|, |reference|)`; 1 when both are empty.
pub fn onset_accuracy(predicted: &[f64], reference: &[f64], tolerance: f64) -> Result<f64, MetricsError> {
    check_tolerance(tolerance)?;
    if predicted.iter().chain(reference).any(|t| !t.is_finite()) {
        return Err(MetricsError::NonFinite("timestamps"));
    }
    let denom = predicted.len().max(reference.len());
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(count_hits(predicted, reference, tolerance) as f64 / denom as f64)
}

/// One point of the precision-recall curve, at a confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall at every distinct confidence, highest first. Tied
/// confidences enter together.
pub fn precision_recall(scored: &[(f64, f64)], reference: &[f64], tolerance: f64) -> Result<Vec<PrPoint>, MetricsError> {
    check_tolerance(tolerance)?;
    if scored.iter().any(|(t, c)| !t.is_finite() || !c.is_finite()) || reference.iter().any(|t| !t.is_finite()) {
        return Err(MetricsError::NonFinite("predictions"));
    }
    let mut order = scored.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let level = order[i].1;
        while i < order.len() && order[i].1 == level {
            i += 1;
        }
        let times: Vec<f64> = order[..i].iter().map(|p| p.0).collect();
        let hits = count_hits(&times, reference, tolerance) as f64;
        let recall = if reference.is_empty() { 0.0 } else { hits / reference.len() as f64 };
        points.push(PrPoint { threshold: level, precision: hits / i as f64, recall });
    }
    Ok(points)
}

/// Average precision with all-points interpolation:
/// `Σ (r_k − r_{k−1}) · max_{j ≥ k} p_j` over recall-sorted points.
/// Both lists empty gives 1; predictions without references give 0.
pub fn onset_ap(scored: &[(f64, f64)], reference: &[f64], tolerance: f64) -> Result<f64, MetricsError> {
    let points = precision_recall(scored, reference, tolerance)?;
    if reference.is_empty() {
        return Ok(if scored.is_empty() { 1.0 } else { 0.0 });
    }
    // Recall is non-decreasing along `points` because the matching is maximal.
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..points.len() {
        let interp = points[k..].iter().map(|p| p.precision).fold(0.0, f64::max);
        ap += (points[k].recall - prev_recall) * interp;
        prev_recall = points[k].recall;
    }
    Ok(ap)
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn embedding_similarity(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("embedding"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_cases() {
        let r = [0.5, 1.25, 4.0];
        assert_eq!(onset_accuracy(&r, &r, 0.05).unwrap(), 1.0);
        assert_eq!(onset_accuracy(&[], &r, 0.05).unwrap(), 0.0);
        assert_eq!(onset_accuracy(&[], &[], 0.05).unwrap(), 1.0);
        assert_eq!(onset_accuracy(&[1.00, 2.50], &[1.02, 3.00], 0.1).unwrap(), 0.5);
        assert!(matches!(onset_accuracy(&r, &r, 0.0), Err(MetricsError::InvalidTolerance(_))));
    }

    #[test]
    fn greedy_is_one_to_one() {
        // Two predictions near one reference count once.
        assert_eq!(onset_accuracy(&[1.0, 1.01], &[1.0], 0.1).unwrap(), 0.5);
    }

    #[test]
    fn ap_cases() {
        let r = [1.0, 2.0, 3.0];
        let perfect: Vec<(f64, f64)> = r.iter().map(|&t| (t, t * 0.1)).collect();
        assert_eq!(onset_ap(&perfect, &r, 0.05).unwrap(), 1.0);
        assert_eq!(onset_ap(&[(7.0, 0.9), (8.0, 0.1)], &r, 0.05).unwrap(), 0.0);
        // Hand-enumerated PR curve: (P, R) = (1, 1/3), (1/2, 1/3), (2/3, 2/3).
        let scored = [(1.0, 0.9), (2.0, 0.8), (3.0, 0.7)];
        let ap = onset_ap(&scored, &[1.0, 3.0, 5.0], 0.1).unwrap();
        assert!((ap - 5.0 / 9.0).abs() < 1e-12, "{ap}");
        assert_eq!(onset_ap(&[], &[], 0.1).unwrap(), 1.0);
        assert_eq!(onset_ap(&[(1.0, 1.0)], &[], 0.1).unwrap(), 0.0);
        assert_eq!(onset_ap(&[], &r, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn single_confidence_level() {
        let scored = [(1.0, 0.5), (2.2, 0.5), (3.0, 0.5), (9.0, 0.5)];
        let reference = [1.0, 2.0, 3.0, 4.0, 5.0];
        let pts = precision_recall(&scored, &reference, 0.1).unwrap();
        assert_eq!(pts.len(), 1);
        let ap = onset_ap(&scored, &reference, 0.1).unwrap();
        assert!((ap - pts[0].precision * pts[0].recall).abs() < 1e-15);
        assert!((ap - 0.5 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn similarity() {
        assert!((embedding_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(embedding_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(embedding_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(MetricsError::ZeroVector)));
        assert!(embedding_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn labels_validate() {
        assert!(OnsetLabels::new(vec![0.0, 1.0, 10.0], 10.0).is_ok());
        assert!(OnsetLabels::new(vec![1.0, 1.0], 10.0).is_err());
        assert!(OnsetLabels::new(vec![11.0], 10.0).is_err());
    }

    fn times() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0u32..10_000, 0..12).prop_map(|v| v.into_iter().map(|ms| ms as f64 / 1000.0).collect())
    }

    proptest! {
        #[test]
        fn tolerance_monotone(p in times(), r in times(), a in 0.001f64..0.5, b in 0.001f64..0.5) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(onset_accuracy(&p, &r, lo).unwrap() <= onset_accuracy(&p, &r, hi).unwrap());
        }

        #[test]
        fn shift_invariant(p in times(), r in times(), conf in proptest::collection::vec(0u8..4, 12), shift in -100.0f64..100.0) {
            let tol = 0.0505;
            let moved = |v: &[f64]| v.iter().map(|t| t + shift).collect::<Vec<f64>>();
            prop_assert_eq!(onset_accuracy(&p, &r, tol).unwrap(), onset_accuracy(&moved(&p), &moved(&r), tol).unwrap());
            let scored: Vec<(f64, f64)> = p.iter().zip(&conf).map(|(&t, &c)| (t, c as f64)).collect();
            let shifted: Vec<(f64, f64)> = scored.iter().map(|&(t, c)| (t + shift, c)).collect();
            prop_assert_eq!(onset_ap(&scored, &r, tol).unwrap(), onset_ap(&shifted, &moved(&r), tol).unwrap());
        }

        #[test]
        fn similarity_matches_formula(v in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..16)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(na > 1e-6 && nb > 1e-6);
            let direct = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
            prop_assert!((embedding_similarity(&a, &b).unwrap() - direct).abs() <= 1e-12);
        }
    }
}
