use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AcousticTokenSequence, FrameSequence, TokenError};

/// `K` distinct, finite centroids of dimension `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    centroids: FrameSequence,
}

impl Codebook {
    pub fn new(centroids: FrameSequence) -> Result<Self, TokenError> {
        let k = centroids.len();
        if k == 0 {
            return Err(TokenError::InvalidCodebook("codebook needs at least one centroid".into()));
        }
        if !centroids.as_flat().iter().all(|v| v.is_finite()) {
            return Err(TokenError::NonFinite("codebook"));
        }
        let mut rows: Vec<(&[f64], usize)> = centroids.frames().zip(0..).collect();
        rows.sort_by(|a, b| a.0.partial_cmp(b.0).expect("finite"));
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(TokenError::InvalidCodebook(format!("centroids {} and {} are identical", w[0].1, w[1].1)));
        }
        Ok(Codebook { centroids })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TokenError> {
        Self::new(FrameSequence::new(rows, 0.0)?)
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.dim()
    }

    pub fn centroid(&self, i: usize) -> &[f64] {
        self.centroids.frame(i)
    }

    pub fn centroids(&self) -> &FrameSequence {
        &self.centroids
    }

    /// Nearest centroid by squared Euclidean distance; ties go to the lowest
    /// index.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.frames().enumerate() {
            let d = squared_distance(x, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Maps each frame to its nearest centroid.
pub fn quantize(features: &FrameSequence, codebook: &Codebook) -> Result<AcousticTokenSequence, TokenError> {
    if !features.is_empty() && features.dim() != codebook.dim() {
        return Err(TokenError::DimensionMismatch { expected: codebook.dim(), found: features.dim() });
    }
    let indices = features.frames().map(|f| codebook.nearest(f).0).collect();
    Ok(AcousticTokenSequence { indices, frame_rate: features.frame_rate() })
}

/// Replaces each index by its centroid.
pub fn dequantize(tokens: &AcousticTokenSequence, codebook: &Codebook) -> Result<FrameSequence, TokenError> {
    let mut data = Vec::with_capacity(tokens.len() * codebook.dim());
    for &index in &tokens.indices {
        if index >= codebook.k() {
            return Err(TokenError::IndexOutOfRange { index, k: codebook.k() });
        }
        data.extend_from_slice(codebook.centroid(index));
    }
    FrameSequence::from_flat(data, codebook.dim(), tokens.frame_rate)
}

/// A fitted codebook and the inertia (sum of squared distances to the
/// assigned centroid) measured at every assignment step.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    pub inertia_history: Vec<f64>,
    pub iterations_run: usize,
}

impl KMeansFit {
    pub fn final_inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Deterministic for a fixed `seed`. Stops early once assignments no longer
/// change. A cluster that empties keeps its previous centroid, and so does a
/// cluster whose mean would collide with an earlier centroid, which keeps the
/// centroids distinct without ever raising the inertia.
pub fn fit_codebook(features: &FrameSequence, k: usize, iterations: usize, seed: u64) -> Result<KMeansFit, TokenError> {
    if k == 0 {
        return Err(TokenError::InvalidCodebook("k must be at least 1".into()));
    }
    if !features.as_flat().iter().all(|v| v.is_finite()) {
        return Err(TokenError::NonFinite("features"));
    }
    let distinct = count_distinct(features);
    if distinct < k {
        return Err(TokenError::InsufficientData { k, distinct });
    }
    let n = features.len();
    let dim = features.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding; chosen points have zero weight so never repeat.
    let mut centroids: Vec<Vec<f64>> = vec![features.frame(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = features.frames().map(|f| squared_distance(f, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        let chosen = features.frame(pick.expect("distinct points remain")).to_vec();
        for (d, f) in d2.iter_mut().zip(features.frames()) {
            *d = d.min(squared_distance(f, &chosen));
        }
        centroids.push(chosen);
    }

    let mut assignment = vec![usize::MAX; n];
    let mut inertia_history = Vec::new();
    let mut iterations_run = 0;
    for _ in 0..iterations.max(1) {
        iterations_run += 1;
        let book = Codebook { centroids: FrameSequence::new(&centroids, 0.0)? };
        let mut inertia = 0.0;
        let mut changed = false;
        for (slot, f) in assignment.iter_mut().zip(features.frames()) {
            let (i, d) = book.nearest(f);
            inertia += d;
            changed |= *slot != i;
            *slot = i;
        }
        inertia_history.push(inertia);
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, f) in assignment.iter().zip(features.frames()) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(f) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            if !centroids.iter().enumerate().any(|(i, c)| i != j && *c == mean) {
                centroids[j] = mean;
            }
        }
    }
    let codebook = Codebook::new(FrameSequence::new(&centroids, 0.0)?)?;
    Ok(KMeansFit { codebook, inertia_history, iterations_run })
}

fn count_distinct(features: &FrameSequence) -> usize {
    let mut rows: Vec<&[f64]> = features.frames().collect();
    rows.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    rows.dedup();
    rows.len()
}
