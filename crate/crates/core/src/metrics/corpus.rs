//! Manifest-driven evaluation over a set of rendered clips.
//!
//! A manifest is a JSON list:
//!
//! ```json
//! [
//!   {"audio": "clips/a.wav", "onsets": [0.52, 1.9],
//!    "embedding": "emb/a.feat", "reference_embedding": "emb/a_text.feat"}
//! ]
//! ```
//!
//! Relative paths resolve against the manifest's directory. Embeddings are
//! feature-container files; similarity is reported when both are present.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{detect_onsets_scored, embedding_similarity, onset_accuracy, onset_ap, MetricsError, OnsetConfig, OnsetLabels};
use crate::tokens::container::read_embedding;
use crate::wav::read_wav_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub onsets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_embedding: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub audio: PathBuf,
    pub predicted: Vec<f64>,
    pub reference: Vec<f64>,
    pub onset_accuracy: f64,
    pub onset_ap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

/// Per-clip results and their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tolerance: f64,
    pub onset_accuracy: f64,
    pub onset_ap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_similarity: Option<f64>,
    pub clips: Vec<ClipMetrics>,
}

impl MetricReport {
    pub fn from_clips(clips: Vec<ClipMetrics>, tolerance: f64) -> Self {
        let mean = |xs: Vec<f64>| if xs.is_empty() { None } else { Some(xs.iter().sum::<f64>() / xs.len() as f64) };
        MetricReport {
            tolerance,
            onset_accuracy: mean(clips.iter().map(|c| c.onset_accuracy).collect()).unwrap_or(0.0),
            onset_ap: mean(clips.iter().map(|c| c.onset_ap).collect()).unwrap_or(0.0),
            mean_similarity: mean(clips.iter().filter_map(|c| c.similarity).collect()),
            clips,
        }
    }

    /// Aligned plain-text table, one row per clip plus a mean row.
    pub fn to_table(&self) -> String {
        let fmt_sim = |s: Option<f64>| s.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut rows: Vec<[String; 6]> = vec![[
            "clip".into(),
            "pred".into(),
            "ref".into(),
            "onset_acc".into(),
            "onset_ap".into(),
            "similarity".into(),
        ]];
        for c in &self.clips {
            rows.push([
                c.audio.display().to_string(),
                c.predicted.len().to_string(),
                c.reference.len().to_string(),
                format!("{:.4}", c.onset_accuracy),
                format!("{:.4}", c.onset_ap),
                fmt_sim(c.similarity),
            ]);
        }
        rows.push([
            "mean".into(),
            String::new(),
            String::new(),
            format!("{:.4}", self.onset_accuracy),
            format!("{:.4}", self.onset_ap),
            fmt_sim(self.mean_similarity),
        ]);
        let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in &rows {
            let mut line = format!("{:<w$}", row[0], w = widths[0]);
            for c in 1..6 {
                let _ = write!(line, "  {:>w$}", row[c], w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, MetricsError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| MetricsError::Manifest(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn evaluate_entry(
    entry: &ManifestEntry,
    base: &Path,
    config: &OnsetConfig,
    tolerance: f64,
) -> Result<ClipMetrics, MetricsError> {
    let clip = read_wav_file(resolve(base, &entry.audio))?;
    let labels = OnsetLabels::new(entry.onsets.clone(), clip.duration_secs())?;
    let scored = detect_onsets_scored(&clip, config)?;
    let predicted: Vec<f64> = scored.iter().map(|o| o.time).collect();
    let pairs: Vec<(f64, f64)> = scored.iter().map(|o| (o.time, o.strength)).collect();
    let similarity = match (&entry.embedding, &entry.reference_embedding) {
        (Some(a), Some(b)) => {
            Some(embedding_similarity(&read_embedding(&resolve(base, a))?, &read_embedding(&resolve(base, b))?)?)
        }
        _ => None,
    };
    Ok(ClipMetrics {
        audio: entry.audio.clone(),
        onset_accuracy: onset_accuracy(&predicted, labels.timestamps(), tolerance)?,
        onset_ap: onset_ap(&pairs, labels.timestamps(), tolerance)?,
        predicted,
        reference: entry.onsets.clone(),
        similarity,
    })
}

/// Evaluates every manifest entry, in manifest order.
pub fn evaluate_manifest(path: &Path, config: &OnsetConfig, tolerance: f64) -> Result<MetricReport, MetricsError> {
    let entries = load_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let clips = entries
        .iter()
        .map(|e| {
            evaluate_entry(e, base, config, tolerance)
                .map_err(|err| MetricsError::Manifest(format!("{}: {err}", e.audio.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricReport::from_clips(clips, tolerance))
}
