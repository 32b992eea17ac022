//! Detect onsets in synthetic bursts and score them against references.
//!
//!     cargo run --example onset_metrics

use audio_composer::audio::AudioClip;
use audio_composer::metrics::{detect_onsets_scored, onset_accuracy, onset_ap, OnsetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let (sr, reference) = (16_000usize, [0.5, 1.25, 2.0, 3.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut x = vec![0.0; sr * 4];
    for &t in &reference {
        let start = (t * sr as f64) as usize;
        for (n, v) in x[start..start + sr / 8].iter_mut().enumerate() {
            *v = rng.random_range(-0.6..0.6) * (-(n as f64) / 400.0).exp();
        }
    }
    let clip = AudioClip::mono(x, sr as u32).unwrap();
    let onsets = detect_onsets_scored(&clip, &OnsetConfig::default()).unwrap();
    for o in &onsets {
        println!("onset at {:.3} s (strength {:.3})", o.time, o.strength);
    }
    let times: Vec<f64> = onsets.iter().map(|o| o.time).collect();
    let scored: Vec<(f64, f64)> = onsets.iter().map(|o| (o.time, o.strength)).collect();
    for tol in [0.01, 0.05] {
        println!(
            "tolerance {tol}: accuracy {:.3}, AP {:.3}",
            onset_accuracy(&times, &reference, tol).unwrap(),
            onset_ap(&scored, &reference, tol).unwrap()
        );
    }
}
