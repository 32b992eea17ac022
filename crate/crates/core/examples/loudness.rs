//! Measure integrated loudness and stage a clip to a target.
//!
//!     cargo run --example loudness [file.wav]

use audio_composer::audio::AudioClip;
use audio_composer::mixer::{apply_gain_to_target, measure_loudness};
use audio_composer::wav::read_wav_file;

fn main() {
    let clip = match std::env::args().nth(1) {
        Some(path) => read_wav_file(path).expect("readable wav"),
        None => {
            let sr = 48_000;
            let x = (0..sr * 3).map(|i| (2.0 * std::f64::consts::PI * 997.0 * i as f64 / sr as f64).sin()).collect();
            AudioClip::mono(x, sr as u32).unwrap()
        }
    };
    let m = measure_loudness(&clip);
    println!("integrated loudness: {:.2} LUFS", m.integrated_loudness);
    println!("{}", serde_json::to_string_pretty(&m).unwrap());
    if m.integrated_loudness.is_finite() {
        let (staged, gain_db) = apply_gain_to_target(&clip, -23.0).unwrap();
        println!("gain to -23 LUFS: {gain_db:+.2} dB -> {:.2} LUFS", measure_loudness(&staged).integrated_loudness);
    }
}
