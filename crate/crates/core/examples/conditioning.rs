//! Text and visual cross-attention blended by the guidance weight.
//!
//!     cargo run --example conditioning

use audio_composer::conditioning::{cross_attention, diffusion_noise_loss, guided_attention, AttentionParams, GuidanceConfig};
use audio_composer::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = random(&mut rng, 4, 8);
    let (text, visual) = (random(&mut rng, 6, 8), random(&mut rng, 3, 8));
    let p = AttentionParams::new(random(&mut rng, 8, 4), random(&mut rng, 8, 4), random(&mut rng, 8, 4), random(&mut rng, 8, 4), random(&mut rng, 8, 4));
    let text_only = cross_attention(&z, &text, &p.w_q, &p.w_k_txt, &p.w_v_txt, p.d).unwrap();
    for lambda in [0.0, 0.5, 1.0] {
        let out = guided_attention(&z, &text, &visual, &p, &GuidanceConfig::new(lambda).unwrap()).unwrap();
        println!("λ={lambda}: max |Δ| from text-only = {:.4}", out.max_abs_diff(&text_only));
    }
    let eps: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pred: Vec<f64> = eps.iter().map(|e| e * 0.9).collect();
    println!("noise loss: {:.5}", diffusion_noise_loss(&eps, &pred).unwrap());
}
