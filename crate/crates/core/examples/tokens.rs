//! Fit a codebook, quantize features into acoustic tokens, and score a
//! prediction with the token NLL.
//!
//!     cargo run --example tokens

use audio_composer::tokens::{
    decode_token_string, encode_token_string, fit_codebook, nll_loss, quantize, tokens_for_duration, FrameSequence,
    VocabularyMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames: Vec<Vec<f64>> = (0..tokens_for_duration(4.0, 50.0))
        .map(|i| {
            let centre = (i / 50) as f64 * 3.0;
            vec![centre + rng.random_range(-0.3..0.3), -centre + rng.random_range(-0.3..0.3)]
        })
        .collect();
    let features = FrameSequence::new(&frames, 50.0).unwrap();
    let fit = fit_codebook(&features, 4, 30, 7).unwrap();
    println!("k-means: {} iterations, inertia {:.3}", fit.iterations_run, fit.final_inertia());

    let tokens = quantize(&features, &fit.codebook).unwrap();
    let text = encode_token_string(&tokens.indices);
    println!("{} tokens: {}…", tokens.indices.len(), &text[..60]);
    assert_eq!(decode_token_string(&text, fit.codebook.k()).unwrap(), tokens.indices);

    let vocab = VocabularyMap::new(32_000, fit.codebook.k());
    let ids: Vec<usize> = tokens.indices.iter().map(|&i| vocab.audio_id(i).unwrap()).collect();
    println!("vocabulary of {} entries; first token id {}", vocab.len(), ids[0]);

    // A model that is confident in the true token at every step.
    let logits: Vec<Vec<f64>> = tokens.indices.iter().map(|&t| (0..fit.codebook.k()).map(|j| if j == t { 4.0 } else { 0.0 }).collect()).collect();
    println!("NLL of a confident model: {:.4}", nll_loss(&logits, &tokens.indices).unwrap());
}
