//! Randomized invariant checks for the conditioning and token modules, each
//! compared against a direct-summation oracle. Run by `audio-composer selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::conditioning::{
    attention_weights, cross_attention, diffusion_noise_loss, diffusion_noise_loss_mean, dual_cross_attention,
    guided_attention, AttentionParams, GuidanceConfig,
};
use crate::linalg::Matrix;
use crate::tokens::{
    decode_token_string, dequantize, encode_token_string, fit_codebook, frames_for_duration, nll_loss, quantize,
    temporal_aggregate, tokens_for_duration, AcousticTokenSequence, Codebook, FrameSequence, DEFAULT_CODEBOOK_SIZE,
    DEFAULT_TOKEN_RATE, DEFAULT_VISUAL_FRAME_RATE,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

type Outcome = Result<String, String>;

fn within(label: &str, err: f64, tol: f64) -> Outcome {
    if err <= tol {
        Ok(format!("{label} max error {err:.3e} <= {tol:.0e}"))
    } else {
        Err(format!("{label} max error {err:.3e} > {tol:.0e}"))
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).expect("shape")
}

struct Case {
    z: Matrix,
    c_txt: Matrix,
    c_vis: Matrix,
    params: AttentionParams,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let (nz, dz, nt, nv, dc, dk, dv) = (
        rng.random_range(1..5),
        rng.random_range(1..5),
        rng.random_range(1..6),
        rng.random_range(1..6),
        rng.random_range(1..5),
        rng.random_range(1..5),
        rng.random_range(1..5),
    );
    Case {
        z: random_matrix(rng, nz, dz),
        c_txt: random_matrix(rng, nt, dc),
        c_vis: random_matrix(rng, nv, dc),
        params: AttentionParams::new(
            random_matrix(rng, dz, dk),
            random_matrix(rng, dc, dk),
            random_matrix(rng, dc, dv),
            random_matrix(rng, dc, dk),
            random_matrix(rng, dc, dv),
        ),
    }
}

/// Triple-loop attention without max-subtraction.
fn loop_attention(z: &Matrix, c: &Matrix, wq: &Matrix, wk: &Matrix, wv: &Matrix, d: f64) -> Matrix {
    let (q, k, v) = (z.matmul(wq).unwrap(), c.matmul(wk).unwrap(), c.matmul(wv).unwrap());
    let mut out = Matrix::zeros(q.rows(), v.cols());
    for i in 0..q.rows() {
        let scores: Vec<f64> = (0..k.rows())
            .map(|j| (0..q.cols()).map(|t| q.get(i, t) * k.get(j, t)).sum::<f64>() / d.sqrt())
            .map(f64::exp)
            .collect();
        let total: f64 = scores.iter().sum();
        for (j, s) in scores.iter().enumerate() {
            for c in 0..v.cols() {
                out.set(i, c, out.get(i, c) + s / total * v.get(j, c));
            }
        }
    }
    out
}

const CASES: usize = 200;

fn conditioning_checks(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Outcome)> {
    let cases: Vec<Case> = (0..CASES).map(|_| random_case(rng)).collect();
    let max = |f: &dyn Fn(&Case) -> f64| cases.iter().map(f).fold(0.0, f64::max);
    let text = |c: &Case| cross_attention(&c.z, &c.c_txt, &c.params.w_q, &c.params.w_k_txt, &c.params.w_v_txt, c.params.d).unwrap();
    let guided = |c: &Case, l: f64| guided_attention(&c.z, &c.c_txt, &c.c_vis, &c.params, &GuidanceConfig { lambda: l }).unwrap();

    vec![
        (
            "softmax rows sum to one",
            within(
                "row sum",
                max(&|c| {
                    let q = c.z.matmul(&c.params.w_q).unwrap();
                    let w = attention_weights(&q, &c.c_txt.matmul(&c.params.w_k_txt).unwrap(), c.params.d).unwrap();
                    (0..w.rows()).map(|r| (w.row(r).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
                }),
                1e-12,
            ),
        ),
        (
            "attention matches loop oracle",
            within(
                "attention",
                max(&|c| {
                    let p = &c.params;
                    text(c).max_abs_diff(&loop_attention(&c.z, &c.c_txt, &p.w_q, &p.w_k_txt, &p.w_v_txt, p.d))
                }),
                1e-9,
            ),
        ),
        ("lambda 0 is text-only", within("λ=0", max(&|c| guided(c, 0.0).max_abs_diff(&text(c))), 0.0)),
        (
            "lambda 1 is dual attention",
            within(
                "λ=1",
                max(&|c| guided(c, 1.0).max_abs_diff(&dual_cross_attention(&c.z, &c.c_txt, &c.c_vis, &c.params).unwrap())),
                1e-12,
            ),
        ),
        (
            "guidance is affine in lambda",
            within(
                "affinity",
                max(&|c| {
                    let (g0, g1) = (guided(c, 0.0), guided(c, 1.0));
                    [0.25, 0.5, 2.0, 3.7]
                        .iter()
                        .map(|&l| guided(c, l).max_abs_diff(&g0.zip_with(&g1, |a, b| a + l * (b - a)).unwrap()))
                        .fold(0.0, f64::max)
                }),
                1e-12,
            ),
        ),
        (
            "context permutation invariance",
            within(
                "permutation",
                max(&|c| {
                    let order: Vec<usize> = (0..c.c_txt.rows()).rev().collect();
                    let p = &c.params;
                    let permuted = cross_attention(&c.z, &c.c_txt.permute_rows(&order), &p.w_q, &p.w_k_txt, &p.w_v_txt, p.d);
                    text(c).max_abs_diff(&permuted.unwrap())
                }),
                1e-12,
            ),
        ),
        (
            "key scale compensated by d",
            within(
                "scale",
                max(&|c| {
                    let p = &c.params;
                    let s = 3.0;
                    let scaled = cross_attention(&c.z, &c.c_txt, &p.w_q, &p.w_k_txt.scale(s), &p.w_v_txt, p.d * s * s);
                    text(c).max_abs_diff(&scaled.unwrap())
                }),
                1e-9,
            ),
        ),
        (
            "noise loss matches elementwise oracle",
            within(
                "noise loss",
                max(&|c| {
                    let a = c.z.as_slice();
                    let b: Vec<f64> = a.iter().map(|x| x * 0.5 - 0.1).collect();
                    let oracle: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
                    let sum = diffusion_noise_loss(a, &b).unwrap();
                    let mean = diffusion_noise_loss_mean(a, &b).unwrap();
                    (sum - oracle).abs().max((mean - oracle / a.len() as f64).abs())
                }),
                1e-12,
            ),
        ),
    ]
}

fn token_checks(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Outcome)> {
    let mut out = Vec::new();

    let (t, v) = (tokens_for_duration(10.0, DEFAULT_TOKEN_RATE), frames_for_duration(10.0, DEFAULT_VISUAL_FRAME_RATE));
    out.push((
        "rate arithmetic",
        if (t, v) == (500, 215) { Ok(format!("{t} tokens, {v} visual frames")) } else { Err(format!("{t} tokens, {v} frames")) },
    ));

    let k = DEFAULT_CODEBOOK_SIZE;
    let dim = 8;
    let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let codebook = Codebook::from_rows(&rows).expect("random codebook");
    let frames: Vec<Vec<f64>> = (0..2000).map(|_| (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect()).collect();
    let features = FrameSequence::new(&frames, DEFAULT_TOKEN_RATE).unwrap();
    let tokens = quantize(&features, &codebook).unwrap();
    let mismatches = frames
        .iter()
        .zip(&tokens.indices)
        .filter(|(f, &got)| {
            let dist = |c: &Vec<f64>| c.iter().zip(f.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..k).fold(0, |b, i| if dist(&rows[i]) < dist(&rows[b]) { i } else { b });
            best != got
        })
        .count();
    out.push((
        "quantize matches brute force",
        if mismatches == 0 { Ok(format!("{} frames, K={k}", frames.len())) } else { Err(format!("{mismatches} mismatches")) },
    ));

    let once = dequantize(&tokens, &codebook).unwrap();
    let twice = dequantize(&quantize(&once, &codebook).unwrap(), &codebook).unwrap();
    out.push((
        "dequantize idempotent on centroids",
        if once == twice { Ok("exact".into()) } else { Err("lattice round trip changed frames".into()) },
    ));

    let bad = (0..CASES).find(|_| {
        let len = rng.random_range(0..40);
        let s: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
        decode_token_string(&encode_token_string(&s), k).ok() != Some(s)
    });
    out.push((
        "token strings are bijective",
        match bad {
            None => Ok(format!("{CASES} random sequences")),
            Some(i) => Err(format!("case {i} failed to round-trip")),
        },
    ));

    let mut worst_uniform: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..CASES {
        let (steps, vocab) = (rng.random_range(1..6), rng.random_range(2..600));
        let targets: Vec<usize> = (0..steps).map(|_| rng.random_range(0..vocab)).collect();
        let uniform = vec![vec![rng.random_range(-5.0..5.0); vocab]; steps];
        worst_uniform = worst_uniform.max((nll_loss(&uniform, &targets).unwrap() - steps as f64 * (vocab as f64).ln()).abs());
        let logits: Vec<Vec<f64>> = (0..steps).map(|_| (0..vocab).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let shifted: Vec<Vec<f64>> = logits.iter().map(|r| {
            let c = rng.random_range(-50.0..50.0);
            r.iter().map(|x| x + c).collect()
        }).collect();
        worst_shift = worst_shift.max((nll_loss(&logits, &targets).unwrap() - nll_loss(&shifted, &targets).unwrap()).abs());
    }
    out.push(("nll uniform logits", within("uniform", worst_uniform, 1e-9)));
    out.push(("nll shift invariance", within("shift", worst_shift, 1e-9)));

    let seq: Vec<Vec<f64>> = (0..12).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let seq = FrameSequence::new(&seq, DEFAULT_VISUAL_FRAME_RATE).unwrap();
    let same = temporal_aggregate(&seq, &[0.0, 1.0, 0.0], &Matrix::identity(dim)).unwrap();
    out.push((
        "delta kernel is identity",
        if same == seq { Ok("exact".into()) } else { Err("output differs from input".into()) },
    ));

    let fit = fit_codebook(&features, 16, 25, rng.random()).unwrap();
    let rising = fit.inertia_history.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();
    out.push((
        "k-means inertia non-increasing",
        if rising == 0 {
            Ok(format!("{} iterations, final inertia {:.4}", fit.iterations_run, fit.final_inertia()))
        } else {
            Err(format!("inertia rose {rising} time(s)"))
        },
    ));

    let lattice = AcousticTokenSequence::new((0..k).collect());
    let back = quantize(&dequantize(&lattice, &codebook).unwrap(), &codebook).unwrap();
    out.push((
        "quantize inverts dequantize",
        if back.indices == lattice.indices { Ok(format!("all {k} indices")) } else { Err("index changed".into()) },
    ));
    out
}

/// Runs every check; deterministic for a given `seed`.
pub fn run_selftest(seed: u64) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for (suite, results) in [("conditioning", conditioning_checks(&mut rng)), ("tokens", token_checks(&mut rng))] {
        for (name, outcome) in results {
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            checks.push(Check { suite, name, passed, detail });
        }
    }
    SelftestReport { seed, checks }
}
