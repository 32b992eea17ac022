//! Acceptance criteria, one line each. Runs without network access: scripted
//! planner, stub agent, synthetic fixtures.

use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use audio_composer::agent::StubAgent;
use audio_composer::audio::AudioClip;
use audio_composer::compose::{render_plan, render_seeds, GenerationOptions};
use audio_composer::conditioning::{
    cross_attention, diffusion_noise_loss, diffusion_noise_loss_mean, dual_cross_attention, guided_attention,
    AttentionParams, GuidanceConfig,
};
use audio_composer::linalg::Matrix;
use audio_composer::metrics::{detect_onsets, onset_accuracy, onset_ap, OnsetConfig};
use audio_composer::mixer::{apply_gain_to_target, measure_loudness, render, Limiter, MixConfig, ScheduledClip};
use audio_composer::plan::{max_concurrency, parse_plan_response, serialize_plan, validate_plan, Plan, PlanStep, RuleId};
use audio_composer::planner::{Planner, PromptTemplate, ScriptedBackend};
use audio_composer::session::{Engine, SessionConfig, SessionStore, TurnOptions, TurnStatus};
use audio_composer::tokens::{
    decode_token_string, dequantize, encode_token_string, fit_codebook, nll_loss, quantize, tokens_for_duration,
    Codebook, FrameSequence,
};
use audio_composer::wav::{encode_wav, read_wav_file, WavFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- plans

fn plan_protocol_fidelity() -> Outcome {
    let mut checked = 0;
    for template in [PromptTemplate::standard(), PromptTemplate::volume_control()] {
        let volumes = template.variant == audio_composer::planner::TemplateVariant::VolumeControl;
        ensure!(template.in_context_examples.len() >= 4, "template has {} examples", template.in_context_examples.len());
        for (i, ex) in template.in_context_examples.iter().take(4).enumerate() {
            let plan = parse_plan_response(&ex.assistant, 10.0).map_err(|e| format!("example {}: {e}", i + 1))?;
            let report = validate_plan(&plan);
            ensure!(report.valid, "example {} invalid: {:?}", i + 1, report.rule_ids());
            ensure!(plan.has_volumes() == volumes, "example {} volume presence", i + 1);
            let back = parse_plan_response(&serialize_plan(&plan), 10.0).map_err(|e| e.to_string())?;
            ensure!(back == plan, "example {} changed in round trip", i + 1);
            ensure!(Plan::from_json(&plan.to_json()).map_err(|e| e.to_string())? == plan, "json round trip");
            checked += 1;
        }
    }
    Ok(format!("{checked} examples parse, validate and round-trip"))
}

/// Highest number of steps sounding at once, by probing between every pair
/// of adjacent interval endpoints.
fn concurrency_oracle(plan: &Plan) -> usize {
    let mut points: Vec<f64> = plan.steps.iter().flat_map(|s| [s.start_time, s.end_time]).collect();
    points.sort_by(f64::total_cmp);
    points
        .windows(2)
        .map(|w| (w[0] + w[1]) / 2.0)
        .map(|t| plan.steps.iter().filter(|s| s.start_time <= t && t < s.end_time).count())
        .max()
        .unwrap_or(0)
}

fn constraint_enforcement() -> Outcome {
    let three = Plan::new(
        vec![PlanStep::new("a", 0.0, 10.0), PlanStep::new("b", 2.0, 6.0), PlanStep::new("c", 4.0, 5.0)],
        10.0,
    );
    ensure!(validate_plan(&three).has(RuleId::OverlapLimit), "3 concurrent steps not rejected");
    let short = Plan::new(vec![PlanStep::new("a", 0.0, 4.0), PlanStep::new("b", 3.0, 8.0)], 10.0);
    ensure!(validate_plan(&short).has(RuleId::EndCoverage), "uncovered end not rejected");
    let touching = Plan::new(vec![PlanStep::new("a", 0.0, 5.0), PlanStep::new("b", 5.0, 10.0)], 10.0);
    ensure!(max_concurrency(&touching) == 1, "half-open intervals");

    let mut r = rng(11);
    let mut over = 0;
    for case in 0..1000 {
        let n = r.random_range(1..7);
        let steps = (0..n)
            .map(|i| {
                let a = r.random_range(0..20) as f64 * 0.5;
                let b = a + r.random_range(1..=(20 - (a * 2.0) as i32).max(1)) as f64 * 0.5;
                PlanStep::new(format!("s{i}"), a, b.min(10.0))
            })
            .collect();
        let plan = Plan::new(steps, 10.0);
        let oracle = concurrency_oracle(&plan);
        ensure!(max_concurrency(&plan) == oracle, "case {case}: {} vs oracle {oracle}", max_concurrency(&plan));
        let flagged = validate_plan(&plan).has(RuleId::OverlapLimit);
        ensure!(flagged == (oracle > 2), "case {case}: OVERLAP_LIMIT={flagged} with concurrency {oracle}");
        over += usize::from(oracle > 2);
    }
    Ok(format!("1000 fuzzed plans agree with the oracle ({over} over the limit)"))
}

// ---------------------------------------------------------------- audio

fn noise(r: &mut ChaCha8Rng, frames: usize, amp: f64, sr: u32) -> AudioClip {
    AudioClip::mono((0..frames).map(|_| r.random_range(-amp..amp)).collect(), sr).unwrap()
}

/// Filter-response value from `tests/oracles/kweight_997.py` at 48 kHz.
const ORACLE_997_48K: f64 = -3.010286;

fn loudness() -> Outcome {
    let silence = measure_loudness(&AudioClip::silence(48_000, 1, 48_000).unwrap());
    ensure!(silence.integrated_loudness == f64::NEG_INFINITY, "silence gave {}", silence.integrated_loudness);
    ensure!(serde_json::to_value(silence).unwrap()["integrated_loudness"] == "-inf", "sentinel serialization");

    let sr = 48_000u32;
    let sine: Vec<f64> = (0..sr as usize * 5).map(|i| (2.0 * std::f64::consts::PI * 997.0 * i as f64 / sr as f64).sin()).collect();
    let l997 = measure_loudness(&AudioClip::mono(sine, sr).unwrap()).integrated_loudness;
    ensure!((l997 - ORACLE_997_48K).abs() <= 0.1 && (l997 + 3.01).abs() <= 0.1, "997 Hz measured {l997}");

    let mut r = rng(3);
    let mut worst_target: f64 = 0.0;
    let mut worst_linear: f64 = 0.0;
    for _ in 0..50 {
        let (frames, amp) = (r.random_range(8_000..48_000), r.random_range(0.01..0.9));
        let clip = noise(&mut r, frames, amp, 16_000);
        let target = r.random_range(-45.0..-5.0);
        let (staged, _) = apply_gain_to_target(&clip, target).map_err(|e| e.to_string())?;
        worst_target = worst_target.max((measure_loudness(&staged).integrated_loudness - target).abs());
        let g = r.random_range(-20.0..6.0);
        let base = measure_loudness(&clip).integrated_loudness;
        let moved = measure_loudness(&clip.scaled(10f64.powf(g / 20.0))).integrated_loudness;
        worst_linear = worst_linear.max((moved - base - g).abs());
    }
    ensure!(worst_target <= 0.1, "gain-to-target error {worst_target} LU");
    ensure!(worst_linear <= 0.05, "gain linearity error {worst_linear} dB");
    Ok(format!(
        "997 Hz: {l997:.4} LUFS (oracle {ORACLE_997_48K}); target err {worst_target:.2e} LU; linearity err {worst_linear:.2e} dB"
    ))
}

fn example_plan(index: usize) -> Plan {
    parse_plan_response(&PromptTemplate::standard().in_context_examples[index].assistant, 10.0).unwrap()
}

/// SHA-256 of the PCM16 WAV of example 3 rendered by the stub agent with
/// `render_seeds(0, _)` at the default mix settings.
const EXAMPLE_3_GOLDEN: &str = "3d2a6a2864da6121d566b3e9cd28eb9298eebbfd6446b74d8c1060c87251716d";

fn mixing_determinism() -> Outcome {
    let plan = example_plan(2);
    let seeds = render_seeds(0, plan.steps.len());
    let cfg = MixConfig::default();
    let mut hashes = Vec::new();
    for workers in [1, 1, 4] {
        let (clip, _) = render_plan(&plan, &StubAgent, &seeds, &cfg, GenerationOptions { workers, cache: None })
            .map_err(|e| e.to_string())?;
        hashes.push(hex(&Sha256::digest(encode_wav(&clip, WavFormat::Pcm16).unwrap())));
    }
    ensure!(hashes.iter().all(|h| *h == hashes[0]), "renders differ: {hashes:?}");
    ensure!(hashes[0] == EXAMPLE_3_GOLDEN, "golden hash mismatch: {}", hashes[0]);

    let sr = 16_000;
    let loud = |f: f64| {
        AudioClip::mono((0..sr * 6).map(|i| 0.9 * (2.0 * std::f64::consts::PI * f * i as f64 / sr as f64).sin()).collect(), sr as u32)
            .unwrap()
    };
    let plan = Plan::new(vec![PlanStep::new("a", 0.0, 6.0), PlanStep::new("b", 4.0, 10.0)], 10.0);
    let clips = vec![
        ScheduledClip { clip: loud(440.0), start_time: 0.0, target_loudness: None },
        ScheduledClip { clip: loud(440.0), start_time: 4.0, target_loudness: None },
    ];
    let cfg = MixConfig { limiter: Limiter::Normalize, ..MixConfig::default() };
    let (mix, report) = render(&plan, &clips, &cfg).map_err(|e| e.to_string())?;
    let ceiling = 10f64.powf(-1.0 / 20.0);
    ensure!(report.peak_before_limiter_db > -1.0, "fixture is not adversarial");
    ensure!(mix.peak() <= ceiling, "peak {} exceeds -1 dBFS", mix.peak());
    Ok(format!("golden {}…; adversarial peak {:.4} dBFS", &hashes[0][..12], 20.0 * mix.peak().log10()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Power of `x` at `freq` via the Goertzel recurrence, per sample.
fn goertzel(x: &[f64], freq: f64, sr: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / sr;
    let coeff = 2.0 * w.cos();
    let (mut s1, mut s2) = (0.0, 0.0);
    for &v in x {
        let s = v + coeff * s1 - s2;
        s2 = s1;
        s1 = s;
    }
    (s1 * s1 + s2 * s2 - coeff * s1 * s2) / (x.len() as f64).powi(2)
}

fn event_placement() -> Outcome {
    let sr = 16_000.0;
    let block = 800; // 50 ms
    let guard = 0.03;
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for index in 0..4 {
        let plan = example_plan(index);
        let seeds = render_seeds(0, plan.steps.len());
        let (mix, _) = render_plan(&plan, &StubAgent, &seeds, &MixConfig::default(), GenerationOptions::default())
            .map_err(|e| e.to_string())?;
        let x = mix.channel(0);
        for (i, step) in plan.steps.iter().enumerate() {
            let f = StubAgent::tone_frequency(&step.description);
            let (mut inside, mut outside) = (Vec::new(), Vec::new());
            for b in 0..x.len() / block {
                let (t0, t1) = (b as f64 * block as f64 / sr, (b + 1) as f64 * block as f64 / sr);
                let p = goertzel(&x[b * block..(b + 1) * block], f, sr);
                if t0 >= step.start_time + guard && t1 <= step.end_time - guard {
                    inside.push(p);
                } else if t1 <= step.start_time - guard || t0 >= step.end_time + guard {
                    outside.push(p);
                }
            }
            if outside.is_empty() {
                continue; // spans the whole timeline
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let ratio = 10.0 * (mean(&inside) / mean(&outside)).log10();
            ensure!(ratio >= 20.0, "example {} step {}: {ratio:.1} dB", index + 1, i + 1);
            worst = worst.min(ratio);
            checked += 1;
        }
    }
    Ok(format!("{checked} bounded steps, worst in/out ratio {worst:.1} dB"))
}

// ---------------------------------------------------------------- tokens

fn token_codec() -> Outcome {
    ensure!(tokens_for_duration(10.0, 50.0) == 500, "10 s at 50 Hz");
    let mut r = rng(5);
    let (k, dim) = (500, 16);
    let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let cb = Codebook::from_rows(&rows).map_err(|e| e.to_string())?;
    let frames: Vec<Vec<f64>> = (0..10_000).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let tokens = quantize(&FrameSequence::new(&frames, 50.0).unwrap(), &cb).map_err(|e| e.to_string())?;
    for (n, (f, &got)) in frames.iter().zip(&tokens.indices).enumerate() {
        let d = |c: &Vec<f64>| c.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut best = 0;
        for j in 1..k {
            if d(&rows[j]) < d(&rows[best]) {
                best = j;
            }
        }
        ensure!(best == got, "frame {n}: {got} vs oracle {best}");
    }
    let idem = dequantize(&tokens, &cb).unwrap();
    ensure!(dequantize(&quantize(&idem, &cb).unwrap(), &cb).unwrap() == idem, "lattice idempotence");

    for case in 0..1000 {
        let s: Vec<usize> = (0..r.random_range(0..64)).map(|_| r.random_range(0..k)).collect();
        let text = encode_token_string(&s);
        ensure!(decode_token_string(&text, k).map_err(|e| e.to_string())? == s, "case {case} round trip");
    }
    ensure!(decode_token_string("<AUD_500>", k).is_err(), "out-of-range token accepted");

    let means = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0], [5.0, 20.0]];
    let radius = 1.0;
    let mut pts = Vec::new();
    for m in &means {
        for _ in 0..200 {
            let (a, rr) = (r.random_range(0.0..std::f64::consts::TAU), radius * r.random::<f64>().sqrt());
            pts.push(vec![m[0] + rr * a.cos(), m[1] + rr * a.sin()]);
        }
    }
    let fit = fit_codebook(&FrameSequence::new(&pts, 50.0).unwrap(), means.len(), 50, 9).map_err(|e| e.to_string())?;
    for m in &means {
        let (i, d2) = fit.codebook.nearest(m);
        ensure!(d2.sqrt() <= radius, "mean {m:?}: nearest centroid {i} at {:.3}", d2.sqrt());
    }
    Ok("500 tokens / 10 s; 10000 frames match brute force; 1000 strings bijective; blob means recovered".into())
}

fn nll_objective() -> Outcome {
    let v = 504;
    let uniform = vec![vec![0.7; v]; 3];
    let loss = nll_loss(&uniform, &[1, 200, 503]).map_err(|e| e.to_string())?;
    ensure!((loss - 3.0 * (v as f64).ln()).abs() <= 1e-9, "uniform loss {loss}");

    let mut r = rng(8);
    let mut worst_oracle: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    for _ in 0..200 {
        let (t, vv) = (r.random_range(1..6), r.random_range(2..12));
        let logits: Vec<Vec<f64>> = (0..t).map(|_| (0..vv).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let targets: Vec<usize> = (0..t).map(|_| r.random_range(0..vv)).collect();
        let naive: f64 = logits
            .iter()
            .zip(&targets)
            .map(|(row, &y)| -(row[y].exp() / row.iter().map(|x| x.exp()).sum::<f64>()).ln())
            .sum();
        let got = nll_loss(&logits, &targets).unwrap();
        worst_oracle = worst_oracle.max((got - naive).abs());
        let c = r.random_range(-100.0..100.0);
        let shifted: Vec<Vec<f64>> = logits.iter().map(|row| row.iter().map(|x| x + c).collect()).collect();
        worst_shift = worst_shift.max((nll_loss(&shifted, &targets).unwrap() - got).abs());
    }
    ensure!(worst_oracle <= 1e-9, "oracle error {worst_oracle}");
    ensure!(worst_shift <= 1e-9, "shift error {worst_shift}");
    Ok(format!("uniform exact to {:.1e}; oracle err {worst_oracle:.1e}; shift err {worst_shift:.1e}", (loss - 3.0 * (v as f64).ln()).abs()))
}

// ---------------------------------------------------------------- conditioning

fn matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap()
}

#[allow(clippy::needless_range_loop)]
fn loop_attention(z: &Matrix, c: &Matrix, wq: &Matrix, wk: &Matrix, wv: &Matrix, d: f64) -> Vec<Vec<f64>> {
    let proj = |m: &Matrix, w: &Matrix, i: usize, j: usize| (0..m.cols()).map(|t| m.get(i, t) * w.get(t, j)).sum::<f64>();
    let mut out = vec![vec![0.0; wv.cols()]; z.rows()];
    for i in 0..z.rows() {
        let q: Vec<f64> = (0..wq.cols()).map(|j| proj(z, wq, i, j)).collect();
        let e: Vec<f64> = (0..c.rows())
            .map(|n| ((0..wk.cols()).map(|j| q[j] * proj(c, wk, n, j)).sum::<f64>() / d.sqrt()).exp())
            .collect();
        let total: f64 = e.iter().sum();
        for (n, en) in e.iter().enumerate() {
            for (j, o) in out[i].iter_mut().enumerate() {
                *o += en / total * proj(c, wv, n, j);
            }
        }
    }
    out
}

fn conditioning_equations() -> Outcome {
    let mut r = rng(21);
    let (mut w_oracle, mut w_affine, mut w_dual, mut w_noise): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..200 {
        let (nz, dz, nt, nv, dc, dk, dv) = (r.random_range(1..5), r.random_range(1..5), r.random_range(1..6), r.random_range(1..6), r.random_range(1..5), r.random_range(1..5), r.random_range(1..5));
        let z = matrix(&mut r, nz, dz);
        let (ct, cv) = (matrix(&mut r, nt, dc), matrix(&mut r, nv, dc));
        let p = AttentionParams::new(matrix(&mut r, dz, dk), matrix(&mut r, dc, dk), matrix(&mut r, dc, dv), matrix(&mut r, dc, dk), matrix(&mut r, dc, dv));
        let text = cross_attention(&z, &ct, &p.w_q, &p.w_k_txt, &p.w_v_txt, p.d).map_err(|e| e.to_string())?;
        let oracle = Matrix::from_rows(&loop_attention(&z, &ct, &p.w_q, &p.w_k_txt, &p.w_v_txt, p.d)).unwrap();
        w_oracle = w_oracle.max(text.max_abs_diff(&oracle));

        let g = |l: f64| guided_attention(&z, &ct, &cv, &p, &GuidanceConfig { lambda: l }).unwrap();
        ensure!(g(0.0) == text, "λ=0 differs from text-only");
        w_dual = w_dual.max(g(1.0).max_abs_diff(&dual_cross_attention(&z, &ct, &cv, &p).unwrap()));
        let (g0, g1) = (g(0.0), g(1.0));
        for l in [0.5, 0.25, 2.0] {
            w_affine = w_affine.max(g(l).max_abs_diff(&g0.zip_with(&g1, |a, b| a + l * (b - a)).unwrap()));
        }

        let a = z.as_slice();
        let b: Vec<f64> = a.iter().map(|x| x * 0.3 + 0.2).collect();
        let oracle: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        w_noise = w_noise.max((diffusion_noise_loss(a, &b).unwrap() - oracle).abs());
        w_noise = w_noise.max((diffusion_noise_loss_mean(a, &b).unwrap() - oracle / a.len() as f64).abs());
    }
    ensure!(w_oracle <= 1e-9, "loop oracle error {w_oracle}");
    ensure!(w_dual <= 1e-12, "λ=1 vs dual error {w_dual}");
    ensure!(w_affine <= 1e-12, "affinity error {w_affine}");
    ensure!(w_noise <= 1e-12, "noise loss error {w_noise}");
    Ok(format!("oracle {w_oracle:.1e}, dual {w_dual:.1e}, affine {w_affine:.1e}, noise {w_noise:.1e}"))
}

// ---------------------------------------------------------------- metrics

fn bursts(r: &mut ChaCha8Rng, times: &[f64], duration: f64, sr: u32) -> AudioClip {
    let mut x = vec![0.0; (duration * sr as f64) as usize];
    for &t in times {
        let s = (t * sr as f64) as usize;
        for v in &mut x[s..s + sr as usize / 10] {
            *v = r.random_range(-0.5..0.5);
        }
    }
    AudioClip::mono(x, sr).unwrap()
}

fn onset_metrics() -> Outcome {
    let reference = [0.5, 1.7, 3.2];
    ensure!(onset_accuracy(&reference, &reference, 0.05).unwrap() == 1.0, "perfect accuracy");
    let scored: Vec<(f64, f64)> = reference.iter().zip([0.2, 0.9, 0.5]).map(|(&t, c)| (t, c)).collect();
    ensure!(onset_ap(&scored, &reference, 0.05).unwrap() == 1.0, "perfect AP");

    // Confidence order: hit, miss, hit. PR points (P,R) = (1, 1/2), (1/2, 1/2), (2/3, 1);
    // interpolated area = 1·½ + ⅔·½ = 5/6.
    let ap = onset_ap(&[(1.0, 0.9), (5.0, 0.8), (2.0, 0.7)], &[1.0, 2.0], 0.1).unwrap();
    ensure!((ap - 5.0 / 6.0).abs() <= 1e-12, "hand-computed AP {ap}");
    let acc = onset_accuracy(&[1.00, 2.50], &[1.02, 3.00], 0.1).unwrap();
    ensure!((acc - 0.5).abs() <= 1e-12, "hand-computed accuracy {acc}");

    let mut r = rng(13);
    let clip = bursts(&mut r, &[1.0, 3.0], 4.0, 16_000);
    let found = detect_onsets(&clip, &OnsetConfig::default()).map_err(|e| e.to_string())?;
    ensure!(found.len() == 2, "detected {found:?}");
    for (f, t) in found.iter().zip([1.0, 3.0]) {
        ensure!((f - t).abs() <= 0.03, "onset {f} vs {t}");
    }

    for case in 0..200 {
        let sorted = |r: &mut ChaCha8Rng, n: usize| {
            let mut v: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let (np, nr) = (r.random_range(0..12), r.random_range(0..12));
        let (pred, refs) = (sorted(&mut r, np), sorted(&mut r, nr));
        let small = r.random_range(0.001..0.5);
        let large = small + r.random_range(0.0..0.5);
        let (a, b) = (onset_accuracy(&pred, &refs, small).unwrap(), onset_accuracy(&pred, &refs, large).unwrap());
        ensure!(a <= b, "case {case}: shrinking tolerance raised accuracy {b} -> {a}");
    }
    Ok(format!("perfect 1.0/1.0; AP 5/6; bursts at {:.3}, {:.3} s; monotone over 200 cases", found[0], found[1]))
}

// ---------------------------------------------------------------- sessions

const TURN0: &str = "A crowd of people playing basketball game.";
const TURN1: &str = "change it to people playing table tennis";

fn end_to_end_conversation() -> Outcome {
    let fixture = format!("{FIXTURES}/planner_standard.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let planner = Planner::new(Box::new(ScriptedBackend::from_fixture_file(Path::new(&fixture)).map_err(|e| e.to_string())?));
    let engine = Engine::new(SessionStore::open(&store).unwrap(), planner, Box::new(StubAgent));
    engine.create_session(SessionConfig::default(), Some("e2e")).map_err(|e| e.to_string())?;
    let mut steps = Vec::new();
    for msg in [TURN0, TURN1] {
        let turn = engine.take_turn("e2e", msg, TurnOptions::default()).map_err(|e| e.to_string())?;
        ensure!(turn.status() == TurnStatus::Ok, "turn status {:?}", turn.status());
        let plan = turn.plan.as_ref().unwrap();
        ensure!(validate_plan(plan).valid, "invalid plan stored");
        steps.push(plan.steps.len());
        let clip = read_wav_file(turn.audio_path.as_ref().unwrap()).map_err(|e| e.to_string())?;
        ensure!(clip.frames() == 160_000, "mix has {} frames", clip.frames());
    }
    ensure!(steps == [3, 2], "step counts {steps:?}");
    let reloaded = SessionStore::open(&store).unwrap().load("e2e").map_err(|e| e.to_string())?;
    ensure!(reloaded.turns.len() == 2 && reloaded.turns[1].plan.as_ref().unwrap().steps.len() == 2, "reload");
    ensure!(engine.rerender_turn("e2e", 1).unwrap() == std::fs::read(reloaded.turns[1].audio_path.as_ref().unwrap()).unwrap(), "re-render");

    // Crash safety: kill the chat process after turn 0, resume in a new one.
    let chat = |input: &str| {
        let mut child = Command::new(env!("CARGO_BIN_EXE_audio-composer"))
            .args(["chat", "--session", "crash", "--store"])
            .arg(&store)
            .args(["--fixture", &fixture, "--json"])
            .env_remove("AUDIO_COMPOSER_CONFIG")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut stdin = child.stdin.take().unwrap();
        writeln!(stdin, "{input}").unwrap();
        let mut out = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        out.read_line(&mut line).unwrap(); // session header
        line.clear();
        out.read_line(&mut line).unwrap(); // the turn
        child.kill().unwrap();
        child.wait().unwrap();
        line
    };
    let first: serde_json::Value = serde_json::from_str(&chat(TURN0)).map_err(|e| format!("turn 0 output: {e}"))?;
    ensure!(first["status"] == "ok", "turn 0: {first}");
    let before = SessionStore::open(&store).unwrap().load("crash").map_err(|e| e.to_string())?;
    ensure!(before.turns.len() == 1, "turn 0 lost after kill");
    // A half-written turn left behind by a crash mid-commit.
    let partial = store.join("crash/turns/.tmp-1-deadbeef");
    std::fs::create_dir_all(&partial).unwrap();
    std::fs::write(partial.join("turn.json"), "{trunc").unwrap();
    let second: serde_json::Value = serde_json::from_str(&chat(TURN1)).map_err(|e| format!("turn 1 output: {e}"))?;
    ensure!(second["index"] == 1 && second["plan"]["steps"].as_array().map(Vec::len) == Some(2), "turn 1: {second}");
    let after = SessionStore::open(&store).unwrap().load("crash").map_err(|e| e.to_string())?;
    ensure!(after.turns.len() == 2 && after.turns[0] == before.turns[0], "turn 0 changed across restart");
    Ok("3 then 2 steps, 160000-frame mixes, reload + re-render exact, turn 0 survives kill".into())
}

// ---------------------------------------------------------------- runner

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("plan protocol fidelity", 1, plan_protocol_fidelity),
        ("constraint enforcement", 10, constraint_enforcement),
        ("loudness", 30, loudness),
        ("mixing determinism and safety", 30, mixing_determinism),
        ("event placement", 30, event_placement),
        ("token codec", 60, token_codec),
        ("token NLL objective", 5, nll_objective),
        ("attention conditioning and noise loss", 5, conditioning_equations),
        ("onset metrics", 30, onset_metrics),
        ("end-to-end conversation", 60, end_to_end_conversation),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > Duration::from_secs(limit) => Err(format!("took {elapsed:.2?}, limit {limit} s; {d}")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name} [{:.2} s / {limit} s]: {detail}", elapsed.as_secs_f64());
        failed += usize::from(outcome.is_err());
    }
    let _ = std::io::stdout().flush();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
