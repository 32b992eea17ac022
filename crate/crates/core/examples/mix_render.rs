//! Render a plan with the offline stub agent and write the mix.
//!
//!     cargo run --example mix_render [out.wav]

use audio_composer::agent::StubAgent;
use audio_composer::compose::{render_plan, render_seeds, GenerationOptions};
use audio_composer::mixer::MixConfig;
use audio_composer::plan::parse_plan_response;
use audio_composer::wav::{write_wav_file, WavFormat};

const RESPONSE: &str = r#"{"plan": "1. A.generate('Wind blowing.',start_time=0,end_time=10,volume=-30); 2. B.generate('A bell rings.',start_time=2,end_time=4,volume=-20); 3. C.generate('Footsteps.',start_time=5,end_time=9,volume=-25)"}"#;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "mix.wav".into());
    let plan = parse_plan_response(RESPONSE, 10.0).unwrap();
    let seeds = render_seeds(0, plan.steps.len());
    let options = GenerationOptions { workers: 4, cache: None };
    let (mix, report) = render_plan(&plan, &StubAgent, &seeds, &MixConfig::default(), options).unwrap();
    write_wav_file(&out, &mix, WavFormat::Pcm16).unwrap();
    println!("wrote {out}: {} frames at {} Hz", report.frames, report.sample_rate);
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
}
