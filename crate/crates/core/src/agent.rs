//! Synthesis agents turn one atomic caption into audio.
//!
//! [`StubAgent`] is a deterministic procedural synthesizer for tests and
//! offline runs. [`RemoteAgent`] talks to a text-to-audio service over HTTP:
//!
//! ```text
//! POST <endpoint>
//! Content-Type: application/json
//! {"description": "Rain pouring outside.", "duration_s": 10.0, "seed": 42}
//!
//! 200 OK
//! <RIFF/WAVE bytes, PCM16 or float32, any rate>
//! ```
//!
//! The response is resampled to the requested rate and must be within one
//! frame of the requested duration.

use std::f64::consts::PI;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{frames_for, AudioClip, DEFAULT_SAMPLE_RATE};
use crate::resample::resample;
use crate::util::stable_hash64;
use crate::wav::decode_wav;

/// Longest clip a single generation call may request, seconds.
pub const MAX_GENERATION_SECS: f64 = 30.0;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("generation service request failed: {0}")]
    Http(String),
    #[error("undecodable audio payload: {0}")]
    Decode(String),
    #[error("service returned {got} frames, expected {expected} (+/- 1)")]
    WrongDuration { got: usize, expected: usize },
    #[error("{0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub description: String,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl GenerationRequest {
    pub fn new(description: impl Into<String>, duration: f64, seed: u64) -> Self {
        GenerationRequest { description: description.into(), duration, seed, sample_rate: DEFAULT_SAMPLE_RATE }
    }

    pub fn with_sample_rate(mut self, sample_rate: u32) -> Self {
        self.sample_rate = sample_rate;
        self
    }

    pub fn frames(&self) -> usize {
        frames_for(self.duration, self.sample_rate)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(AgentError::InvalidRequest(format!("duration must be positive, got {}", self.duration)));
        }
        if self.duration > MAX_GENERATION_SECS {
            return Err(AgentError::InvalidRequest(format!(
                "duration {} s exceeds the {MAX_GENERATION_SECS} s limit",
                self.duration
            )));
        }
        if self.sample_rate == 0 {
            return Err(AgentError::InvalidRequest("sample rate must be positive".into()));
        }
        if self.description.trim().is_empty() {
            return Err(AgentError::InvalidRequest("empty description".into()));
        }
        Ok(())
    }
}

/// Anything that renders a [`GenerationRequest`]. Implementations must return
/// exactly `request.frames()` samples per channel.
pub trait SynthesisAgent: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<AudioClip, AgentError>;

    fn name(&self) -> &str;
}

/// Procedural stand-in for a diffusion model.
///
/// Output is a sinusoid at `200 + (hash(description) mod 1800)` Hz with
/// amplitude 0.3, plus low-passed noise of at most 0.05 keyed by
/// `(description, seed)`, with 10 ms raised-cosine fades at both ends.
#[derive(Debug, Clone, Default)]
pub struct StubAgent;

pub const STUB_TONE_AMPLITUDE: f64 = 0.3;
pub const STUB_NOISE_AMPLITUDE: f64 = 0.05;
const STUB_FADE_SECS: f64 = 0.01;
const STUB_NOISE_SMOOTHING: usize = 8;

impl StubAgent {
    /// The tone frequency used for `description`.
    pub fn tone_frequency(description: &str) -> f64 {
        200.0 + (stable_hash64(&[description.as_bytes()]) % 1800) as f64
    }

    pub fn render(request: &GenerationRequest) -> AudioClip {
        let n = request.frames();
        let sr = request.sample_rate as f64;
        let freq = Self::tone_frequency(&request.description);
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(&[
            request.description.as_bytes(),
            &request.seed.to_le_bytes(),
        ]));
        let white: Vec<f64> = (0..n + STUB_NOISE_SMOOTHING).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let fade = frames_for(STUB_FADE_SECS, request.sample_rate).min(n / 2);

        let samples = (0..n)
            .map(|i| {
                let noise = white[i..i + STUB_NOISE_SMOOTHING].iter().sum::<f64>() / STUB_NOISE_SMOOTHING as f64;
                let tone = (2.0 * PI * freq * i as f64 / sr).sin();
                let mut x = STUB_TONE_AMPLITUDE * tone + STUB_NOISE_AMPLITUDE * noise;
                let edge = i.min(n - 1 - i);
                if edge < fade {
                    x *= 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos();
                }
                x
            })
            .collect();
        AudioClip::mono(samples, request.sample_rate).expect("stub samples are finite")
    }
}

impl SynthesisAgent for StubAgent {
    fn generate(&self, request: &GenerationRequest) -> Result<AudioClip, AgentError> {
        request.validate()?;
        Ok(Self::render(request))
    }

    fn name(&self) -> &str {
        "stub"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    /// Average multichannel responses down to mono.
    pub downmix: bool,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig { endpoint: "http://127.0.0.1:8600/generate".into(), timeout_secs: 300.0, downmix: true }
    }
}

#[derive(Serialize)]
struct RemoteBody<'a> {
    description: &'a str,
    duration_s: f64,
    seed: u64,
}

const MAX_PAYLOAD_BYTES: u64 = 256 * 1024 * 1024;

/// Client for an HTTP text-to-audio service.
pub struct RemoteAgent {
    config: RemoteConfig,
    http: ureq::Agent,
}

impl RemoteAgent {
    pub fn new(config: RemoteConfig) -> Self {
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
            .build()
            .into();
        RemoteAgent { config, http }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

/// Turns a service response into a clip honoring the request's length and
/// rate.
pub fn conform_payload(bytes: &[u8], request: &GenerationRequest, downmix: bool) -> Result<AudioClip, AgentError> {
    let mut clip = decode_wav(bytes).map_err(|e| AgentError::Decode(e.to_string()))?;
    if downmix {
        clip = clip.to_mono();
    }
    let clip = resample(&clip, request.sample_rate);
    let expected = request.frames();
    if clip.frames().abs_diff(expected) > 1 {
        return Err(AgentError::WrongDuration { got: clip.frames(), expected });
    }
    Ok(clip.with_length(expected))
}

impl SynthesisAgent for RemoteAgent {
    fn generate(&self, request: &GenerationRequest) -> Result<AudioClip, AgentError> {
        request.validate()?;
        let body = RemoteBody { description: &request.description, duration_s: request.duration, seed: request.seed };
        let mut response = self
            .http
            .post(&self.config.endpoint)
            .send_json(&body)
            .map_err(|e| AgentError::Http(e.to_string()))?;
        let bytes = response
            .body_mut()
            .with_config()
            .limit(MAX_PAYLOAD_BYTES)
            .read_to_vec()
            .map_err(|e| AgentError::Http(e.to_string()))?;
        conform_payload(&bytes, request, self.config.downmix)
    }

    fn name(&self) -> &str {
        "remote"
    }
}

/// Agent selection for configuration files and the session service.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentConfig {
    #[default]
    Stub,
    Remote(RemoteConfig),
}

impl AgentConfig {
    pub fn build(&self) -> Box<dyn SynthesisAgent> {
        match self {
            AgentConfig::Stub => Box::new(StubAgent),
            AgentConfig::Remote(config) => Box::new(RemoteAgent::new(config.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wav::{encode_wav, WavFormat};
    use proptest::prelude::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn length_contract() {
        let agent = StubAgent;
        assert_eq!(agent.generate(&GenerationRequest::new("a", 2.0, 0)).unwrap().frames(), 32_000);
        assert_eq!(agent.generate(&GenerationRequest::new("a", 10.0, 0)).unwrap().frames(), 160_000);
        assert!(matches!(agent.generate(&GenerationRequest::new("a", 0.0, 0)), Err(AgentError::InvalidRequest(_))));
        assert!(matches!(agent.generate(&GenerationRequest::new("a", 31.0, 0)), Err(AgentError::InvalidRequest(_))));
        assert!(matches!(agent.generate(&GenerationRequest::new(" ", 1.0, 0)), Err(AgentError::InvalidRequest(_))));
    }

    #[test]
    fn stub_is_bounded_and_seed_sensitive() {
        let a = StubAgent::render(&GenerationRequest::new("Rain pouring outside.", 1.0, 1));
        let b = StubAgent::render(&GenerationRequest::new("Rain pouring outside.", 1.0, 2));
        assert_ne!(a, b);
        assert!(a.peak() <= 0.35);
        assert_eq!(a.channel(0)[0], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn stub_is_referentially_transparent(desc in "[a-zA-Z ]{1,40}", seed in any::<u64>(), centis in 1u32..300) {
            prop_assume!(!desc.trim().is_empty());
            let req = GenerationRequest::new(desc, centis as f64 / 100.0, seed);
            let a = StubAgent.generate(&req).unwrap();
            let b = StubAgent.generate(&req).unwrap();
            prop_assert_eq!(a.frames(), req.frames());
            prop_assert!(a.channel(0).iter().zip(b.channel(0)).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    /// Serves one canned HTTP response and returns the request body it got.
    fn serve_once(body: Vec<u8>, status: &'static str) -> (String, std::thread::JoinHandle<Vec<u8>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/generate", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    let head = String::from_utf8_lossy(&buf[..pos]).to_ascii_lowercase();
                    let len: usize = head
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:"))
                        .map(|v| v.trim().parse().unwrap())
                        .unwrap_or(0);
                    while buf.len() < pos + 4 + len {
                        let n = stream.read(&mut chunk).unwrap();
                        buf.extend_from_slice(&chunk[..n]);
                    }
                    let request_body = buf[pos + 4..pos + 4 + len].to_vec();
                    let header = format!(
                        "HTTP/1.1 {status}\r\nContent-Type: audio/wav\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        body.len()
                    );
                    stream.write_all(header.as_bytes()).unwrap();
                    stream.write_all(&body).unwrap();
                    return request_body;
                }
            }
        });
        (url, handle)
    }

    fn remote(url: String) -> RemoteAgent {
        RemoteAgent::new(RemoteConfig { endpoint: url, timeout_secs: 10.0, downmix: true })
    }

    #[test]
    fn remote_pass_through() {
        let clip = AudioClip::mono(vec![0.125; 16_000], 16_000).unwrap();
        let (url, server) = serve_once(encode_wav(&clip, WavFormat::Pcm16).unwrap(), "200 OK");
        let out = remote(url).generate(&GenerationRequest::new("dog barking", 1.0, 9)).unwrap();
        assert_eq!(out, clip);
        let sent: serde_json::Value = serde_json::from_slice(&server.join().unwrap()).unwrap();
        assert_eq!(sent, serde_json::json!({"description": "dog barking", "duration_s": 1.0, "seed": 9}));
    }

    #[test]
    fn remote_resamples_to_request_rate() {
        let tone: Vec<f64> = (0..8000).map(|i| 0.5 * (2.0 * PI * 300.0 * i as f64 / 8000.0).sin()).collect();
        let clip = AudioClip::mono(tone, 8000).unwrap();
        let (url, server) = serve_once(encode_wav(&clip, WavFormat::Float32).unwrap(), "200 OK");
        let out = remote(url).generate(&GenerationRequest::new("hum", 1.0, 0)).unwrap();
        server.join().unwrap();
        assert_eq!(out.sample_rate(), 16_000);
        assert_eq!(out.frames(), 16_000);
        let err = (400..15_600)
            .map(|i| (out.channel(0)[i] - 0.5 * (2.0 * PI * 300.0 * i as f64 / 16_000.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn remote_failures() {
        let clip = AudioClip::mono(vec![0.1; 16_000], 16_000).unwrap();
        let bytes = encode_wav(&clip, WavFormat::Pcm16).unwrap();
        let (url, server) = serve_once(bytes[..bytes.len() / 3].to_vec(), "200 OK");
        assert!(matches!(remote(url).generate(&GenerationRequest::new("x", 1.0, 0)), Err(AgentError::Decode(_))));
        server.join().unwrap();

        let (url, server) = serve_once(bytes.clone(), "200 OK");
        assert!(matches!(
            remote(url).generate(&GenerationRequest::new("x", 2.0, 0)),
            Err(AgentError::WrongDuration { got: 16_000, expected: 32_000 })
        ));
        server.join().unwrap();

        let (url, server) = serve_once(b"boom".to_vec(), "500 Internal Server Error");
        assert!(matches!(remote(url).generate(&GenerationRequest::new("x", 1.0, 0)), Err(AgentError::Http(_))));
        server.join().unwrap();
    }
}
