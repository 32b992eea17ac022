//! Plan → per-step generation → mix.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::agent::{AgentError, GenerationRequest, SynthesisAgent};
use crate::audio::AudioClip;
use crate::mixer::{render, MixConfig, MixError, MixReport, ScheduledClip};
use crate::plan::Plan;
use crate::util::stable_hash64;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("step {step}: {source}")]
    Agent {
        step: usize,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error("{seeds} seeds for {steps} plan steps")]
    SeedCount { seeds: usize, steps: usize },
}

/// Default seed for step `step` of turn `turn` in session `session_id`.
pub fn step_seed(session_id: &str, turn: usize, step: usize) -> u64 {
    stable_hash64(&[session_id.as_bytes(), &(turn as u64).to_le_bytes(), &(step as u64).to_le_bytes()])
}

/// Seed for a step when the caller supplies a request-level seed. Keyed by
/// description so an unchanged step keeps its seed across revisions.
pub fn override_seed(seed: u64, description: &str) -> u64 {
    stable_hash64(&[b"override", &seed.to_le_bytes(), description.as_bytes()])
}

/// Seeds for a standalone render of a `steps`-step plan from one base seed.
pub fn render_seeds(seed: u64, steps: usize) -> Vec<u64> {
    (0..steps as u64).map(|i| stable_hash64(&[b"render", &seed.to_le_bytes(), &i.to_le_bytes()])).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    description: String,
    frames: usize,
    seed: u64,
    sample_rate: u32,
}

/// Bounded FIFO cache of generated clips keyed by
/// `(description, length, seed, rate)`.
pub struct ClipCache {
    capacity: usize,
    inner: Mutex<(HashMap<CacheKey, AudioClip>, VecDeque<CacheKey>)>,
    hits: AtomicUsize,
}

impl ClipCache {
    pub fn new(capacity: usize) -> Self {
        ClipCache { capacity, inner: Mutex::new((HashMap::new(), VecDeque::new())), hits: AtomicUsize::new(0) }
    }

    fn key(request: &GenerationRequest) -> CacheKey {
        CacheKey {
            description: request.description.clone(),
            frames: request.frames(),
            seed: request.seed,
            sample_rate: request.sample_rate,
        }
    }

    pub fn get(&self, request: &GenerationRequest) -> Option<AudioClip> {
        let found = self.inner.lock().expect("cache lock").0.get(&Self::key(request)).cloned();
        if found.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        found
    }

    pub fn insert(&self, request: &GenerationRequest, clip: AudioClip) {
        if self.capacity == 0 {
            return;
        }
        let key = Self::key(request);
        let mut guard = self.inner.lock().expect("cache lock");
        let (map, order) = &mut *guard;
        if map.insert(key.clone(), clip).is_none() {
            order.push_back(key);
            while order.len() > self.capacity {
                if let Some(old) = order.pop_front() {
                    map.remove(&old);
                }
            }
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ClipCache {
    fn default() -> Self {
        ClipCache::new(256)
    }
}

/// How to run the per-step generation calls.
#[derive(Clone, Copy)]
pub struct GenerationOptions<'a> {
    /// Parallel generation calls; 0 and 1 both mean sequential.
    pub workers: usize,
    pub cache: Option<&'a ClipCache>,
}

impl Default for GenerationOptions<'_> {
    fn default() -> Self {
        GenerationOptions { workers: 1, cache: None }
    }
}

/// One request per step, at `sample_rate`.
pub fn generation_requests(plan: &Plan, seeds: &[u64], sample_rate: u32) -> Result<Vec<GenerationRequest>, ComposeError> {
    if seeds.len() != plan.steps.len() {
        return Err(ComposeError::SeedCount { seeds: seeds.len(), steps: plan.steps.len() });
    }
    Ok(plan
        .steps
        .iter()
        .zip(seeds)
        .map(|(s, &seed)| GenerationRequest::new(&s.description, s.duration(), seed).with_sample_rate(sample_rate))
        .collect())
}

fn generate_one(
    agent: &dyn SynthesisAgent,
    request: &GenerationRequest,
    cache: Option<&ClipCache>,
) -> Result<AudioClip, AgentError> {
    if let Some(clip) = cache.and_then(|c| c.get(request)) {
        return Ok(clip);
    }
    let clip = agent.generate(request)?;
    if let Some(c) = cache {
        c.insert(request, clip.clone());
    }
    Ok(clip)
}

/// Runs every request, possibly in parallel, and returns clips in request
/// order. On failure reports the lowest failing step.
pub fn generate_clips(
    agent: &dyn SynthesisAgent,
    requests: &[GenerationRequest],
    options: GenerationOptions<'_>,
) -> Result<Vec<AudioClip>, ComposeError> {
    let workers = options.workers.max(1).min(requests.len().max(1));
    let mut results: Vec<Option<Result<AudioClip, AgentError>>> = (0..requests.len()).map(|_| None).collect();
    if workers == 1 {
        for (slot, r) in results.iter_mut().zip(requests) {
            *slot = Some(generate_one(agent, r, options.cache));
        }
    } else {
        let next = AtomicUsize::new(0);
        let done: Mutex<Vec<(usize, Result<AudioClip, AgentError>)>> = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(request) = requests.get(i) else { break };
                    let out = generate_one(agent, request, options.cache);
                    done.lock().expect("results lock").push((i, out));
                });
            }
        });
        for (i, out) in done.into_inner().expect("results lock") {
            results[i] = Some(out);
        }
    }
    results
        .into_iter()
        .enumerate()
        .map(|(step, r)| r.expect("every step ran").map_err(|source| ComposeError::Agent { step, source }))
        .collect()
}

/// Generates every step and mixes the result.
pub fn render_plan(
    plan: &Plan,
    agent: &dyn SynthesisAgent,
    seeds: &[u64],
    config: &MixConfig,
    options: GenerationOptions<'_>,
) -> Result<(AudioClip, MixReport), ComposeError> {
    config.validate()?;
    let requests = generation_requests(plan, seeds, config.sample_rate)?;
    let clips = generate_clips(agent, &requests, options)?;
    let scheduled: Vec<ScheduledClip> = plan
        .steps
        .iter()
        .zip(clips)
        .map(|(s, clip)| ScheduledClip { clip, start_time: s.start_time, target_loudness: s.volume })
        .collect();
    Ok(render(plan, &scheduled, config)?)
}
