use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{
    Session, SessionConfig, SessionError, SessionSettings, SessionStore, Turn, TurnArtifacts, TurnRecord, TurnStatus,
};
use crate::agent::SynthesisAgent;
use crate::audio::AudioClip;
use crate::compose::{override_seed, render_plan, step_seed, ClipCache, ComposeError, GenerationOptions};
use crate::planner::{unix_now, Planner, PlannerError, PromptTemplate};
use crate::wav::encode_wav;

/// Per-request turn settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TurnOptions {
    /// Replaces the per-(session, turn, step) seeds with seeds derived from
    /// this value and each step's description.
    pub seed: Option<u64>,
}

/// Runs turns against a store. Turns of one session are serialized; turns
/// of different sessions may run concurrently.
pub struct Engine {
    store: SessionStore,
    planner: Planner,
    planner_label: String,
    agent: Box<dyn SynthesisAgent>,
    workers: usize,
    cache: ClipCache,
    leases: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Engine {
    pub fn new(store: SessionStore, planner: Planner, agent: Box<dyn SynthesisAgent>) -> Self {
        Engine {
            store,
            planner,
            planner_label: "custom".into(),
            agent,
            workers: 1,
            cache: ClipCache::default(),
            leases: Mutex::new(HashMap::new()),
        }
    }

    /// Parallel generation calls per turn.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    /// Recorded in new sessions to identify the planner backend.
    pub fn with_planner_label(mut self, label: impl Into<String>) -> Self {
        self.planner_label = label.into();
        self
    }

    pub fn with_cache(mut self, cache: ClipCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn cache(&self) -> &ClipCache {
        &self.cache
    }

    fn lease(&self, id: &str) -> Arc<Mutex<()>> {
        self.leases.lock().expect("lease table").entry(id.to_string()).or_default().clone()
    }

    /// Creates an empty session; `id` defaults to a fresh UUID.
    pub fn create_session(&self, config: SessionConfig, id: Option<&str>) -> Result<Session, SessionError> {
        config.validate()?;
        let settings = SessionSettings {
            id: id.map_or_else(|| uuid::Uuid::new_v4().simple().to_string(), str::to_string),
            created_at: unix_now(),
            planner: self.planner_label.clone(),
            config,
        };
        self.store.create(&settings)
    }

    pub fn get_session(&self, id: &str) -> Result<Session, SessionError> {
        self.store.load(id)
    }

    /// Plans from the full conversation, renders, and commits one turn.
    ///
    /// A rejected plan or a failed generation is recorded as a turn with the
    /// matching status. Planner transport errors are returned without
    /// recording anything.
    pub fn take_turn(&self, id: &str, message: &str, options: TurnOptions) -> Result<Turn, SessionError> {
        if message.trim().is_empty() {
            return Err(SessionError::InvalidRequest("message must not be empty".into()));
        }
        let lease = self.lease(id);
        let _guard = lease.lock().unwrap_or_else(|p| p.into_inner());

        let session = self.store.load(id)?;
        let config = &session.settings.config;
        let index = session.turns.len();
        let template = PromptTemplate::for_variant(config.template_variant).with_total_duration(config.total_duration);
        let mut record = TurnRecord {
            index,
            user_message: message.to_string(),
            status: TurnStatus::Ok,
            attempts: 0,
            validation: None,
            seeds: Vec::new(),
            seed_override: options.seed,
            error: None,
            created_at: unix_now(),
        };

        let outcome = match self.planner.plan_from_request(&template, &session.history(), message, config.total_duration)
        {
            Ok(outcome) => outcome,
            Err(PlannerError::PlanRejected { raw_response, plan, reason }) => {
                log::info!("session {id} turn {index}: plan rejected ({reason})");
                record.status = TurnStatus::PlanRejected;
                record.attempts = 2;
                record.validation = plan.as_ref().map(crate::plan::validate_plan);
                record.error = Some(format!("plan rejected: {reason}"));
                let artifacts =
                    TurnArtifacts { record: &record, raw_response: &raw_response, plan: plan.as_ref(), mix: None };
                return self.store.commit_turn(id, &artifacts, config.wav_format);
            }
            Err(e) => return Err(e.into()),
        };
        record.attempts = outcome.attempts;
        record.validation = Some(outcome.report.clone());
        record.seeds = match options.seed {
            Some(seed) => outcome.plan.steps.iter().map(|s| override_seed(seed, &s.description)).collect(),
            None => (0..outcome.plan.steps.len()).map(|i| step_seed(id, index, i)).collect(),
        };

        let rendered = render_plan(
            &outcome.plan,
            self.agent.as_ref(),
            &record.seeds,
            &config.mix_config(),
            GenerationOptions { workers: self.workers, cache: Some(&self.cache) },
        );
        let mix = match rendered {
            Ok(mix) => Some(mix),
            Err(e) => {
                log::warn!("session {id} turn {index}: rendering failed: {e}");
                record.status = TurnStatus::AgentFailed;
                record.error = Some(match e {
                    ComposeError::Mix(m) => format!("mix: {m}"),
                    other => other.to_string(),
                });
                None
            }
        };
        let artifacts = TurnArtifacts {
            record: &record,
            raw_response: &outcome.raw_response,
            plan: Some(&outcome.plan),
            mix: mix.as_ref().map(|(clip, report)| (clip, report)),
        };
        self.store.commit_turn(id, &artifacts, config.wav_format)
    }

    /// Decoded mix of an ok turn.
    pub fn get_turn_audio(&self, id: &str, index: usize) -> Result<AudioClip, SessionError> {
        self.store.read_turn_audio(id, index)
    }

    /// Renders an ok turn again from its stored plan and seeds and returns
    /// the encoded WAV, which matches the stored file for deterministic
    /// agents.
    pub fn rerender_turn(&self, id: &str, index: usize) -> Result<Vec<u8>, SessionError> {
        let settings = self.store.load_settings(id)?;
        let turn = self.store.load_turn(id, index)?;
        if turn.status() != TurnStatus::Ok {
            return Err(SessionError::NotRendered(index));
        }
        let plan = turn.plan.ok_or(SessionError::NotRendered(index))?;
        let (clip, _) = render_plan(
            &plan,
            self.agent.as_ref(),
            &turn.record.seeds,
            &settings.config.mix_config(),
            GenerationOptions { workers: self.workers, cache: None },
        )
        .map_err(|e| SessionError::Store(format!("re-render failed: {e}")))?;
        encode_wav(&clip, settings.config.wav_format).map_err(|e| SessionError::Store(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{AgentError, GenerationRequest, StubAgent};
    use crate::planner::{build_prompt, ChatMessage, PlannerBackend, ScriptedBackend};
    use std::sync::atomic::{AtomicBool, Ordering};

    const FIRST: &str = r#"{"plan": "1. A.generate('Rain pouring outside.',start_time=0,end_time=10); 2. A.generate('A clap of thunder.',start_time=2,end_time=5)"}"#;
    const SECOND: &str = r#"{"plan": "1. A.generate('Rain pouring outside.',start_time=0,end_time=10)"}"#;
    const CROWDED: &str = r#"{"plan": "1. A.generate('a',start_time=0,end_time=10); 2. A.generate('b',start_time=0,end_time=10); 3. A.generate('c',start_time=0,end_time=10)"}"#;

    fn engine(dir: &std::path::Path, backend: ScriptedBackend) -> Engine {
        Engine::new(SessionStore::open(dir).unwrap(), Planner::new(Box::new(backend)), Box::new(StubAgent))
    }

    #[test]
    fn two_turns_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path(), ScriptedBackend::new().register("rain and thunder", FIRST).register("only rain", SECOND));
        let s = e.create_session(SessionConfig::default(), Some("abc")).unwrap();
        assert_eq!(s.turns.len(), 0);
        assert_eq!(s.total_duration(), 10.0);
        assert!(matches!(e.create_session(SessionConfig::default(), Some("abc")), Err(SessionError::AlreadyExists(_))));

        let t0 = e.take_turn("abc", "rain and thunder", TurnOptions::default()).unwrap();
        assert_eq!(t0.status(), TurnStatus::Ok);
        assert_eq!(t0.plan.as_ref().unwrap().steps.len(), 2);
        let t1 = e.take_turn("abc", "only rain", TurnOptions::default()).unwrap();
        assert_eq!(t1.plan.as_ref().unwrap().steps.len(), 1);

        let loaded = e.get_session("abc").unwrap();
        assert_eq!(loaded.turns, vec![t0.clone(), t1]);
        assert_eq!(e.get_turn_audio("abc", 1).unwrap().frames(), 160_000);
        assert!(matches!(e.get_turn_audio("abc", 2), Err(SessionError::NotFound(_))));
        assert_eq!(e.rerender_turn("abc", 0).unwrap(), std::fs::read(t0.audio_path.unwrap()).unwrap());
    }

    /// Records the prompts it sees.
    struct Recording(ScriptedBackend, Mutex<Vec<Vec<ChatMessage>>>);
    impl PlannerBackend for Recording {
        fn complete(&self, messages: &[ChatMessage]) -> Result<String, PlannerError> {
            self.1.lock().unwrap().push(messages.to_vec());
            self.0.complete(messages)
        }
    }

    #[test]
    fn history_is_supplied() {
        let dir = tempfile::tempdir().unwrap();
        let rec = Arc::new(Recording(ScriptedBackend::new().register("one", FIRST).register("two", SECOND), Mutex::new(vec![])));
        struct Shared(Arc<Recording>);
        impl PlannerBackend for Shared {
            fn complete(&self, m: &[ChatMessage]) -> Result<String, PlannerError> {
                self.0.complete(m)
            }
        }
        let e = Engine::new(SessionStore::open(dir.path()).unwrap(), Planner::new(Box::new(Shared(rec.clone()))), Box::new(StubAgent));
        e.create_session(SessionConfig::default(), Some("h")).unwrap();
        e.take_turn("h", "one", TurnOptions::default()).unwrap();
        e.take_turn("h", "two", TurnOptions::default()).unwrap();
        let prompts = rec.1.lock().unwrap();
        let history = e.get_session("h").unwrap().history();
        let expected = build_prompt(&PromptTemplate::standard(), &history[..2], "two");
        assert_eq!(prompts[1], expected);
    }

    #[test]
    fn rejected_and_failed_turns() {
        let dir = tempfile::tempdir().unwrap();
        let crowded = crate::plan::parse_plan_response(CROWDED, 10.0).unwrap();
        let correction = crate::planner::corrective_message(&crate::plan::validate_plan(&crowded));
        let e = engine(dir.path(), ScriptedBackend::new().register("crowd", CROWDED).register(&correction, CROWDED));
        e.create_session(SessionConfig::default(), Some("r")).unwrap();
        let t = e.take_turn("r", "crowd", TurnOptions::default()).unwrap();
        assert_eq!(t.status(), TurnStatus::PlanRejected);
        assert_eq!(t.plan.as_ref().unwrap().steps.len(), 3);
        assert_eq!(t.raw_planner_response, CROWDED);
        assert!(t.audio_path.is_none());
        assert!(matches!(e.get_turn_audio("r", 0), Err(SessionError::NotRendered(0))));
        assert!(matches!(e.take_turn("r", "unknown", TurnOptions::default()), Err(SessionError::Planner(PlannerError::NoResponse))));
        assert_eq!(e.get_session("r").unwrap().turns.len(), 1);

        struct Broken(AtomicBool);
        impl SynthesisAgent for Broken {
            fn generate(&self, r: &GenerationRequest) -> Result<AudioClip, AgentError> {
                if self.0.load(Ordering::SeqCst) {
                    Err(AgentError::Backend("offline".into()))
                } else {
                    StubAgent.generate(r)
                }
            }
            fn name(&self) -> &str {
                "broken"
            }
        }
        let dir2 = tempfile::tempdir().unwrap();
        let e2 = Engine::new(
            SessionStore::open(dir2.path()).unwrap(),
            Planner::new(Box::new(ScriptedBackend::new().register("ok", FIRST).register("again", FIRST))),
            Box::new(Broken(AtomicBool::new(false))),
        );
        e2.create_session(SessionConfig::default(), Some("f")).unwrap();
        let ok = e2.take_turn("f", "ok", TurnOptions::default()).unwrap();
        let e3 = Engine::new(
            SessionStore::open(dir2.path()).unwrap(),
            Planner::new(Box::new(ScriptedBackend::new().register("again", FIRST))),
            Box::new(Broken(AtomicBool::new(true))),
        );
        let failed = e3.take_turn("f", "again", TurnOptions::default()).unwrap();
        assert_eq!(failed.status(), TurnStatus::AgentFailed);
        assert!(failed.record.error.as_deref().unwrap().contains("offline"));
        let s = e3.get_session("f").unwrap();
        assert_eq!(s.turns[0], ok);
        assert_eq!(s.turns.len(), 2);
    }

    #[test]
    fn seed_override_reuses_cache() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path(), ScriptedBackend::new().register("a", FIRST).register("b", SECOND));
        e.create_session(SessionConfig::default(), Some("c")).unwrap();
        e.take_turn("c", "a", TurnOptions { seed: Some(7) }).unwrap();
        let t = e.take_turn("c", "b", TurnOptions { seed: Some(7) }).unwrap();
        assert_eq!(e.cache().hits(), 1);
        assert_eq!(t.record.seed_override, Some(7));
    }

    #[test]
    fn leftover_tmp_dirs_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine(dir.path(), ScriptedBackend::new().register("a", FIRST));
        e.create_session(SessionConfig::default(), Some("t")).unwrap();
        std::fs::create_dir_all(dir.path().join("t/turns/.tmp-0-dead")).unwrap();
        std::fs::create_dir_all(dir.path().join(".tmp-x-dead")).unwrap();
        assert_eq!(e.get_session("t").unwrap().turns.len(), 0);
        e.take_turn("t", "a", TurnOptions::default()).unwrap();
        assert_eq!(e.store().list().unwrap(), vec!["t".to_string()]);
    }
}
