//! A two-turn conversation persisted to a session store.
//!
//!     cargo run --example session_chat [store-dir]

use std::path::PathBuf;

use audio_composer::agent::StubAgent;
use audio_composer::planner::{Planner, ScriptedBackend};
use audio_composer::session::{Engine, SessionConfig, SessionStore, TurnOptions};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/planner_standard.json");

fn main() {
    let store = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("ac-session-example"));
    let planner = Planner::new(Box::new(ScriptedBackend::from_fixture_file(FIXTURE.as_ref()).unwrap()));
    let engine = Engine::new(SessionStore::open(&store).unwrap(), planner, Box::new(StubAgent));
    let session = engine.create_session(SessionConfig::default(), None).unwrap();
    println!("session {} in {}", session.id(), store.display());
    for msg in ["A crowd of people playing basketball game.", "change it to people playing table tennis"] {
        let turn = engine.take_turn(session.id(), msg, TurnOptions::default()).unwrap();
        let plan = turn.plan.as_ref().unwrap();
        println!("turn {} ({:?}): {} steps -> {}", turn.index(), turn.status(), plan.steps.len(), turn.audio_path.as_ref().unwrap().display());
        for s in &plan.steps {
            println!("  {:>5.2}-{:<5.2} {}", s.start_time, s.end_time, s.description);
        }
    }
}
