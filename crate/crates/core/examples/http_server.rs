//! Serve the session API, drive one turn through it, then shut down.
//! Pass `--forever` to keep serving.
//!
//!     cargo run --example http_server [--forever]

use std::path::Path;
use std::sync::Arc;

use audio_composer::agent::StubAgent;
use audio_composer::planner::{Planner, ScriptedBackend};
use audio_composer::session::http::{router, serve, shutdown_signal};
use audio_composer::session::{Engine, SessionStore};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/planner_standard.json");

#[tokio::main]
async fn main() {
    let store = std::env::temp_dir().join("ac-http-example");
    let planner = Planner::new(Box::new(ScriptedBackend::from_fixture_file(Path::new(FIXTURE)).unwrap()));
    let engine = Engine::new(SessionStore::open(&store).unwrap(), planner, Box::new(StubAgent));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    println!("listening on {base}");
    if std::env::args().any(|a| a == "--forever") {
        serve(listener, router(Arc::new(engine), None), shutdown_signal()).await.unwrap();
        return;
    }
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, router(Arc::new(engine), None), async {
        let _ = stopped.await;
    }));
    let client = tokio::task::spawn_blocking(move || {
        let session: serde_json::Value = ureq::post(format!("{base}/sessions")).send_json(serde_json::json!({})).unwrap().body_mut().read_json().unwrap();
        let id = session["id"].as_str().unwrap().to_string();
        let turn: serde_json::Value = ureq::post(format!("{base}/sessions/{id}/turns"))
            .send_json(serde_json::json!({"message": "A crowd of people playing basketball game."}))
            .unwrap()
            .body_mut()
            .read_json()
            .unwrap();
        println!("turn {}: {} -> {}", turn["index"], turn["status"], turn["audio_url"]);
        let wav = ureq::get(format!("{base}{}", turn["audio_url"].as_str().unwrap())).call().unwrap().body_mut().read_to_vec().unwrap();
        println!("downloaded {} bytes of audio", wav.len());
    });
    client.await.unwrap();
    let _ = stop.send(());
    server.await.unwrap().unwrap();
}
