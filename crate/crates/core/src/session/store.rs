//! On-disk session layout:
//!
//! ```text
//! <root>/<session-id>/session.json          session settings
//! <root>/<session-id>/turns/<k>/turn.json   turn record (status, seeds, error)
//!                              response.txt raw planner completion
//!                              plan.json    parsed plan, when one parsed
//!                              mix.wav      rendered mix, ok turns only
//!                              report.json  mix report, ok turns only
//! ```
//!
//! Sessions and turns are assembled in a dot-prefixed temporary directory
//! and published with a single `rename`, so a crash leaves either the whole
//! turn or nothing. Leftover temporary directories are ignored on load.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Session, SessionError, SessionSettings, Turn, TurnRecord};
use crate::audio::AudioClip;
use crate::mixer::MixReport;
use crate::plan::Plan;
use crate::wav::{decode_wav, encode_wav, WavFormat};

pub const SESSION_FILE: &str = "session.json";
pub const TURN_FILE: &str = "turn.json";
pub const RESPONSE_FILE: &str = "response.txt";
pub const PLAN_FILE: &str = "plan.json";
pub const AUDIO_FILE: &str = "mix.wav";
pub const REPORT_FILE: &str = "report.json";
const TURNS_DIR: &str = "turns";

/// Everything written for one turn.
pub struct TurnArtifacts<'a> {
    pub record: &'a TurnRecord,
    pub raw_response: &'a str,
    pub plan: Option<&'a Plan>,
    pub mix: Option<(&'a AudioClip, &'a MixReport)>,
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

/// Session ids are 1–64 characters from `[A-Za-z0-9_-]`.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn write_synced(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

fn sync_dir(path: &Path) {
    // Best effort: directory fsync is unsupported on some platforms.
    if let Ok(d) = fs::File::open(path) {
        let _ = d.sync_all();
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, SessionError> {
    serde_json::to_vec_pretty(value).map_err(|e| SessionError::Store(format!("serialize: {e}")))
}

fn from_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SessionError> {
    let bytes = fs::read(path).map_err(|e| SessionError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| SessionError::Store(format!("{}: {e}", path.display())))
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| SessionError::io(&root, e))?;
        Ok(SessionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn turn_dir(&self, id: &str, index: usize) -> PathBuf {
        self.session_dir(id).join(TURNS_DIR).join(index.to_string())
    }

    fn tmp_dir(&self, parent: &Path, label: &str) -> PathBuf {
        parent.join(format!(".tmp-{label}-{}", uuid::Uuid::new_v4().simple()))
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_session_id(id) && self.session_dir(id).join(SESSION_FILE).is_file()
    }

    /// Persists an empty session. Fails if the id is taken.
    pub fn create(&self, settings: &SessionSettings) -> Result<Session, SessionError> {
        let id = &settings.id;
        if !valid_session_id(id) {
            return Err(SessionError::InvalidRequest(format!("invalid session id `{id}`")));
        }
        let dest = self.session_dir(id);
        if dest.exists() {
            return Err(SessionError::AlreadyExists(id.clone()));
        }
        let tmp = self.tmp_dir(&self.root, id);
        let result = (|| {
            fs::create_dir_all(tmp.join(TURNS_DIR)).map_err(|e| SessionError::io(&tmp, e))?;
            write_synced(&tmp.join(SESSION_FILE), &to_json(settings)?).map_err(|e| SessionError::io(&tmp, e))?;
            // Renaming onto a non-empty directory fails, so a racing create
            // with the same id loses cleanly.
            fs::rename(&tmp, &dest).map_err(|e| {
                if dest.join(SESSION_FILE).exists() {
                    SessionError::AlreadyExists(id.clone())
                } else {
                    SessionError::io(&dest, e)
                }
            })
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result?;
        sync_dir(&self.root);
        Ok(Session { settings: settings.clone(), turns: Vec::new() })
    }

    pub fn load_settings(&self, id: &str) -> Result<SessionSettings, SessionError> {
        if !self.exists(id) {
            return Err(SessionError::NotFound(format!("session `{id}`")));
        }
        from_json(&self.session_dir(id).join(SESSION_FILE))
    }

    /// Committed turn indices, which must run contiguously from 0.
    fn turn_indices(&self, id: &str) -> Result<Vec<usize>, SessionError> {
        let dir = self.session_dir(id).join(TURNS_DIR);
        let mut indices = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| SessionError::io(&dir, e))? {
            let entry = entry.map_err(|e| SessionError::io(&dir, e))?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            if name.starts_with('.') {
                continue;
            }
            match name.parse::<usize>() {
                Ok(k) if name == k.to_string() => indices.push(k),
                _ => log::warn!("ignoring unexpected entry {} in {}", name, dir.display()),
            }
        }
        indices.sort_unstable();
        if let Some((pos, _)) = indices.iter().enumerate().find(|(i, k)| *i != **k) {
            return Err(SessionError::Store(format!("session `{id}` is missing turn {pos}")));
        }
        Ok(indices)
    }

    pub fn turn_count(&self, id: &str) -> Result<usize, SessionError> {
        Ok(self.turn_indices(id)?.len())
    }

    pub fn load_turn(&self, id: &str, index: usize) -> Result<Turn, SessionError> {
        let dir = self.turn_dir(id, index);
        if !dir.join(TURN_FILE).is_file() {
            return Err(SessionError::NotFound(format!("turn {index} of session `{id}`")));
        }
        let record: TurnRecord = from_json(&dir.join(TURN_FILE))?;
        let raw = dir.join(RESPONSE_FILE);
        let raw_planner_response = fs::read_to_string(&raw).map_err(|e| SessionError::io(&raw, e))?;
        let plan_path = dir.join(PLAN_FILE);
        let plan = if plan_path.is_file() { Some(from_json(&plan_path)?) } else { None };
        let audio = dir.join(AUDIO_FILE);
        Ok(Turn { record, raw_planner_response, plan, audio_path: audio.is_file().then_some(audio) })
    }

    pub fn load(&self, id: &str) -> Result<Session, SessionError> {
        let settings = self.load_settings(id)?;
        let turns = self
            .turn_indices(id)?
            .into_iter()
            .map(|k| self.load_turn(id, k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Session { settings, turns })
    }

    /// Ids of all sessions, sorted.
    pub fn list(&self) -> Result<Vec<String>, SessionError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| SessionError::io(&self.root, e))? {
            let entry = entry.map_err(|e| SessionError::io(&self.root, e))?;
            if let Some(name) = entry.file_name().to_str() {
                if self.exists(name) {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Publishes turn `artifacts.record.index`, which must be the next index.
    pub fn commit_turn(&self, id: &str, artifacts: &TurnArtifacts<'_>, format: WavFormat) -> Result<Turn, SessionError> {
        let index = artifacts.record.index;
        let next = self.turn_count(id)?;
        if index != next {
            return Err(SessionError::Store(format!("turn {index} out of order; next is {next}")));
        }
        let turns = self.session_dir(id).join(TURNS_DIR);
        let tmp = self.tmp_dir(&turns, &index.to_string());
        let result = (|| {
            let io = |e| SessionError::io(&tmp, e);
            fs::create_dir(&tmp).map_err(io)?;
            write_synced(&tmp.join(TURN_FILE), &to_json(artifacts.record)?).map_err(io)?;
            write_synced(&tmp.join(RESPONSE_FILE), artifacts.raw_response.as_bytes()).map_err(io)?;
            if let Some(plan) = artifacts.plan {
                write_synced(&tmp.join(PLAN_FILE), &to_json(plan)?).map_err(io)?;
            }
            if let Some((clip, report)) = artifacts.mix {
                let wav = encode_wav(clip, format).map_err(|e| SessionError::Store(e.to_string()))?;
                write_synced(&tmp.join(AUDIO_FILE), &wav).map_err(io)?;
                write_synced(&tmp.join(REPORT_FILE), &to_json(report)?).map_err(io)?;
            }
            sync_dir(&tmp);
            let dest = self.turn_dir(id, index);
            fs::rename(&tmp, &dest).map_err(|e| SessionError::io(&dest, e))
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        result?;
        sync_dir(&turns);
        self.load_turn(id, index)
    }

    pub fn read_turn_audio_bytes(&self, id: &str, index: usize) -> Result<Vec<u8>, SessionError> {
        let turn = self.load_turn(id, index)?;
        let path = turn.audio_path.ok_or(SessionError::NotRendered(index))?;
        fs::read(&path).map_err(|e| SessionError::io(&path, e))
    }

    pub fn read_turn_audio(&self, id: &str, index: usize) -> Result<AudioClip, SessionError> {
        let bytes = self.read_turn_audio_bytes(id, index)?;
        decode_wav(&bytes).map_err(|e| SessionError::Store(e.to_string()))
    }

    pub fn read_turn_report(&self, id: &str, index: usize) -> Result<MixReport, SessionError> {
        let path = self.turn_dir(id, index).join(REPORT_FILE);
        if !path.is_file() {
            self.load_turn(id, index)?;
            return Err(SessionError::NotRendered(index));
        }
        from_json(&path)
    }
}
