//! In-memory session store behind the HTTP API.
//!
//! Sessions are independent; each one sits behind its own mutex, so a second
//! utterance for a session that is mid-turn waits for the first to finish.
//! Fixtures are loaded once and shared read-only.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{render_overlay, Image};
use crate::manager::{AppliedEdit, DialogueError, DialogueSession, SessionConfig, SystemTurn};
use crate::metrics::DialogueLog;
use crate::ontology::{DialogueAct, StateSnapshot};
use crate::vision::{load_scene, Scene, SceneError, MANIFEST_FILE};

/// Immutable set of scenes keyed by image id.
#[derive(Debug, Default)]
pub struct FixtureStore {
    scenes: BTreeMap<String, Arc<Scene>>,
}

impl FixtureStore {
    /// Loads every subdirectory of `dir` that holds a scene manifest.
    pub fn load(dir: &Path) -> Result<Self, SceneError> {
        let mut scenes = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() && path.join(MANIFEST_FILE).is_file() {
                let scene = load_scene(&path)?;
                scenes.insert(scene.image_id.clone(), Arc::new(scene));
            }
        }
        Ok(FixtureStore { scenes })
    }

    pub fn from_scenes(scenes: impl IntoIterator<Item = Scene>) -> Self {
        FixtureStore { scenes: scenes.into_iter().map(|s| (s.image_id.clone(), Arc::new(s))).collect() }
    }

    pub fn ids(&self) -> Vec<String> {
        self.scenes.keys().cloned().collect()
    }

    pub fn get(&self, image_id: &str) -> Option<&Arc<Scene>> {
        self.scenes.get(image_id)
    }

    pub fn scenes(&self) -> impl Iterator<Item = &Arc<Scene>> {
        self.scenes.values()
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is closed")]
    SessionClosed(String),
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("no region is currently tracked")]
    NoMask,
    #[error("unknown image variant `{0}` (expected current, overlay or original)")]
    BadVariant(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::UnknownImage(_) | ServiceError::UnknownSession(_) => 404,
            ServiceError::SessionClosed(_) | ServiceError::NoMask => 409,
            ServiceError::EmptyUtterance | ServiceError::BadVariant(_) => 400,
            ServiceError::Internal(_) => 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageVariant {
    #[default]
    Current,
    Overlay,
    Original,
}

impl FromStr for ImageVariant {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "current" => Ok(ImageVariant::Current),
            "overlay" => Ok(ImageVariant::Overlay),
            "original" => Ok(ImageVariant::Original),
            other => Err(ServiceError::BadVariant(other.to_string())),
        }
    }
}

impl fmt::Display for ImageVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageVariant::Current => "current",
            ImageVariant::Overlay => "overlay",
            ImageVariant::Original => "original",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: String,
    pub image_id: String,
    pub created_at: u64,
    #[serde(flatten)]
    pub turn: SystemTurn,
    pub state: StateSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResponse {
    pub session_id: String,
    #[serde(flatten)]
    pub turn: SystemTurn,
    pub state: StateSnapshot,
    /// Path of the overlay image while a tracked mask awaits execution.
    pub overlay: Option<String>,
    pub session_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub session_id: String,
    pub image_id: String,
    pub state: StateSnapshot,
    pub next_act: DialogueAct,
    /// Executed edits in order; front ends derive slider positions from these.
    pub edits: Vec<AppliedEdit>,
    pub closed: bool,
    pub created_at: u64,
    pub closed_at: Option<u64>,
}

struct SessionEntry {
    dialogue: DialogueSession,
    created_at: u64,
    closed_at: Option<u64>,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn overlay_path(session_id: &str) -> String {
    format!("/sessions/{session_id}/image?variant=overlay")
}

pub struct SessionStore {
    fixtures: Arc<FixtureStore>,
    config: SessionConfig,
    log_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionEntry>>>>,
}

impl SessionStore {
    pub fn new(fixtures: Arc<FixtureStore>, config: SessionConfig, log_dir: Option<PathBuf>) -> Self {
        SessionStore { fixtures, config, log_dir, sessions: RwLock::new(HashMap::new()) }
    }

    pub fn fixtures(&self) -> &FixtureStore {
        &self.fixtures
    }

    pub fn list_images(&self) -> Vec<String> {
        self.fixtures.ids()
    }

    fn entry(&self, session_id: &str) -> Result<Arc<Mutex<SessionEntry>>, ServiceError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))
    }

    fn with_entry<T>(
        &self,
        session_id: &str,
        f: impl FnOnce(&mut SessionEntry) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let entry = self.entry(session_id)?;
        let mut guard = entry.lock().map_err(|_| ServiceError::Internal("session lock poisoned".into()))?;
        f(&mut guard)
    }

    pub fn create_session(&self, image_id: &str) -> Result<SessionDescriptor, ServiceError> {
        let scene = self.fixtures.get(image_id).ok_or_else(|| ServiceError::UnknownImage(image_id.to_string()))?;
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let dialogue = DialogueSession::new(session_id.clone(), Arc::clone(scene), self.config.clone())
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let created_at = now_secs();
        let descriptor = SessionDescriptor {
            session_id: session_id.clone(),
            image_id: image_id.to_string(),
            created_at,
            turn: dialogue.opening_turn().clone(),
            state: dialogue.state().snapshot(),
        };
        let entry = SessionEntry { dialogue, created_at, closed_at: None };
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(session_id, Arc::new(Mutex::new(entry)));
        Ok(descriptor)
    }

    pub fn post_utterance(&self, session_id: &str, text: &str) -> Result<UtteranceResponse, ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::EmptyUtterance);
        }
        self.with_entry(session_id, |entry| {
            let turn = entry.dialogue.step(text).map_err(|e| match e {
                DialogueError::SessionClosed => ServiceError::SessionClosed(session_id.to_string()),
                other => ServiceError::Internal(other.to_string()),
            })?;
            let closed = entry.dialogue.is_closed();
            if closed && entry.closed_at.is_none() {
                entry.closed_at = Some(now_secs());
                self.flush(entry)?;
            }
            let overlay = entry.dialogue.state().mask().map(|_| overlay_path(session_id));
            Ok(UtteranceResponse {
                session_id: session_id.to_string(),
                turn,
                state: entry.dialogue.state().snapshot(),
                overlay,
                session_closed: closed,
            })
        })
    }

    pub fn get_state(&self, session_id: &str) -> Result<StateResponse, ServiceError> {
        self.with_entry(session_id, |entry| {
            let state = entry.dialogue.state();
            Ok(StateResponse {
                session_id: session_id.to_string(),
                image_id: entry.dialogue.scene().image_id.clone(),
                state: state.snapshot(),
                next_act: crate::manager::next_act(state),
                edits: entry.dialogue.edits().to_vec(),
                closed: entry.dialogue.is_closed(),
                created_at: entry.created_at,
                closed_at: entry.closed_at,
            })
        })
    }

    /// Renders the requested image variant.
    pub fn image(&self, session_id: &str, variant: ImageVariant) -> Result<Image, ServiceError> {
        self.with_entry(session_id, |entry| {
            let d = &entry.dialogue;
            match variant {
                ImageVariant::Current => Ok(d.image().clone()),
                ImageVariant::Original => Ok(d.scene().image.clone()),
                ImageVariant::Overlay => {
                    let mask = d.state().mask().ok_or(ServiceError::NoMask)?;
                    render_overlay(d.image(), mask).map_err(|e| ServiceError::Internal(e.to_string()))
                }
            }
        })
    }

    pub fn get_image(&self, session_id: &str, variant: ImageVariant) -> Result<Vec<u8>, ServiceError> {
        self.image(session_id, variant)?
            .to_png_bytes()
            .map_err(|e| ServiceError::Internal(e.to_string()))
    }

    pub fn get_log(&self, session_id: &str) -> Result<DialogueLog, ServiceError> {
        self.with_entry(session_id, |entry| Ok(entry.dialogue.log().clone()))
    }

    /// Closes the session and writes its log. Closing again returns the same log.
    pub fn close_session(&self, session_id: &str) -> Result<DialogueLog, ServiceError> {
        self.with_entry(session_id, |entry| {
            if entry.closed_at.is_none() {
                entry.dialogue.close();
                entry.closed_at = Some(now_secs());
                self.flush(entry)?;
            }
            Ok(entry.dialogue.log().clone())
        })
    }

    fn flush(&self, entry: &SessionEntry) -> Result<(), ServiceError> {
        let Some(dir) = &self.log_dir else { return Ok(()) };
        let log = entry.dialogue.log();
        fs::create_dir_all(dir).map_err(|e| ServiceError::Internal(e.to_string()))?;
        log.save(&dir.join(format!("{}.jsonl", log.session_id)))
            .map_err(|e| ServiceError::Internal(e.to_string()))
    }
}
