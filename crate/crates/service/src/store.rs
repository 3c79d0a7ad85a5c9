//! In-memory session registry backed by one trajectory document plus one sidecar
//! metadata file per session.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use strategist_core::ibo::CostRow;
use strategist_core::space::{load_trajectory, save_trajectory};
use strategist_core::{BoRunRecord, IboEstimate, Sample, SearchSpace, Trajectory};

use crate::catalog::Catalog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IboMode {
    Grid,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEstimate {
    pub estimate_id: String,
    pub mode: IboMode,
    /// Trajectory length the estimate was computed on.
    pub trajectory_len: usize,
    #[serde(flatten)]
    pub estimate: IboEstimate,
    /// Grid mode only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cost_table: Vec<CostRow<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub run_id: String,
    pub session_id: String,
    pub state: RunState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_id: Option<String>,
    pub lambda: Vec<f64>,
    /// Number of session trials the run starts from.
    pub prefix: usize,
    pub requested_iterations: usize,
    pub seed: u64,
    pub iterates: Vec<Sample>,
    /// Incumbent after 0, 1, 2, ... iterations.
    pub best_curve: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<BoRunRecord>,
}

impl RunSnapshot {
    pub fn is_active(&self) -> bool {
        matches!(self.state, RunState::Pending | RunState::Running)
    }
}

/// Sidecar metadata persisted next to the trajectory document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub objective: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub estimates: Vec<StoredEstimate>,
    pub runs: Vec<RunSnapshot>,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub meta: SessionMeta,
    pub trajectory: Trajectory,
}

/// Client-visible session state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub id: String,
    pub objective: String,
    pub seed: u64,
    pub created_at: u64,
    pub space: SearchSpace,
    pub trajectory: Vec<Sample>,
    pub estimates: Vec<StoredEstimate>,
    pub runs: Vec<RunSnapshot>,
}

impl Session {
    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            id: self.meta.id.clone(),
            objective: self.meta.objective.clone(),
            seed: self.meta.seed,
            created_at: self.meta.created_at,
            space: self.trajectory.space().clone(),
            trajectory: self.trajectory.samples().to_vec(),
            estimates: self.meta.estimates.clone(),
            runs: self.meta.runs.clone(),
        }
    }

    pub fn active_run(&self) -> Option<&RunSnapshot> {
        self.meta.runs.iter().find(|r| r.is_active())
    }

    pub fn run_mut(&mut self, run_id: &str) -> Option<&mut RunSnapshot> {
        self.meta.runs.iter_mut().find(|r| r.run_id == run_id)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("data directory {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("session file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// All sessions, plus the run-id index.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    pub catalog: Catalog,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    runs: RwLock<HashMap<String, String>>,
}

fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.session.json"))
}

fn trajectory_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.trajectory.json"))
}

fn write_atomic(path: &Path, text: &str) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let io = |source| StoreError::Io { path: path.to_path_buf(), source };
    fs::write(&tmp, text).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

impl Store {
    /// Opens `dir`, creating it if needed, and loads every persisted session. Runs
    /// that were still active when the previous process stopped are marked failed.
    pub fn open(dir: impl Into<PathBuf>, catalog: Catalog) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        let mut sessions = HashMap::new();
        let mut runs = HashMap::new();
        let entries = fs::read_dir(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths {
            let Some(id) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".session.json")) else {
                continue;
            };
            let corrupt = |message: String| StoreError::Corrupt { path: path.clone(), message };
            let text = fs::read_to_string(&path).map_err(|e| corrupt(e.to_string()))?;
            let mut meta: SessionMeta = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
            let trajectory = load_trajectory(trajectory_path(&dir, id)).map_err(|e| corrupt(e.to_string()))?;
            for run in meta.runs.iter_mut().filter(|r| r.is_active()) {
                run.state = RunState::Failed;
                run.error = Some("interrupted by a service restart".into());
            }
            for run in &meta.runs {
                runs.insert(run.run_id.clone(), meta.id.clone());
            }
            sessions.insert(meta.id.clone(), Arc::new(Mutex::new(Session { meta, trajectory })));
        }
        Ok(Self { dir, catalog, sessions: RwLock::new(sessions), runs: RwLock::new(runs) })
    }

    pub fn insert(&self, session: Session) -> Result<SessionHandle, StoreError> {
        self.persist(&session)?;
        let id = session.meta.id.clone();
        let handle = Arc::new(Mutex::new(session));
        self.sessions.write().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    pub fn register_run(&self, run_id: &str, session_id: &str) {
        self.runs.write().unwrap().insert(run_id.to_string(), session_id.to_string());
    }

    pub fn session_of_run(&self, run_id: &str) -> Option<SessionHandle> {
        let sid = self.runs.read().unwrap().get(run_id).cloned()?;
        self.get(&sid)
    }

    /// Writes both files of a session; callers hold the session lock so writes serialize.
    pub fn persist(&self, session: &Session) -> Result<(), StoreError> {
        let id = &session.meta.id;
        let traj = trajectory_path(&self.dir, id);
        save_trajectory(&session.trajectory, &traj).map_err(|e| StoreError::Corrupt { path: traj, message: e.to_string() })?;
        let text = serde_json::to_string(&session.meta).expect("session metadata serializes");
        write_atomic(&meta_path(&self.dir, id), &text)
    }
}
