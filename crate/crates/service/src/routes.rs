use std::convert::Infallible;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use strategist_core::ibo::{estimate_continuous, estimate_grid};
use strategist_core::{derive_seed, BoLoop, BoParams, IboConfig, IboError, Sample, SearchSpace, StepOutcome, TrajectoryError};

use crate::error::ApiError;
use crate::store::{IboMode, RunSnapshot, RunState, Session, SessionMeta, SessionSnapshot, Store, StoredEstimate};

pub type AppState = Arc<Store>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/evaluate", post(evaluate))
        .route("/sessions/:id/ibo", post(run_ibo))
        .route("/sessions/:id/continue", post(continue_bo))
        .route("/runs/:run_id", get(get_run))
        .with_state(state)
}

/// Parses a JSON body, reporting failures in the service's error format.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_request", e.to_string()))
}

fn session(state: &Store, id: &str) -> Result<crate::store::SessionHandle, ApiError> {
    state.get(id).ok_or_else(|| ApiError::not_found("unknown_session", id))
}

fn persist(state: &Store, s: &Session) -> Result<(), ApiError> {
    state.persist(s).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    objective: String,
    #[serde(default)]
    seed: u64,
}

#[derive(Serialize)]
struct CreateResponse {
    id: String,
    objective: String,
    space: SearchSpace,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Json<CreateResponse>, ApiError> {
    let req: CreateRequest = parse(&body)?;
    let objective = state.catalog.get(&req.objective).ok_or_else(|| {
        let names = state.catalog.names();
        ApiError::bad_request("unknown_objective", format!("unknown objective {:?}; available: {}", req.objective, names.join(", ")))
            .with_detail(json!({ "available": names }))
    })?;
    let space = objective.space();
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = SessionMeta {
        id: uuid::Uuid::new_v4().simple().to_string(),
        objective: req.objective.clone(),
        seed: req.seed,
        created_at,
        estimates: Vec::new(),
        runs: Vec::new(),
    };
    let id = meta.id.clone();
    state
        .insert(Session { meta, trajectory: strategist_core::Trajectory::empty(space.clone()) })
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(CreateResponse { id, objective: req.objective, space }))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSnapshot>, ApiError> {
    let handle = session(&state, &id)?;
    let snap = handle.lock().unwrap().snapshot();
    Ok(Json(snap))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    x: Vec<f64>,
}

#[derive(Serialize)]
struct EvaluateResponse {
    f: f64,
    trial_index: usize,
}

fn trajectory_error(e: TrajectoryError) -> ApiError {
    match e {
        TrajectoryError::OutOfBounds { axis, value, lower, upper, .. } => ApiError::bad_request(
            "out_of_bounds",
            format!("x[{axis}] = {value} lies outside [{lower}, {upper}]"),
        )
        .with_detail(json!({ "axis": axis, "value": value, "lower": lower, "upper": upper })),
        TrajectoryError::Duplicate { first, .. } => ApiError::bad_request(
            "duplicate_point",
            format!("x repeats trial {}; perturb it slightly and resubmit", first + 1),
        )
        .with_detail(json!({ "duplicate_of": first + 1 })),
        TrajectoryError::DimensionMismatch { expected, found, .. } => {
            ApiError::bad_request("dimension_mismatch", format!("x has {found} coordinates, expected {expected}"))
                .with_detail(json!({ "expected": expected, "found": found }))
        }
        other => ApiError::bad_request("invalid_point", other.to_string()),
    }
}

async fn evaluate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<EvaluateResponse>, ApiError> {
    let req: EvaluateRequest = parse(&body)?;
    let handle = session(&state, &id)?;
    let mut s = handle.lock().unwrap();
    let objective = state.catalog.get(&s.meta.objective).ok_or_else(|| ApiError::internal("objective missing from catalog"))?;
    let record = s.trajectory.len();
    s.trajectory.space().check_point(record, &req.x).map_err(trajectory_error)?;
    let f = objective.eval(&req.x);
    let index = s.trajectory.push(Sample::new(req.x, f)).map_err(trajectory_error)?;
    persist(&state, &s)?;
    Ok(Json(EvaluateResponse { f, trial_index: index + 1 }))
}

/// Optional replacements for the default estimation settings.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IboOverrides {
    pub alpha_bo_grid: Option<Vec<f64>>,
    pub alpha_ini_values: Option<Vec<f64>>,
    /// Isotropic candidate weights.
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_bounds: Option<(f64, f64)>,
    pub n_restarts: Option<usize>,
    /// Fixed exploration-set size; `null` together with `scan_k0: true` scans it.
    pub k0_fixed: Option<usize>,
    pub scan_k0: Option<bool>,
    pub n_ini: Option<usize>,
    pub n_uniform: Option<usize>,
    pub n_normal: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
}

impl IboOverrides {
    fn apply(self, dim: usize, default_seed: u64) -> IboConfig {
        let mut cfg = IboConfig { k0_fixed: Some(2), seed: default_seed, ..IboConfig::for_dim(dim) };
        if let Some(v) = self.alpha_bo_grid {
            cfg.alpha_bo_grid = v;
        }
        if let Some(v) = self.alpha_ini_values {
            cfg.alpha_ini_values = v;
        }
        if let Some(v) = self.lambda_grid {
            cfg.lambda_grid = v.into_iter().map(|l| vec![l; dim]).collect();
        }
        if let Some(v) = self.lambda_bounds {
            cfg.lambda_bounds = v;
        }
        if let Some(v) = self.n_restarts {
            cfg.n_restarts = v;
        }
        if self.scan_k0 == Some(true) {
            cfg.k0_fixed = None;
        }
        if let Some(v) = self.k0_fixed {
            cfg.k0_fixed = Some(v);
        }
        if let Some(v) = self.n_ini {
            cfg.n_ini = v;
        }
        if let Some(v) = self.n_uniform {
            cfg.proposal.n_uniform = v;
        }
        if let Some(v) = self.n_normal {
            cfg.proposal.n_normal = v;
        }
        if let Some(v) = self.sigma {
            cfg.proposal.sigma = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IboRequest {
    mode: IboMode,
    #[serde(default)]
    overrides: IboOverrides,
}

fn ibo_error(e: IboError) -> ApiError {
    match e {
        IboError::InsufficientTrajectory { len, needed } => ApiError::bad_request(
            "insufficient_trajectory",
            format!("the session has {len} trials; at least {needed} are needed"),
        )
        .with_detail(json!({ "len": len, "needed": needed })),
        IboError::InvalidConfig(m) => ApiError::bad_request("invalid_config", m),
        other => ApiError::internal(other.to_string()),
    }
}

async fn run_ibo(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<StoredEstimate>, ApiError> {
    let req: IboRequest = parse(&body)?;
    let handle = session(&state, &id)?;
    let (trajectory, cfg) = {
        let s = handle.lock().unwrap();
        let seed = derive_seed(s.meta.seed, &[1, s.meta.estimates.len() as u64]);
        (s.trajectory.clone(), req.overrides.apply(s.trajectory.dim(), seed))
    };
    let mode = req.mode;
    let trajectory_len = trajectory.len();
    let (estimate, cost_table) = tokio::task::spawn_blocking(move || match mode {
        IboMode::Grid => estimate_grid(&trajectory, &cfg).map(|g| (g.estimate, g.table)),
        IboMode::Continuous => estimate_continuous(&trajectory, &cfg).map(|e| (e, Vec::new())),
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(ibo_error)?;
    let stored = StoredEstimate {
        estimate_id: uuid::Uuid::new_v4().simple().to_string(),
        mode,
        trajectory_len,
        estimate,
        cost_table,
    };
    let mut s = handle.lock().unwrap();
    s.meta.estimates.push(stored.clone());
    persist(&state, &s)?;
    Ok(Json(stored))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContinueRequest {
    estimate_id: Option<String>,
    /// Explicit weights instead of an estimate (one value for isotropic weights).
    lambda: Option<Vec<f64>>,
    iterations: usize,
    /// Number of leading session trials to start from; all of them by default.
    prefix: Option<usize>,
    #[serde(default = "default_n_starts")]
    n_starts: usize,
    #[serde(default = "default_ei_tolerance")]
    ei_tolerance: f64,
    seed: Option<u64>,
}

fn default_n_starts() -> usize {
    20
}

fn default_ei_tolerance() -> f64 {
    1e-3
}

#[derive(Serialize)]
struct ContinueResponse {
    run_id: String,
}

async fn continue_bo(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ContinueResponse>, ApiError> {
    let req: ContinueRequest = parse(&body)?;
    if req.iterations == 0 {
        return Err(ApiError::bad_request("invalid_request", "iterations must be at least 1"));
    }
    let handle = session(&state, &id)?;
    let mut s = handle.lock().unwrap();
    if let Some(active) = s.active_run() {
        return Err(ApiError::conflict(
            "run_active",
            "a continuation is already running on this session",
            json!({ "run_id": active.run_id }),
        ));
    }
    let dim = s.trajectory.dim();
    let lambda = match (&req.estimate_id, &req.lambda) {
        (Some(eid), None) => s
            .meta
            .estimates
            .iter()
            .find(|e| &e.estimate_id == eid)
            .map(|e| e.estimate.lambda_hat.clone())
            .ok_or_else(|| ApiError::not_found("unknown_estimate", eid))?,
        (None, Some(l)) if l.len() == 1 => vec![l[0]; dim],
        (None, Some(l)) => l.clone(),
        _ => return Err(ApiError::bad_request("invalid_request", "give exactly one of estimate_id and lambda")),
    };
    let prefix = req.prefix.unwrap_or(s.trajectory.len());
    if prefix < 2 || prefix > s.trajectory.len() {
        return Err(ApiError::bad_request(
            "invalid_prefix",
            format!("prefix must lie in 2..={} (session trials)", s.trajectory.len()),
        )
        .with_detail(json!({ "prefix": prefix, "len": s.trajectory.len() })));
    }
    let params = BoParams::new(lambda.clone(), req.ei_tolerance, req.n_starts)
        .map_err(|e| ApiError::bad_request("invalid_request", e.to_string()))?;
    let initial = s.trajectory.prefix(prefix);
    let seed = req.seed.unwrap_or_else(|| derive_seed(s.meta.seed, &[2, s.meta.runs.len() as u64]));
    let bo = BoLoop::new(initial.clone(), params, seed).map_err(|e| ApiError::bad_request("invalid_request", e.to_string()))?;
    let objective = state.catalog.get(&s.meta.objective).ok_or_else(|| ApiError::internal("objective missing from catalog"))?.clone();

    let run_id = uuid::Uuid::new_v4().simple().to_string();
    s.meta.runs.push(RunSnapshot {
        run_id: run_id.clone(),
        session_id: id.clone(),
        state: RunState::Pending,
        estimate_id: req.estimate_id.clone(),
        lambda,
        prefix,
        requested_iterations: req.iterations,
        seed,
        iterates: Vec::new(),
        best_curve: vec![initial.best().expect("prefix has at least two trials")],
        error: None,
        record: None,
    });
    persist(&state, &s)?;
    drop(s);
    state.register_run(&run_id, &id);

    let (store, rid, iterations) = (state.clone(), run_id.clone(), req.iterations);
    tokio::task::spawn_blocking(move || drive_run(&store, &handle, &rid, bo, objective, iterations));
    Ok(Json(ContinueResponse { run_id }))
}

/// Steps the BO loop, publishing each iterate to the session's run snapshot.
fn drive_run(
    store: &Store,
    handle: &crate::store::SessionHandle,
    run_id: &str,
    mut bo: BoLoop,
    objective: crate::catalog::Objective,
    iterations: usize,
) {
    let update = |f: &mut dyn FnMut(&mut RunSnapshot)| {
        let mut s = handle.lock().unwrap();
        if let Some(run) = s.run_mut(run_id) {
            f(run);
        }
    };
    update(&mut |r| r.state = RunState::Running);
    let mut eval = |x: &[f64]| Ok::<_, Infallible>(objective.eval(x));
    let mut failure = None;
    while bo.iterations() < iterations {
        match bo.step(&mut eval) {
            Ok(StepOutcome::Appended { x, f, .. }) => update(&mut |r| {
                let best = r.best_curve.last().copied().unwrap_or(f).min(f);
                r.iterates.push(Sample::new(x.clone(), f));
                r.best_curve.push(best);
            }),
            Ok(StepOutcome::Converged { .. }) => break,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let mut s = handle.lock().unwrap();
    if let Some(run) = s.run_mut(run_id) {
        match failure {
            None => {
                run.state = RunState::Done;
                run.record = Some(bo.into_record());
            }
            Some(message) => {
                run.state = RunState::Failed;
                run.error = Some(message);
            }
        }
    }
    if let Err(e) = store.persist(&s) {
        tracing::error!("persisting run {run_id}: {e}");
    }
}

async fn get_run(State(state): State<AppState>, Path(run_id): Path<String>) -> Result<Json<RunSnapshot>, ApiError> {
    let handle = state.session_of_run(&run_id).ok_or_else(|| ApiError::not_found("unknown_run", &run_id))?;
    let s = handle.lock().unwrap();
    let run = s.meta.runs.iter().find(|r| r.run_id == run_id).cloned().ok_or_else(|| ApiError::not_found("unknown_run", &run_id))?;
    Ok(Json(run))
}
