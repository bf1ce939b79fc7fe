//! Blinded real-vs-synthetic study service.
//!
//! Sessions and judgments are appended to a JSON-lines log before they are
//! acknowledged and replayed at startup. Image URLs carry opaque references so
//! a client cannot tell the source of an image from its URL, and correctness
//! is only revealed once a session is complete.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use urcdm_core::study::{compute_stats, plan_trials, ImagePools, Judgment, Session, Side, StudyCondition, Tally};

use crate::config::ServeConfig;
use crate::error::{AppError, AppResult, IoContext};

/// Opaque, stable reference of an image file.
pub fn image_ref(path: &Path) -> String {
    let digest = Sha256::digest(path.to_string_lossy().as_bytes());
    digest[..12].iter().map(|b| format!("{b:02x}")).collect()
}

/// Pools of every condition found under `root`, keyed by condition, plus the
/// reference-to-file table.
pub fn load_pools(root: &Path) -> AppResult<(BTreeMap<StudyCondition, ImagePools>, HashMap<String, PathBuf>)> {
    let mut pools = BTreeMap::new();
    let mut files = HashMap::new();
    for condition in StudyCondition::ALL {
        let cdir = root.join(condition.name());
        if !cdir.is_dir() {
            continue;
        }
        let mut p = ImagePools::default();
        for (kind, dest) in [("real", &mut p.real), ("synthetic", &mut p.synthetic)] {
            let kdir = cdir.join(kind);
            if !kdir.is_dir() {
                continue;
            }
            for mag in fs::read_dir(&kdir).at(&kdir)? {
                let mdir = mag.at(&kdir)?.path();
                let Some(m) = mdir.file_name().and_then(|n| n.to_str()).and_then(|n| n.parse::<u8>().ok()) else {
                    continue;
                };
                let mut images: Vec<PathBuf> = fs::read_dir(&mdir)
                    .at(&mdir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "png"))
                    .collect();
                images.sort();
                for path in images {
                    let r = image_ref(&path);
                    dest.push((m, r.clone()));
                    files.insert(r, path);
                }
            }
        }
        p.real.sort();
        p.synthetic.sort();
        pools.insert(condition, p);
    }
    if pools.is_empty() {
        return Err(AppError::validation(
            "image pools",
            format!("no condition directories under {}", root.display()),
        ));
    }
    Ok((pools, files))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogRecord {
    Session {
        session_id: String,
        rater: String,
        condition: String,
        seed: u64,
        trials: usize,
    },
    Judgment {
        session_id: String,
        trial: usize,
        chosen: String,
        correct: bool,
        timestamp: u64,
    },
}

pub struct Study {
    pools: BTreeMap<StudyCondition, ImagePools>,
    files: HashMap<String, PathBuf>,
    sessions: HashMap<String, Session>,
    tally: Tally,
    log: File,
    log_path: PathBuf,
    trials_per_session: usize,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl Study {
    /// Loads the pools and replays the judgment log (created when absent).
    pub fn open(cfg: &ServeConfig) -> AppResult<Self> {
        cfg.validate()?;
        let (pools, files) = load_pools(&cfg.pools)?;
        if let Some(dir) = cfg.log.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).at(dir)?;
        }
        let mut study = Self {
            pools,
            files,
            sessions: HashMap::new(),
            tally: Tally::default(),
            log: OpenOptions::new().create(true).append(true).open(&cfg.log).at(&cfg.log)?,
            log_path: cfg.log.clone(),
            trials_per_session: cfg.trials_per_session,
        };
        let reader = BufReader::new(File::open(&cfg.log).at(&cfg.log)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line.at(&cfg.log)?;
            if line.trim().is_empty() {
                continue;
            }
            let what = || format!("log {} line {}", cfg.log.display(), n + 1);
            let record: LogRecord =
                serde_json::from_str(&line).map_err(|e| AppError::validation(what(), e.to_string()))?;
            study.apply(record).map_err(|e| AppError::validation(what(), e.to_string()))?;
        }
        Ok(study)
    }

    fn apply(&mut self, record: LogRecord) -> AppResult<()> {
        match record {
            LogRecord::Session {
                session_id,
                rater,
                condition,
                seed,
                trials,
            } => {
                let session = self.plan(session_id, rater, &condition, seed, trials)?;
                self.sessions.insert(session.id.clone(), session);
            }
            LogRecord::Judgment {
                session_id,
                trial,
                chosen,
                correct,
                timestamp,
            } => {
                let session = self
                    .sessions
                    .get_mut(&session_id)
                    .ok_or_else(|| AppError::validation("judgment", format!("unknown session {session_id}")))?;
                let side = Side::parse(&chosen).ok_or_else(|| AppError::validation("judgment", "bad side"))?;
                let j = session.judge(trial, side, timestamp)?;
                if j.correct != correct {
                    return Err(AppError::validation("judgment", "image pools changed since the log was written"));
                }
                self.tally.record(&j);
            }
        }
        Ok(())
    }

    fn plan(&self, id: String, rater: String, condition: &str, seed: u64, trials: usize) -> AppResult<Session> {
        let c = StudyCondition::parse(condition)
            .ok_or_else(|| AppError::validation("condition", format!("unknown `{condition}`")))?;
        let pools = self
            .pools
            .get(&c)
            .ok_or_else(|| AppError::validation("condition", format!("no images for `{condition}`")))?;
        let plan = plan_trials(pools, trials, seed)?;
        Ok(Session::new(id, rater, c, seed, plan))
    }

    fn append(&mut self, record: &LogRecord) -> AppResult<()> {
        let line = serde_json::to_string(record).expect("log record serializes");
        writeln!(self.log, "{line}").at(&self.log_path)?;
        self.log.flush().at(&self.log_path)?;
        self.log.sync_data().at(&self.log_path)
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn tally(&self) -> &Tally {
        &self.tally
    }
}

pub type SharedStudy = Arc<Mutex<Study>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        use urcdm_core::Error as E;
        let status = match &e {
            AppError::Validation { .. } => StatusCode::BAD_REQUEST,
            AppError::Core(E::NotFound(_)) => StatusCode::NOT_FOUND,
            AppError::Core(E::Conflict(_)) => StatusCode::CONFLICT,
            AppError::Core(E::Setup(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<urcdm_core::Error> for ApiError {
    fn from(e: urcdm_core::Error) -> Self {
        AppError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn lock(state: &SharedStudy) -> std::sync::MutexGuard<'_, Study> {
    state.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Deserialize)]
pub struct NewSession {
    pub rater: String,
    pub condition: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub trials: usize,
}

async fn create_session(State(state): State<SharedStudy>, Json(req): Json<NewSession>) -> ApiResult<impl IntoResponse> {
    if req.rater.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "rater must not be empty"));
    }
    let mut study = lock(&state);
    let id = format!("s{:06}", study.sessions.len() + 1);
    let trials = study.trials_per_session;
    let session = study.plan(id.clone(), req.rater.clone(), &req.condition, req.seed, trials)?;
    study.append(&LogRecord::Session {
        session_id: id.clone(),
        rater: req.rater,
        condition: req.condition,
        seed: req.seed,
        trials,
    })?;
    study.sessions.insert(id.clone(), session);
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id, trials })))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrialView {
    pub trial_id: usize,
    pub left_image_url: String,
    pub right_image_url: String,
    pub magnification: u8,
}

async fn next_trial(State(state): State<SharedStudy>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let study = lock(&state);
    let session = study
        .session(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("session {id}")))?;
    Ok(match session.next_trial() {
        Some(t) => Json(TrialView {
            trial_id: t.id,
            left_image_url: format!("/images/{}", t.left()),
            right_image_url: format!("/images/{}", t.right()),
            magnification: t.magnification,
        })
        .into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Debug, Deserialize)]
pub struct Submit {
    pub trial_id: usize,
    pub chosen: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Submitted {
    pub remaining: usize,
    /// Filled only when the session is complete.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
}

async fn submit(
    State(state): State<SharedStudy>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<Submit>,
) -> ApiResult<Json<Submitted>> {
    let side = Side::parse(&req.chosen)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "chosen must be `left` or `right`"))?;
    let mut study = lock(&state);
    let session = study
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("session {id}")))?;
    // Judge a copy first so a failed log write leaves no trace.
    let mut updated = session.clone();
    let j: Judgment = updated.judge(req.trial_id, side, now())?;
    study.append(&LogRecord::Judgment {
        session_id: id.clone(),
        trial: j.trial,
        chosen: side.name().into(),
        correct: j.correct,
        timestamp: j.timestamp,
    })?;
    study.tally.record(&j);
    let remaining = updated.trials.len() - updated.judged();
    let done = updated.is_finished();
    let correct = done.then(|| updated.judgments().filter(|j| j.correct).count());
    let total = done.then_some(updated.trials.len());
    study.sessions.insert(id, updated);
    Ok(Json(Submitted {
        remaining,
        correct,
        total,
    }))
}

#[derive(Debug, Deserialize)]
pub struct StatsQuery {
    pub condition: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsRow {
    pub rater: String,
    pub tp: u64,
    pub fp: u64,
    pub p: Option<f64>,
    pub deviation: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatsView {
    pub condition: String,
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
}

async fn stats(State(state): State<SharedStudy>, Query(q): Query<StatsQuery>) -> ApiResult<Json<StatsView>> {
    let c = StudyCondition::parse(&q.condition)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown condition `{}`", q.condition)))?;
    let s = compute_stats(&lock(&state).tally.rows(c));
    Ok(Json(StatsView {
        condition: c.name().into(),
        rows: s
            .rows
            .into_iter()
            .map(|r| StatsRow {
                rater: r.rater,
                tp: r.tp,
                fp: r.fp,
                p: r.p,
                deviation: r.deviation,
            })
            .collect(),
        total: StatsRow {
            rater: "total".into(),
            tp: s.total.tp,
            fp: s.total.fp,
            p: s.total.p,
            deviation: s.total.deviation,
        },
    }))
}

async fn image(State(state): State<SharedStudy>, UrlPath(r): UrlPath<String>) -> ApiResult<Response> {
    let path = lock(&state)
        .files
        .get(&r)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown image"))?;
    let bytes = fs::read(&path).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

pub fn router(state: SharedStudy) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_trial))
        .route("/sessions/{id}/judgments", post(submit))
        .route("/stats", get(stats))
        .route("/images/{ref}", get(image))
        .with_state(state)
}

/// Binds the listener; an occupied port is a startup error.
pub async fn bind(cfg: &ServeConfig) -> AppResult<tokio::net::TcpListener> {
    let addr = format!("{}:{}", cfg.host, cfg.port);
    tokio::net::TcpListener::bind(&addr).await.map_err(|e| AppError::io(&addr, e))
}

pub async fn serve(listener: tokio::net::TcpListener, study: Study) -> AppResult<()> {
    let addr = listener.local_addr().map_err(|e| AppError::io("listener", e))?;
    log::info!("study service listening on {addr}");
    axum::serve(listener, router(Arc::new(Mutex::new(study))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| AppError::io(addr.to_string(), e))
}
