//! HTTP session service.
//!
//! Endpoints:
//! - `POST /sessions` multipart with an `image` file and optional `params`
//!   JSON `{"v": 1, "bbox": [x0, y0, x1, y1], "config": {...}}`
//! - `POST /sessions/{id}/scribbles` stroke document
//! - `GET /sessions/{id}/mask` PNG, or `?format=rle` for run lengths
//! - `GET /sessions/{id}` status
//! - `DELETE /sessions/{id}`
//! - `GET /healthz`
//!
//! Work on one session is serialized: a request that finds the session busy
//! gets 409 instead of waiting.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use mist_core::engine::{validate_scribbles, EngineConfig, EngineError, ScribbleDocument, Session, SessionDocument};
use mist_core::graphcut::EnergyBreakdown;
use mist_core::raster::rle::MaskRle;
use mist_core::raster::{decode_raster, encode_raster, peek_dimensions, save_raster, BoundingBox, RasterFormat};

pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Idle time after which a session expires.
    pub ttl: Duration,
    /// Largest accepted image side, in pixels.
    pub max_dim: usize,
    /// Sessions are persisted here and reloaded on start.
    pub state_dir: Option<PathBuf>,
    /// Engine settings used when a request omits `config`.
    pub defaults: EngineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            ttl: Duration::from_secs(3600),
            max_dim: 4096,
            state_dir: None,
            defaults: EngineConfig::default(),
        }
    }
}

struct Slot {
    session: Arc<AsyncMutex<Session>>,
    last_access: Mutex<Instant>,
}

pub struct AppState {
    cfg: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    expired: Mutex<HashSet<String>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Gmm(_) => ApiError::internal(e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"v": API_VERSION, "error": self.code, "message": self.message});
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateParams {
    v: Option<u32>,
    bbox: Option<[usize; 4]>,
    config: Option<EngineConfig>,
}

/// Mask and energy trace after a mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskResponse {
    pub v: u32,
    pub session_id: String,
    pub width: usize,
    pub height: usize,
    pub mask: MaskRle,
    pub energy_log: Vec<EnergyBreakdown>,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub v: u32,
    pub session_id: String,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bbox: BoundingBox,
    pub config: EngineConfig,
    pub beta: f64,
    pub marker_pixels: usize,
    pub iterations_run: usize,
    pub energy_log: Vec<EnergyBreakdown>,
    pub mask: MaskRle,
}

fn mask_response(id: &str, s: &Session) -> MaskResponse {
    MaskResponse {
        v: API_VERSION,
        session_id: id.to_string(),
        width: s.width(),
        height: s.height(),
        mask: MaskRle::encode(&s.trimap().foreground()),
        energy_log: s.iteration_log().to_vec(),
        iterations_run: s.iterations_run(),
    }
}

impl AppState {
    /// Builds the state, reloading persisted sessions from the state
    /// directory. Documents that fail to load are skipped.
    pub fn new(cfg: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let mut sessions = HashMap::new();
        if let Some(dir) = &cfg.state_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                    continue;
                };
                let restored = std::fs::read_to_string(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|t| SessionDocument::from_json(&t).map_err(|e| e.to_string()))
                    .and_then(|d| Session::load_document(&d).map_err(|e| e.to_string()));
                match restored {
                    Ok(session) => {
                        sessions.insert(id, Arc::new(Slot::new(session)));
                    }
                    Err(e) => eprintln!("skipping {}: {e}", path.display()),
                }
            }
        }
        Ok(Arc::new(Self {
            cfg,
            sessions: Mutex::new(sessions),
            expired: Mutex::new(HashSet::new()),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    fn image_path(&self, id: &str) -> Option<PathBuf> {
        self.cfg.state_dir.as_ref().map(|d| d.join(format!("{id}.png")))
    }

    fn doc_path(&self, id: &str) -> Option<PathBuf> {
        self.cfg.state_dir.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    fn forget_files(&self, id: &str) {
        for p in [self.image_path(id), self.doc_path(id)].into_iter().flatten() {
            let _ = std::fs::remove_file(p);
        }
    }

    fn lookup(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        let mut sessions = self.sessions.lock().expect("store lock");
        let Some(slot) = sessions.get(id).cloned() else {
            return Err(if self.expired.lock().expect("expired lock").contains(id) {
                ApiError::new(StatusCode::NOT_FOUND, "expired", format!("session {id} expired"))
            } else {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
            });
        };
        let mut last = slot.last_access.lock().expect("access lock");
        if last.elapsed() > self.cfg.ttl {
            drop(last);
            sessions.remove(id);
            self.expired.lock().expect("expired lock").insert(id.to_string());
            self.forget_files(id);
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "expired",
                format!("session {id} expired"),
            ));
        }
        *last = Instant::now();
        drop(last);
        Ok(slot)
    }

    /// Drops every session idle for longer than the TTL.
    pub fn sweep(&self) {
        let mut sessions = self.sessions.lock().expect("store lock");
        let stale: Vec<String> = sessions
            .iter()
            .filter(|(_, s)| s.last_access.lock().expect("access lock").elapsed() > self.cfg.ttl)
            .map(|(id, _)| id.clone())
            .collect();
        for id in stale {
            sessions.remove(&id);
            self.forget_files(&id);
            self.expired.lock().expect("expired lock").insert(id);
        }
    }

    fn persist(&self, id: &str, session: &Session) -> Result<(), ApiError> {
        if let (Some(img), Some(doc)) = (self.image_path(id), self.doc_path(id)) {
            if !img.exists() {
                save_raster(session.image(), &img).map_err(|e| ApiError::internal(e.to_string()))?;
            }
            let text = session.to_document(&img).to_json();
            // write-then-rename so a crash never leaves half a document
            let tmp = doc.with_extension("json.tmp");
            std::fs::write(&tmp, text)
                .and_then(|_| std::fs::rename(&tmp, &doc))
                .map_err(|e| ApiError::internal(e.to_string()))?;
        }
        Ok(())
    }
}

impl Slot {
    fn new(session: Session) -> Self {
        Self {
            session: Arc::new(AsyncMutex::new(session)),
            last_access: Mutex::new(Instant::now()),
        }
    }

    fn try_acquire(&self, id: &str) -> Result<OwnedMutexGuard<Session>, ApiError> {
        self.session.clone().try_lock_owned().map_err(|_| {
            ApiError::new(
                StatusCode::CONFLICT,
                "busy",
                format!("session {id} is processing another request"),
            )
        })
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn create_session(State(state): State<Arc<AppState>>, mut multipart: Multipart) -> Result<Response, ApiError> {
    let mut image: Option<Bytes> = None;
    let mut params = CreateParams::default();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("multipart: {e}")))?
    {
        match field.name() {
            Some("image") => {
                image = Some(
                    field
                        .bytes()
                        .await
                        .map_err(|e| ApiError::bad_request(format!("image: {e}")))?,
                );
            }
            Some("params") => {
                let text = field
                    .text()
                    .await
                    .map_err(|e| ApiError::bad_request(format!("params: {e}")))?;
                params = serde_json::from_str(&text).map_err(|e| ApiError::bad_request(format!("params: {e}")))?;
            }
            other => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }
    if let Some(v) = params.v {
        if v != API_VERSION {
            return Err(ApiError::bad_request(format!("unsupported params version {v}")));
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing image field"))?;
    let (w, h) = peek_dimensions(&image).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let max = state.cfg.max_dim;
    if w > max || h > max {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "too_large",
            format!("{w}x{h} exceeds the {max}x{max} limit"),
        ));
    }
    let bbox = match params.bbox {
        Some([x0, y0, x1, y1]) => {
            BoundingBox::new(x0, y0, x1, y1, w, h).map_err(|e| ApiError::bad_request(e.to_string()))?
        }
        None => BoundingBox::full(w, h),
    };
    let cfg = params.config.unwrap_or_else(|| state.cfg.defaults.clone());
    let session = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let img = decode_raster(&image).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let mut s = Session::start(img, bbox, cfg)?;
        s.run()?;
        Ok(s)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let id = uuid::Uuid::new_v4().to_string();
    state.persist(&id, &session)?;
    let body = mask_response(&id, &session);
    state
        .sessions
        .lock()
        .expect("store lock")
        .insert(id.clone(), Arc::new(Slot::new(session)));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn post_scribbles(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> Result<Json<MaskResponse>, ApiError> {
    let slot = state.lookup(&id)?;
    let doc = ScribbleDocument::from_json(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut guard = slot.try_acquire(&id)?;
    validate_scribbles(&doc.strokes, guard.width(), guard.height())
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let state2 = state.clone();
    let id2 = id.clone();
    tokio::task::spawn_blocking(move || -> Result<MaskResponse, ApiError> {
        guard.apply_scribbles(&doc.strokes)?;
        state2.persist(&id2, &guard)?;
        Ok(mask_response(&id2, &guard))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map(Json)
}

#[derive(Debug, Default, Deserialize)]
struct MaskQuery {
    format: Option<String>,
}

async fn get_mask(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<MaskQuery>,
) -> Result<Response, ApiError> {
    let slot = state.lookup(&id)?;
    let guard = slot.try_acquire(&id)?;
    let mask = guard.trimap().foreground();
    drop(guard);
    match q.format.as_deref() {
        None | Some("png") => {
            let png =
                encode_raster(&mask.to_raster(), RasterFormat::Png).map_err(|e| ApiError::internal(e.to_string()))?;
            Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
        }
        Some("rle") => Ok(Json(
            serde_json::json!({"v": API_VERSION, "session_id": id, "mask": MaskRle::encode(&mask)}),
        )
        .into_response()),
        Some(other) => Err(ApiError::bad_request(format!("unknown mask format {other:?}"))),
    }
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<StatusResponse>, ApiError> {
    let slot = state.lookup(&id)?;
    let s = slot.try_acquire(&id)?;
    Ok(Json(StatusResponse {
        v: API_VERSION,
        session_id: id,
        width: s.width(),
        height: s.height(),
        channels: s.image().channels(),
        bbox: s.bbox(),
        config: s.config().clone(),
        beta: s.beta(),
        marker_pixels: s.marker().count(),
        iterations_run: s.iterations_run(),
        energy_log: s.iteration_log().to_vec(),
        mask: MaskRle::encode(&s.trimap().foreground()),
    }))
}

async fn delete_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<StatusCode, ApiError> {
    let slot = state.lookup(&id)?;
    let _guard = slot.try_acquire(&id)?;
    state.sessions.lock().expect("store lock").remove(&id);
    state.forget_files(&id);
    Ok(StatusCode::NO_CONTENT)
}

/// Request bodies above this many bytes are refused outright.
const BODY_LIMIT: usize = 256 << 20;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/scribbles", post(post_scribbles))
        .route("/sessions/{id}/mask", get(get_mask))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serves until the process is interrupted.
pub async fn serve(cfg: ServiceConfig, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(cfg)?;
    let sweeper = state.clone();
    let period = state.cfg.ttl.clamp(Duration::from_millis(100), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            sweeper.sweep();
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Path of the persisted document for `id` under `dir`.
pub fn document_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}
