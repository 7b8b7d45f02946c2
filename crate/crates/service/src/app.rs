//! HTTP layer over [`Session`]: routing, JSON bodies, and error mapping.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

use crate::error::{ServiceError, ServiceResult};
use crate::session::{CreateSession, Session, SessionMode, SessionState, SessionView, SubmitResponse};
use crate::store::Store;

pub const DEFAULT_MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ServiceError::BadRequest(_) | ServiceError::Core(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::Io(_) | ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = serde_json::json!({"error": kind, "message": self.to_string()});
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<Mutex<Session>>;

pub struct AppState {
    store: Store,
    sessions: RwLock<BTreeMap<String, Shared>>,
}

impl AppState {
    /// Rebuilds every logged session by replaying its responses.
    pub fn recover(store: Store) -> ServiceResult<Self> {
        let mut sessions = BTreeMap::new();
        for logged in store.load()? {
            let mut session = Session::create(logged.id.clone(), logged.request)?;
            for r in logged.responses {
                session.apply(r)?;
            }
            sessions.insert(logged.id, Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            store,
            sessions: RwLock::new(sessions),
        })
    }

    fn session(&self, id: &str) -> ServiceResult<Shared> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.into()))
    }

    pub fn create(&self, mut request: CreateSession) -> ServiceResult<SessionView> {
        request.seed.get_or_insert_with(rand::random);
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::create(id.clone(), request)?;
        self.store.create(&id, session.request())?;
        let view = session.view();
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    /// Logs a response before applying it, so whatever was acknowledged
    /// survives a restart.
    pub fn submit(&self, id: &str, response: SubmitResponse) -> ServiceResult<SessionView> {
        let shared = self.session(id)?;
        let mut session = shared.lock().expect("session lock");
        if session.admit(&response)? == crate::session::Submission::Applied {
            self.store.respond(id, &response)?;
            session.apply(response)?;
        }
        Ok(session.view())
    }

    pub fn view(&self, id: &str) -> ServiceResult<SessionView> {
        Ok(self.session(id)?.lock().expect("session lock").view())
    }

    pub fn transcript(&self, id: &str) -> ServiceResult<String> {
        Ok(self.session(id)?.lock().expect("session lock").transcript_json())
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let shared: Vec<Shared> = self.sessions.read().expect("session map lock").values().cloned().collect();
        shared
            .iter()
            .map(|s| {
                let v = s.lock().expect("session lock").view();
                SessionSummary {
                    id: v.id,
                    mode: v.mode,
                    concluded: matches!(v.state, SessionState::Concluded { .. }),
                    draws: v.draws,
                }
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
pub struct SessionSummary {
    pub id: String,
    pub mode: SessionMode,
    pub concluded: bool,
    pub draws: u64,
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> ServiceResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("malformed body: {e}")))
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ServiceResult<(StatusCode, Json<SessionView>)> {
    let request = parse(&body)?;
    Ok((StatusCode::CREATED, Json(app.create(request)?)))
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<Vec<SessionSummary>> {
    Json(app.list())
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ServiceResult<Json<SessionView>> {
    Ok(Json(app.view(&id)?))
}

async fn submit_response(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ServiceResult<Json<SessionView>> {
    // an unknown session is reported before the body is judged
    app.session(&id)?;
    let response = parse(&body)?;
    Ok(Json(app.submit(&id, response)?))
}

async fn get_transcript(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ServiceResult<Response> {
    let body = app.transcript(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

pub fn router(app: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/responses", post(submit_response))
        .route("/sessions/{id}/transcript", get(get_transcript))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(app)
}
