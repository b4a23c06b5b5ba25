//! HTTP facade over the crowd store. Every body is JSON carrying `"v": 1`.
//!
//! All handlers take the store's lock, so submissions and servings are
//! serialised and two workers can never both claim a task's second slot.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ordinal_depth::crowd::{Answer, Choice, CrowdError, Store, TaskId};
use ordinal_depth::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const WIRE_VERSION: u32 = 1;

pub struct AppState {
    pub store: Mutex<Store>,
    /// Directory holding `<image_id>.png`.
    pub images: PathBuf,
}

impl AppState {
    pub fn new(store: Store, images: PathBuf) -> Arc<Self> {
        Arc::new(Self {
            store: Mutex::new(store),
            images,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/task", get(get_task))
        .route("/api/answer", post(post_answer))
        .route("/api/stats", get(stats))
        .route("/img/{id}", get(image))
        .with_state(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEnvelope {
    pub v: u32,
    pub task: TaskId,
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub p1: Point,
    pub p2: Point,
    pub token: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerBody {
    pub v: u32,
    pub worker: String,
    pub task: TaskId,
    pub choice: i64,
    pub response_ms: u64,
    #[serde(default)]
    pub token: Option<u64>,
}

fn error(status: StatusCode, msg: impl std::fmt::Display) -> Response {
    (status, Json(json!({"v": WIRE_VERSION, "error": msg.to_string()}))).into_response()
}

fn crowd_status(e: &Error) -> StatusCode {
    match e {
        Error::Crowd(CrowdError::UnknownWorker(_) | CrowdError::WorkerRejected(_)) => StatusCode::FORBIDDEN,
        Error::Crowd(
            CrowdError::DuplicateAnswer { .. }
            | CrowdError::NotServed { .. }
            | CrowdError::BadToken { .. }
            | CrowdError::UnknownTask(_),
        ) => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn register(State(app): State<Arc<AppState>>) -> Response {
    let mut store = app.store.lock().expect("store lock");
    match store.register_worker() {
        Ok(worker) => Json(json!({"v": WIRE_VERSION, "worker": worker})).into_response(),
        Err(e) => error(crowd_status(&e), e),
    }
}

#[derive(Deserialize)]
struct TaskQuery {
    worker: Option<String>,
}

async fn get_task(State(app): State<Arc<AppState>>, Query(q): Query<TaskQuery>) -> Response {
    let Some(worker) = q.worker else {
        return error(StatusCode::BAD_REQUEST, "missing worker parameter");
    };
    let mut store = app.store.lock().expect("store lock");
    match store.next_task(&worker) {
        Ok(Some((id, token))) => {
            let t = store.task(id).expect("served task exists");
            Json(TaskEnvelope {
                v: WIRE_VERSION,
                task: id,
                image: format!("/img/{}", t.image.id),
                width: t.image.width,
                height: t.image.height,
                p1: Point { x: t.p1.col, y: t.p1.row },
                p2: Point { x: t.p2.col, y: t.p2.row },
                token,
            })
            .into_response()
        }
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(crowd_status(&e), e),
    }
}

async fn post_answer(State(app): State<Arc<AppState>>, body: Bytes) -> Response {
    let body: AnswerBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed answer: {e}")),
    };
    if body.v != WIRE_VERSION {
        return error(StatusCode::BAD_REQUEST, format!("unsupported version {}", body.v));
    }
    let Some(choice) = Choice::from_code(body.choice) else {
        return error(StatusCode::BAD_REQUEST, format!("choice {} is not 1, 2 or 3", body.choice));
    };
    let answer = Answer {
        worker: body.worker,
        task: body.task,
        choice,
        response_ms: body.response_ms,
        timestamp: now_ms(),
    };
    let mut store = app.store.lock().expect("store lock");
    match store.submit_answer(answer, body.token) {
        Ok(out) => Json(json!({
            "v": WIRE_VERSION,
            "task_state": out.task_state,
            "worker_status": out.worker_status,
        }))
        .into_response(),
        Err(e) => error(crowd_status(&e), e),
    }
}

async fn stats(State(app): State<Arc<AppState>>) -> Response {
    let stats = app.store.lock().expect("store lock").stats();
    let mut body = serde_json::to_value(stats).expect("stats serialise");
    body["v"] = json!(WIRE_VERSION);
    Json(body).into_response()
}

fn valid_image_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

async fn image(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    if !valid_image_id(&id) {
        return error(StatusCode::BAD_REQUEST, "invalid image id");
    }
    match tokio::fs::read(app.images.join(format!("{id}.png"))).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, format!("no image {id}")),
    }
}
