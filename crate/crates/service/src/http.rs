//! JSON API over the pipeline. Handlers only decode requests, call into
//! `relq` on the blocking pool and map outcomes to status codes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use relq::{
    run_query, run_ra, Catalog, Database, FailureKind, FewShotExample, Provider, QueryOutcome, RunOptions, Stage,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const DEFAULT_PORT: u16 = 8080;

/// Everything a request may read. Loaded once, never mutated.
pub struct AppState {
    pub catalog: Catalog,
    pub database: Database,
    pub provider: Box<dyn Provider>,
    pub example_pool: Vec<FewShotExample>,
    pub optimize: bool,
    pub model: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    query: String,
    #[serde(default)]
    shots: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RaBody {
    ra: String,
}

/// `allowed_origin` of `None` allows any origin.
pub fn router(state: Arc<AppState>, allowed_origin: Option<HeaderValue>) -> Router {
    let origin = match allowed_origin {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/schema", get(schema))
        .route("/api/query", post(query))
        .route("/api/ra/execute", post(execute_ra))
        .layer(cors)
        .with_state(state)
}

async fn health() -> &'static str {
    "ok"
}

/// Catalog structure plus the exact text the model sees. No row data.
pub fn schema_body(catalog: &Catalog) -> Value {
    let doc: Value = serde_json::from_str(&catalog.to_json()).expect("catalog json is valid");
    json!({
        "catalog": doc,
        "prompt": relq::render_schema_prompt(catalog),
    })
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(schema_body(&state.catalog))
}

fn bad_request(message: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": message.into() }))).into_response()
}

fn decode<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("malformed body: {e}")))
}

/// Status for a natural-language query outcome.
pub fn query_status(outcome: &QueryOutcome) -> StatusCode {
    match outcome {
        QueryOutcome::Answered { .. } => StatusCode::OK,
        QueryOutcome::Rejected { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        QueryOutcome::Failed { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

/// Status for expert RA: mistakes in the submitted text are the client's.
pub fn ra_status(outcome: &QueryOutcome) -> StatusCode {
    match outcome {
        QueryOutcome::Failed {
            kind: FailureKind::Execution,
            stage: Stage::Execute,
            ..
        } => StatusCode::INTERNAL_SERVER_ERROR,
        QueryOutcome::Failed { .. } => StatusCode::BAD_REQUEST,
        other => query_status(other),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({ "error": format!("worker failed: {e}") })),
        )
            .into_response()
    })
}

async fn query(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: QueryBody = match decode(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.query.trim().is_empty() {
        return bad_request("query is empty");
    }
    if req.shots > state.example_pool.len() {
        return bad_request(format!(
            "shots must be at most {}",
            state.example_pool.len()
        ));
    }
    let outcome = blocking(move || {
        let options = RunOptions {
            examples: state.example_pool[..req.shots].to_vec(),
            optimize: state.optimize,
            model: state.model.clone(),
        };
        run_query(&req.query, &state.catalog, &state.database, state.provider.as_ref(), &options)
    })
    .await;
    match outcome {
        Ok(o) => (query_status(&o), Json(o)).into_response(),
        Err(resp) => resp,
    }
}

async fn execute_ra(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: RaBody = match decode(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let outcome = blocking(move || run_ra(&req.ra, &state.catalog, &state.database, state.optimize)).await;
    match outcome {
        Ok(o) => (ra_status(&o), Json(o)).into_response(),
        Err(resp) => resp,
    }
}

/// Binds `0.0.0.0:port` and serves until the process ends.
pub async fn serve(state: Arc<AppState>, port: u16, allowed_origin: Option<HeaderValue>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(state, allowed_origin)).await
}
