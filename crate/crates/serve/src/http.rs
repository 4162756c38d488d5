use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use pulsestream_pipeline::clock::{now_seconds, Clock, SystemClock};
use pulsestream_pipeline::ingest::FigureConfig;
use pulsestream_pipeline::store::Store;
use serde::Serialize;
use tokio::net::TcpListener;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::aggregate::{aggregate, parse_bound, AggregateError};
use crate::Model;

struct Inner {
    figures: Vec<FigureConfig>,
    store: Arc<Store>,
    model: RwLock<Option<Arc<Model>>>,
    clock: Arc<dyn Clock>,
}

/// Everything the handlers and the scoring worker share.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(figures: Vec<FigureConfig>, store: Arc<Store>, model: Option<Model>) -> Self {
        Self::with_clock(figures, store, model, Arc::new(SystemClock))
    }

    pub fn with_clock(figures: Vec<FigureConfig>, store: Arc<Store>, model: Option<Model>, clock: Arc<dyn Clock>) -> Self {
        AppState {
            inner: Arc::new(Inner { figures, store, model: RwLock::new(model.map(Arc::new)), clock }),
        }
    }

    pub fn figures(&self) -> &[FigureConfig] {
        &self.inner.figures
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.inner.clock.clone()
    }

    pub fn model(&self) -> Option<Arc<Model>> {
        self.inner.model.read().unwrap().clone()
    }

    pub fn set_model(&self, model: Option<Model>) {
        *self.inner.model.write().unwrap() = model.map(Arc::new);
    }
}

#[derive(Serialize)]
struct FigureSummary<'a> {
    figure_id: &'a str,
    display_name: &'a str,
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    records: u64,
    model_version: Option<String>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn figures(State(state): State<AppState>) -> Response {
    let list: Vec<_> = state
        .figures()
        .iter()
        .map(|f| FigureSummary { figure_id: &f.figure_id, display_name: &f.display_name })
        .collect();
    Json(list).into_response()
}

async fn sentiment(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    let Some(figure) = params.get("figure").cloned() else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter \"figure\"");
    };
    let as_of = now_seconds(&*state.clock());
    let bound = |name: &str, end: bool, default: DateTime<Utc>| match params.get(name) {
        None => Ok(default),
        Some(s) => parse_bound(s, end).ok_or_else(|| format!("malformed date in \"{name}\": {s:?}")),
    };
    let (from, to) = match (bound("from", false, DateTime::UNIX_EPOCH), bound("to", true, as_of)) {
        (Ok(f), Ok(t)) => (f, t),
        (Err(e), _) | (_, Err(e)) => return error(StatusCode::BAD_REQUEST, e),
    };
    let result = tokio::task::spawn_blocking(move || aggregate(state.store(), state.figures(), &figure, from, to, as_of)).await;
    match result {
        Ok(Ok(agg)) => Json(agg).into_response(),
        Ok(Err(e @ AggregateError::NotFound(_))) => error(StatusCode::NOT_FOUND, e.to_string()),
        Ok(Err(e @ AggregateError::InvalidArgument(_))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(state): State<AppState>) -> Response {
    let model_version = state.model().map(|m| m.version().to_string());
    Json(Health {
        status: if model_version.is_some() { "ok" } else { "degraded" },
        records: state.store().record_count(),
        model_version,
    })
    .into_response()
}

/// API routes, plus the dashboard's static files at `/` when `static_dir`
/// is given. CORS allows GET from any origin so the dashboard can also be
/// hosted elsewhere.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/figures", get(figures))
        .route("/api/sentiment", get(sentiment))
        .route("/api/health", get(health))
        .layer(CorsLayer::new().allow_origin(Any).allow_methods([Method::GET]))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Serve on an already bound listener until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    static_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir)).with_graceful_shutdown(shutdown).await
}
