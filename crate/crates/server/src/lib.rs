//! HTTP review service over a relabel store.
//!
//! Routes live under `/api/v1`. All mutating requests go through one mutex so
//! leasing and submission are linearizable; every recorded decision is
//! appended to the round's `review-log.jsonl` before the response is sent,
//! and a restarted service replays that log.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use relabel_core::review::{ReviewRound, ReviewService, RoundStats, SubmitOutcome};
use relabel_core::{jsonl, Error, ReviewDecision, ReviewTask, Store};
use serde::{Deserialize, Serialize};

/// Source of "now" for lease bookkeeping; tests substitute a manual clock.
pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

struct Inner {
    store: Store,
    service: Mutex<ReviewService>,
    clock: Clock,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Load every round of the store at `root`: applied rounds are closed,
    /// the open round keeps its persisted review log and closed marker.
    pub fn load(root: &Path, clock: Clock) -> relabel_core::Result<Self> {
        let store = Store::read_only(root);
        let state = store.load_state()?;
        let mut service = ReviewService::new();
        let mut parent = state.initial_version.clone();
        for record in &state.history {
            let version = store.load_version(&parent)?;
            let mut round = ReviewRound::new(record.round, &version, store.read_queue(record.round)?);
            for d in store.read_review_log(record.round)? {
                round.restore(d);
            }
            round.close();
            service.insert_round(round);
            parent = record.version_id.clone();
        }
        if let Some(open) = &state.open_round {
            let version = store.load_version(&state.current_version)?;
            let mut round = ReviewRound::new(open.round, &version, store.read_queue(open.round)?);
            for d in store.read_review_log(open.round)? {
                round.restore(d);
            }
            if store.is_closed(open.round) {
                round.close();
            }
            service.insert_round(round);
        }
        Ok(Self::from_service(store, service, clock))
    }

    pub fn from_service(store: Store, service: ReviewService, clock: Clock) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store,
                service: Mutex::new(service),
                clock,
            }),
        }
    }

    fn now(&self) -> DateTime<Utc> {
        (self.inner.clock)()
    }

    fn service(&self) -> MutexGuard<'_, ReviewService> {
        // a panic while holding the lock cannot leave the service half-updated
        // in a way later requests would misread, so poisoning is ignored
        self.inner.service.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/queue/next", get(queue_next))
        .route("/decision", post(submit_decision))
        .route("/rounds/{n}/stats", get(round_stats))
        .route("/rounds/{n}/export", get(export_round))
        .route("/rounds/{n}/close", post(close_round));
    Router::new().nest("/api/v1", api).with_state(state)
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub outcome: SubmitOutcome,
    pub item_id: String,
    pub round: u32,
}

struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Leased { .. } | Error::RoundClosed(_) | Error::RoundOpen(_) | Error::StaleRound { .. } | Error::NoOpenRound => {
                StatusCode::CONFLICT
            }
            Error::UnknownRound(_) => StatusCode::NOT_FOUND,
            e if e.is_validation() => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

async fn queue_next(State(app): State<AppState>, query: Result<Query<NextQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = query.map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    if q.annotator.trim().is_empty() {
        return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, "annotator must not be empty".into()));
    }
    let task: Option<ReviewTask> = app.service().lease_next(&q.annotator, app.now())?;
    Ok(match task {
        Some(task) => Json(task).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_decision(
    State(app): State<AppState>,
    body: Result<Json<ReviewDecision>, JsonRejection>,
) -> ApiResult<Json<Ack>> {
    let Json(decision) = body.map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let ack = Ack {
        outcome: SubmitOutcome::Recorded,
        item_id: decision.item_id.clone(),
        round: decision.round,
    };
    let mut service = app.service();
    let now = app.now();
    let round = service.round(decision.round).map_err(|_| Error::StaleRound {
        requested: decision.round,
        open: service.open_round(),
    })?;
    let outcome = round.check(&decision, now)?;
    if outcome == SubmitOutcome::Recorded {
        // persist first: an acknowledged decision must survive a restart
        let store = &app.inner.store;
        store.ensure_round_dir(decision.round)?;
        jsonl::append_record(&store.review_log_path(decision.round), &decision)?;
    }
    let outcome = service.submit(decision, now)?;
    Ok(Json(Ack { outcome, ..ack }))
}

async fn round_stats(State(app): State<AppState>, UrlPath(n): UrlPath<u32>) -> ApiResult<Json<RoundStats>> {
    Ok(Json(app.service().round_stats(n, app.now())?))
}

async fn export_round(State(app): State<AppState>, UrlPath(n): UrlPath<u32>) -> ApiResult<Response> {
    let decisions = app.service().resolve_decisions(n)?;
    let body = jsonl::render_records(&decisions)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// Stop accepting decisions for round `n`; idempotent.
async fn close_round(State(app): State<AppState>, UrlPath(n): UrlPath<u32>) -> ApiResult<Json<RoundStats>> {
    let mut service = app.service();
    let round = service.round_mut(n)?;
    if !round.is_closed() {
        app.inner.store.mark_closed(n)?;
        round.close();
    }
    Ok(Json(round.stats(app.now())))
}
