//! HTTP/JSON front end of the simulator.
//!
//! | method | path              | body                | response             |
//! |--------|-------------------|---------------------|----------------------|
//! | GET    | `/healthz`        |                     | `ok`                 |
//! | GET    | `/v1/runs`        |                     | `[RunRecord]`        |
//! | POST   | `/v1/transmit`    | `TransmitRequest`   | `TransmitResponse`   |
//! | POST   | `/v1/sweep`       | `SweepRequest`      | `CurveData`          |
//! | POST   | `/v1/composite`   | `ConfigRequest`     | `CompositeResponse`  |
//! | POST   | `/v1/reconstruct` | `ConfigRequest`     | `ReconstructResponse`|
//! | POST   | `/v1/pipeline`    | `PipelineRequest`   | `PipelineResponse`   |
//! | POST   | `/v1/compare`     | `ConfigRequest`     | `ComparisonReport`   |
//!
//! Simulations run on the blocking thread pool. Errors come back as
//! `{"error": "..."}` with status 400 for bad input and 500 otherwise.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ceesim_core::api::{
    CompositeResponse, ConfigRequest, EncodedVideo, ErrorBody, PipelineRequest, PipelineResponse,
    ReconstructResponse, RunRecord, SweepRequest, TransmitRequest, TransmitResponse,
};
use ceesim_core::pipeline::{
    compare_baselines, composite_inputs, reconstruct_benchmark, run_service, snr_sweep, transmit_clip,
    ComparisonReport, CurveData, ServiceRequest,
};
use ceesim_core::Error;
use serde::Serialize;
use tokio::net::TcpListener;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::Empty(_)
            | Error::FrameTooSmall { .. }
            | Error::CorruptVideo(_)
            | Error::Config(_)
            | Error::Io(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

/// Shared state: the run log is the only structure requests synchronize on.
#[derive(Default)]
pub struct AppState {
    runs: Mutex<Vec<RunRecord>>,
    next_id: AtomicU64,
}

impl AppState {
    fn record(&self, operation: &str, seed: u64, outcome: Result<Option<String>, &ApiError>) {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        let (ok, error, summary) = match outcome {
            Ok(summary) => (true, None, summary),
            Err(e) => (false, Some(e.message.clone()), None),
        };
        let rec = RunRecord {
            id,
            operation: operation.to_string(),
            seed,
            ok,
            error,
            summary,
        };
        self.runs.lock().expect("run log poisoned").push(rec);
    }

    pub fn runs(&self) -> Vec<RunRecord> {
        let mut runs = self.runs.lock().expect("run log poisoned").clone();
        runs.sort_by_key(|r| r.id);
        runs
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs `job` on the blocking pool and logs the outcome.
async fn blocking<T, F, S>(state: &AppState, operation: &str, seed: u64, job: F, summarize: S) -> ApiResult<T>
where
    T: Serialize + Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    S: FnOnce(&T) -> Option<String>,
{
    tracing::info!(operation, seed, "run started");
    let result = match tokio::task::spawn_blocking(job).await {
        Ok(r) => r,
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: format!("simulation task failed: {e}"),
        }),
    };
    match &result {
        Ok(v) => state.record(operation, seed, Ok(summarize(v))),
        Err(e) => {
            tracing::warn!(operation, error = %e.message, "run failed");
            state.record(operation, seed, Err(e));
        }
    }
    result.map(Json)
}

async fn healthz() -> &'static str {
    "ok"
}

async fn list_runs(State(state): State<Arc<AppState>>) -> Json<Vec<RunRecord>> {
    Json(state.runs())
}

async fn transmit(
    State(state): State<Arc<AppState>>,
    body: Result<Json<TransmitRequest>, JsonRejection>,
) -> ApiResult<TransmitResponse> {
    let Json(req) = body?;
    let seed = req.config.seed;
    let job = move || {
        let snr_db = req.snr_db.unwrap_or(req.config.channel.snr_db);
        let (out, quality) = transmit_clip(&req.config, req.chain, snr_db, req.source)?;
        Ok(TransmitResponse {
            chain: req.chain,
            snr_db,
            stats: out.stats,
            quality,
            video: EncodedVideo::encode(&out.video),
        })
    };
    blocking(&state, "transmit", seed, job, |r| {
        Some(format!(
            "{} {:.2} dB, {} air bits",
            r.chain, r.quality.psnr_db, r.stats.air_bits
        ))
    })
    .await
}

async fn sweep(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SweepRequest>, JsonRejection>,
) -> ApiResult<CurveData> {
    let Json(req) = body?;
    let seed = req.config.seed;
    let job = move || {
        let snrs = req.snr_db.unwrap_or_else(|| req.config.sweep.snr_db.clone());
        Ok(snr_sweep(&req.config, &snrs)?)
    };
    blocking(&state, "sweep", seed, job, |c| {
        Some(format!("{} rows", c.rows.len()))
    })
    .await
}

async fn composite(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ConfigRequest>, JsonRejection>,
) -> ApiResult<CompositeResponse> {
    let Json(req) = body?;
    let seed = req.config.seed;
    let job = move || {
        let out = composite_inputs(&req.config)?;
        Ok(CompositeResponse {
            metrics: out.metrics,
            video: EncodedVideo::encode(&out.video),
        })
    };
    blocking(&state, "composite", seed, job, |r| {
        r.metrics.get("matte_iou").map(|v| format!("matte IoU {v:.3}"))
    })
    .await
}

async fn reconstruct(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ConfigRequest>, JsonRejection>,
) -> ApiResult<ReconstructResponse> {
    let Json(req) = body?;
    let seed = req.config.benchmark.scene.seed;
    let job = move || {
        req.config.validate()?;
        let out = reconstruct_benchmark(&req.config.benchmark)?;
        Ok(ReconstructResponse {
            metrics: out.metrics,
            rendered: EncodedVideo::encode(&out.rendered),
            scene: out.scene,
            loss_history: out.report.history,
        })
    };
    blocking(&state, "reconstruct", seed, job, |r| {
        Some(format!(
            "held-out {:.2} dB, EPE {:.4}, PCK {:.2}",
            r.metrics.heldout_psnr_db, r.metrics.center_epe, r.metrics.center_pck
        ))
    })
    .await
}

async fn pipeline(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PipelineRequest>, JsonRejection>,
) -> ApiResult<PipelineResponse> {
    let Json(req) = body?;
    let seed = req.config.seed;
    let job = move || {
        let out = run_service(&ServiceRequest { chain: req.chain }, &req.config)?;
        Ok(PipelineResponse {
            report: out.report,
            composite: out.composite.as_ref().map(EncodedVideo::encode),
            delivered: out.delivered.as_ref().map(EncodedVideo::encode),
        })
    };
    blocking(&state, "pipeline", seed, job, |r| {
        Some(format!(
            "{} {}, total {:.3} s",
            r.report.chain,
            if r.report.completed { "completed" } else { "failed" },
            r.report.totals.total_s
        ))
    })
    .await
}

async fn compare(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ConfigRequest>, JsonRejection>,
) -> ApiResult<ComparisonReport> {
    let Json(req) = body?;
    let seed = req.config.seed;
    let job = move || Ok(compare_baselines(&req.config)?);
    blocking(&state, "compare", seed, job, |r| {
        Some(format!("delay reduction {:.2}%", r.delay_reduction_pct))
    })
    .await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/runs", get(list_runs))
        .route("/v1/transmit", post(transmit))
        .route("/v1/sweep", post(sweep))
        .route("/v1/composite", post(composite))
        .route("/v1/reconstruct", post(reconstruct))
        .route("/v1/pipeline", post(pipeline))
        .route("/v1/compare", post(compare))
        .with_state(state)
}

/// Serves on `listener` until the future is dropped or the process exits.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(AppState::default()))).await
}

/// Binds an ephemeral local port and serves in the background. Returns the
/// base URL. Used by tests and embedding callers.
pub async fn spawn_local() -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok(format!("http://{addr}"))
}
