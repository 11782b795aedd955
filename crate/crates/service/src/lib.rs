//! HTTP/JSON front end over a fitted model bundle.
//!
//! All handlers are read-only views of the current bundle. Replacing the
//! bundle swaps one `Arc`, so in-flight requests finish on the version they
//! started with.

use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use decomp_core::api::{
    self, BeforeAfterRequest, BeforeAfterResponse, BudgetCaps, EigRequest, EigResponse, PredictRequest, SchemaInfo,
};
use decomp_core::bundle::ModelBundle;
use decomp_core::data_io::EffectsTable;
use decomp_core::error::Error;
use decomp_core::parallel::Execution;
use decomp_core::pmi::PmiReport;

pub const PORT_ENV: &str = "DECOMP_PORT";
pub const MODEL_DIR_ENV: &str = "DECOMP_MODEL_DIR";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Clone)]
pub struct AppState {
    bundle: Arc<RwLock<Option<Arc<ModelBundle>>>>,
    pub caps: BudgetCaps,
    pub execution: Execution,
}

impl AppState {
    pub fn new(bundle: Option<ModelBundle>) -> Self {
        Self {
            bundle: Arc::new(RwLock::new(bundle.map(Arc::new))),
            caps: BudgetCaps::SERVICE,
            execution: Execution::Parallel,
        }
    }

    /// Install a new bundle; returns the previous one.
    pub fn replace(&self, bundle: ModelBundle) -> Option<Arc<ModelBundle>> {
        let mut slot = self.bundle.write().unwrap_or_else(|e| e.into_inner());
        slot.replace(Arc::new(bundle))
    }

    pub fn current(&self) -> Option<Arc<ModelBundle>> {
        self.bundle.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn require(&self) -> Result<Arc<ModelBundle>, ApiError> {
        self.current().ok_or(ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            body: ErrorBody {
                error: "model not loaded".into(),
                field: None,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Field { .. }
            | Error::UnknownLevel { .. }
            | Error::UnknownName(_)
            | Error::Invalid(_)
            | Error::Parse(_)
            | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::Budget(_) => StatusCode::PAYLOAD_TOO_LARGE,
            Error::Diagnostics(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let field = match &e {
            Error::Field { field, .. } => Some(field.clone()),
            _ => None,
        };
        ApiError {
            status,
            body: ErrorBody {
                error: e.to_string(),
                field,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Run blocking numerical work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> decomp_core::error::Result<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                error: format!("worker failed: {e}"),
                field: None,
            },
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub model_version: Option<String>,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let bundle = state.current();
    Json(Health {
        status: "ok".into(),
        model_loaded: bundle.is_some(),
        model_version: bundle.map(|b| b.manifest.version.clone()),
    })
}

async fn schema(State(state): State<AppState>) -> ApiResult<SchemaInfo> {
    let bundle = state.require()?;
    Ok(Json(api::schema_info(&bundle, state.caps)))
}

async fn predict_pmi(State(state): State<AppState>, body: Result<Json<PredictRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult<PmiReport> {
    let bundle = state.require()?;
    let Json(request) = body.map_err(rejection)?;
    blocking(move || api::predict_pmi(&bundle, &request)).await
}

async fn eig(State(state): State<AppState>, body: Result<Json<EigRequest>, axum::extract::rejection::JsonRejection>) -> ApiResult<EigResponse> {
    let bundle = state.require()?;
    let Json(request) = body.map_err(rejection)?;
    // reject oversized budgets before queueing any work
    state.caps.check(&request.budget, request.designs.len())?;
    let (caps, exec) = (state.caps, state.execution);
    blocking(move || api::eig_scan(&bundle, &request, caps, exec)).await
}

async fn before_after(
    State(state): State<AppState>,
    body: Result<Json<BeforeAfterRequest>, axum::extract::rejection::JsonRejection>,
) -> ApiResult<BeforeAfterResponse> {
    let bundle = state.require()?;
    let Json(request) = body.map_err(rejection)?;
    blocking(move || api::before_after(&bundle, &request)).await
}

#[derive(Debug, Deserialize)]
struct EffectsQuery {
    quantiles: Option<String>,
}

async fn effects(State(state): State<AppState>, Query(q): Query<EffectsQuery>) -> ApiResult<EffectsTable> {
    let bundle = state.require()?;
    let quantiles = api::parse_quantiles(q.quantiles.as_deref())?;
    blocking(move || api::effects(&bundle, &quantiles)).await
}

fn rejection(e: axum::extract::rejection::JsonRejection) -> ApiError {
    ApiError {
        status: StatusCode::BAD_REQUEST,
        body: ErrorBody {
            error: e.body_text(),
            field: None,
        },
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/schema", get(schema))
        .route("/v1/predict-pmi", post(predict_pmi))
        .route("/v1/eig", post(eig))
        .route("/v1/before-after", post(before_after))
        .route("/v1/effects", get(effects))
        .with_state(state)
}

/// Bind and serve until ctrl-c.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
