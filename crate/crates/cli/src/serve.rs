//! Online phase: answers RPC queries from a loaded model and swaps in a new
//! model whenever the file on disk is replaced.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use dheb_core::methods::named_row;
use dheb_core::FittedModel;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::store::{self, FileStamp};

/// A model as served: immutable once loaded.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: FittedModel,
    pub feature_names: Vec<String>,
    /// Increments on every successful load.
    pub version: u64,
    pub loaded_at: String,
}

impl LoadedModel {
    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, String> {
        if req.bid_unit_id.is_empty() {
            return Err("bid_unit_id must not be empty".into());
        }
        if let Some(unknown) = req.features.keys().find(|k| !self.feature_names.contains(k)) {
            return Err(format!("unknown feature `{unknown}`"));
        }
        let date = req
            .date
            .as_deref()
            .map(|d| {
                NaiveDate::parse_from_str(d, "%Y-%m-%d")
                    .map_err(|e| format!("invalid date `{d}`: {e}"))
            })
            .transpose()?;
        let row = named_row(date, &self.feature_names, |f| {
            req.features.get(f).map(String::as_str)
        });
        let (rpc, matched_depth) = self.model.predict_row_detail(&req.bid_unit_id, &row);
        Ok(PredictResponse {
            rpc,
            model_trained_at: self.model.trained_at().map(str::to_string),
            matched_depth,
            model_version: self.version,
        })
    }

    pub fn meta(&self) -> ModelMeta {
        let (n_nodes, structural_depth, training_data_range) = match &self.model {
            FittedModel::Hierarchy(m) => (
                Some(m.nodes().len()),
                Some(m.structural_depth()),
                m.training_data_range.map(|r| format!("{}..{}", r.start, r.end)),
            ),
            _ => (None, None, None),
        };
        ModelMeta {
            model_type: self.model.model_type().to_string(),
            trained_at: self.model.trained_at().map(str::to_string),
            feature_names: self.feature_names.clone(),
            n_nodes,
            structural_depth,
            training_data_range,
            model_version: self.version,
            loaded_at: self.loaded_at.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub bid_unit_id: String,
    #[serde(default)]
    pub date: Option<String>,
    #[serde(default)]
    pub features: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub rpc: f64,
    pub model_trained_at: Option<String>,
    /// Depth of the node that answered; absent for non-hierarchical models.
    pub matched_depth: Option<usize>,
    pub model_version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_type: String,
    pub trained_at: Option<String>,
    pub feature_names: Vec<String>,
    pub n_nodes: Option<usize>,
    pub structural_depth: Option<usize>,
    pub training_data_range: Option<String>,
    pub model_version: u64,
    pub loaded_at: String,
}

/// Shared pointer to the current model. Readers clone the inner `Arc` and
/// keep using that snapshot even if a swap happens mid-request.
#[derive(Debug, Clone)]
pub struct ModelSlot {
    current: Arc<RwLock<Arc<LoadedModel>>>,
    next_version: Arc<AtomicU64>,
}

impl ModelSlot {
    fn new(model: FittedModel, feature_names: Vec<String>) -> Self {
        let next_version = Arc::new(AtomicU64::new(1));
        let loaded = Self::wrap(&next_version, model, feature_names);
        Self {
            current: Arc::new(RwLock::new(Arc::new(loaded))),
            next_version,
        }
    }

    fn wrap(counter: &AtomicU64, model: FittedModel, feature_names: Vec<String>) -> LoadedModel {
        LoadedModel {
            model,
            feature_names,
            version: counter.fetch_add(1, Ordering::SeqCst),
            loaded_at: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn snapshot(&self) -> Arc<LoadedModel> {
        self.current.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn replace(&self, model: FittedModel, feature_names: Vec<String>) -> u64 {
        let loaded = Arc::new(Self::wrap(&self.next_version, model, feature_names));
        let version = loaded.version;
        *self.current.write().unwrap_or_else(|p| p.into_inner()) = loaded;
        version
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

async fn predict(State(slot): State<ModelSlot>, body: Bytes) -> Result<Json<PredictResponse>, ApiError> {
    let req: PredictRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))?;
    let model = slot.snapshot();
    model
        .predict(&req)
        .map(Json)
        .map_err(|m| ApiError(StatusCode::BAD_REQUEST, m))
}

async fn meta(State(slot): State<ModelSlot>) -> Json<ModelMeta> {
    Json(slot.snapshot().meta())
}

pub fn router(slot: ModelSlot) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/model/meta", get(meta))
        .with_state(slot)
}

/// Polls `path` and loads whatever new file appears there. A file that
/// fails to load is logged and skipped; the previous model keeps serving.
async fn watch(path: PathBuf, slot: ModelSlot, mut seen: Option<FileStamp>, every: Duration) {
    let mut tick = tokio::time::interval(every);
    tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tick.tick().await;
        let now = match store::stamp(&path) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("model file {} unavailable: {e}", path.display());
                continue;
            }
        };
        if seen == Some(now) {
            continue;
        }
        seen = Some(now);
        let p = path.clone();
        match tokio::task::spawn_blocking(move || store::load(&p)).await {
            Ok(Ok((model, names))) => {
                let v = slot.replace(model, names);
                log::info!("swapped in model version {v} from {}", path.display());
            }
            Ok(Err(e)) => log::warn!("keeping current model: {e:#}"),
            Err(e) => log::error!("model loader panicked: {e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub model_path: PathBuf,
    pub listen_address: String,
    pub poll_interval: Duration,
}

/// A running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub slot: ModelSlot,
    shutdown: Option<oneshot::Sender<()>>,
    server: JoinHandle<std::io::Result<()>>,
    watcher: JoinHandle<()>,
}

impl ServerHandle {
    pub async fn shutdown(mut self) -> anyhow::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.watcher.abort();
        self.server.await??;
        Ok(())
    }

    /// Resolves when the server stops on its own.
    pub async fn wait(self) -> anyhow::Result<()> {
        let r = self.server.await?;
        self.watcher.abort();
        Ok(r?)
    }
}

/// Loads the model, binds the listener and starts serving. Fails without
/// binding anything if the model cannot be loaded.
pub async fn start(opts: &ServeOptions) -> anyhow::Result<ServerHandle> {
    let first = store::stamp(&opts.model_path).ok();
    let (model, names) = load_blocking(&opts.model_path).await?;
    let slot = ModelSlot::new(model, names);
    let listener = tokio::net::TcpListener::bind(&opts.listen_address).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(slot.clone());
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    let watcher = tokio::spawn(watch(
        opts.model_path.clone(),
        slot.clone(),
        first,
        opts.poll_interval,
    ));
    log::info!("serving {} on http://{addr}", opts.model_path.display());
    Ok(ServerHandle {
        addr,
        slot,
        shutdown: Some(tx),
        server,
        watcher,
    })
}

async fn load_blocking(path: &Path) -> anyhow::Result<(FittedModel, Vec<String>)> {
    let p = path.to_path_buf();
    tokio::task::spawn_blocking(move || store::load(&p)).await?
}
