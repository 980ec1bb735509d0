//! HTTP handlers.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tagcube::{define_schema, ingest_csv, ColumnKind, IngestOptions, Schema};
use tower_http::services::ServeDir;

use crate::embed;
use crate::pipeline::{self, iceberg_dims, permalink_id, variant_name, Limits, PipelineError};
use crate::query::{CloudQuery, CloudResponse};
use crate::registry::{CloudStore, Dataset, IcebergCache, IcebergKey, Lookup, Registry};

/// Everything the handlers share.
#[derive(Debug, Clone, Default)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub icebergs: Arc<IcebergCache>,
    pub clouds: Arc<CloudStore>,
    pub limits: Limits,
}

impl AppState {
    pub fn new(limits: Limits) -> Self {
        Self { limits, ..Self::default() }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { status, code: code.into(), message: message.into() }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} `{id}` does not exist"))
    }

    fn unprocessable(e: &(impl std::fmt::Debug + std::fmt::Display)) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, variant_name(e), e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response();
        if self.status == StatusCode::CONFLICT {
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
        }
        resp
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("worker task panicked")
}

/// API routes without static file serving.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset).get(list_datasets))
        .route("/datasets/{id}/dimensions", get(dimensions))
        .route("/datasets/{id}/schema", get(get_schema).put(put_schema))
        .route("/datasets/{id}/clouds", post(create_cloud))
        .route("/clouds/{id}", get(get_cloud))
        .route("/clouds/{id}/embed", get(embed_cloud))
        .with_state(state)
}

/// API routes plus the UI bundle served from `ui_dir` for every other path.
pub fn app(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = router(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct UploadParams {
    /// Single-byte field delimiter; `tab` is accepted for `\t`.
    pub delimiter: Option<String>,
    pub header: Option<bool>,
    /// Comma-separated columns forced to be dimensions.
    pub dimensions: Option<String>,
    /// Comma-separated columns forced to be measures.
    pub measures: Option<String>,
}

impl UploadParams {
    fn options(&self) -> ApiResult<IngestOptions> {
        let mut opts = IngestOptions::default();
        if let Some(d) = &self.delimiter {
            opts.delimiter = match d.as_str() {
                "tab" | "\t" => b'\t',
                s if s.len() == 1 => s.as_bytes()[0],
                _ => return Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidDelimiter", "delimiter must be one byte")),
            };
        }
        if let Some(h) = self.header {
            opts.header_row = h;
        }
        for (list, kind) in [(&self.dimensions, ColumnKind::Dimension), (&self.measures, ColumnKind::Measure)] {
            for name in list.iter().flat_map(|l| l.split(',')).map(str::trim).filter(|n| !n.is_empty()) {
                opts.kind_overrides.insert(name.to_owned(), kind);
            }
        }
        Ok(opts)
    }
}

#[derive(Debug, Serialize)]
struct ColumnSummary {
    name: String,
    kind: ColumnKind,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    dataset_id: String,
    rows: usize,
    columns: Vec<ColumnSummary>,
    schema_version: Option<u64>,
}

fn summary(ds: &Dataset) -> DatasetSummary {
    DatasetSummary {
        dataset_id: ds.id.clone(),
        rows: ds.table.row_count(),
        columns: ds.table.columns().iter().map(|c| ColumnSummary { name: c.name().to_owned(), kind: c.kind() }).collect(),
        schema_version: ds.schema.as_ref().map(|(v, _)| *v),
    }
}

async fn upload_dataset(
    State(state): State<AppState>,
    Query(params): Query<UploadParams>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let opts = params.options()?;
    let table = blocking(move || ingest_csv::<f64>(&body, &opts))
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, variant_name(&e), e.to_string()))?;
    let id = state.registry.insert(table);
    let ds = state.registry.get(&id).expect("just inserted");
    tracing::info!(dataset = %id, rows = ds.table.row_count(), "dataset uploaded");
    Ok((StatusCode::CREATED, Json(serde_json::to_value(summary(&ds)).expect("serializable"))))
}

async fn list_datasets(State(state): State<AppState>) -> Json<serde_json::Value> {
    let list: Vec<DatasetSummary> = state.registry.list().iter().map(summary).collect();
    Json(serde_json::to_value(list).expect("serializable"))
}

fn dataset(state: &AppState, id: &str) -> ApiResult<Dataset> {
    state.registry.get(id).ok_or_else(|| ApiError::not_found("dataset", id))
}

#[derive(Debug, Serialize)]
struct DimensionInfo {
    name: String,
    distinct_values: usize,
    /// Base column the level derives from; equal to `name` for columns.
    base: String,
}

async fn dimensions(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<DimensionInfo>>> {
    let ds = dataset(&state, &id)?;
    let mut out: Vec<DimensionInfo> = ds
        .table
        .names_of_kind(ColumnKind::Dimension)
        .into_iter()
        .map(|name| {
            let distinct = ds.table.dimension(&name).expect("dimension column").distinct_count();
            DimensionInfo { base: name.clone(), name, distinct_values: distinct }
        })
        .collect();
    if let Some((_, schema)) = &ds.schema {
        for h in schema.hierarchies() {
            let level = schema.resolve_level(&h.parent_name).expect("attached level");
            let distinct = level.distinct_values(&ds.table).map_or(0, |v| v.len());
            out.push(DimensionInfo {
                name: h.parent_name.clone(),
                distinct_values: distinct,
                base: level.base_name().to_owned(),
            });
        }
    }
    Ok(Json(out))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyBody {
    pub child: String,
    pub parent: String,
    pub mapping: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaBody {
    pub dimensions: Vec<String>,
    pub measures: Vec<String>,
    #[serde(default)]
    pub hierarchies: Vec<HierarchyBody>,
}

/// Validates a schema body against a table.
pub fn build_schema(table: &tagcube::FactTable<f64>, body: &SchemaBody) -> Result<Schema, tagcube::SchemaError> {
    let mut schema = define_schema(table, &body.dimensions, &body.measures)?;
    for h in &body.hierarchies {
        schema = schema.attach_hierarchy(table, &h.child, &h.parent, h.mapping.clone())?;
    }
    Ok(schema)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        let status = if e.is_data() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::BAD_REQUEST };
        ApiError::new(status, "InvalidBody", e.to_string())
    })
}

async fn put_schema(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let ds = dataset(&state, &id)?;
    let body: SchemaBody = parse_json(&body)?;
    let schema = build_schema(&ds.table, &body).map_err(|e| ApiError::unprocessable(&e))?;
    let version = state.registry.set_schema(&id, schema).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    Ok(Json(json!({ "dataset_id": id, "schema_version": version })))
}

async fn get_schema(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let ds = dataset(&state, &id)?;
    let (version, schema) = ds.schema.ok_or_else(|| ApiError::not_found("schema of dataset", &id))?;
    Ok(Json(json!({ "dataset_id": id, "schema_version": version, "schema": *schema })))
}

async fn create_cloud(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let started = Instant::now();
    let ds = dataset(&state, &id)?;
    let (version, schema) = ds.schema.clone().ok_or_else(|| ApiError::not_found("schema of dataset", &id))?;
    let query: CloudQuery = parse_json(&body)?;
    if let Some(body_id) = &query.dataset {
        if *body_id != id {
            return Err(PipelineError::DatasetMismatch { body: body_id.clone(), path: id.clone() }.into());
        }
    }
    pipeline::validate(&schema, &query, &state.limits)?;

    let iceberg = match query.iceberg_limit {
        None => None,
        Some(limit) => {
            let dims = iceberg_dims(&schema, &query);
            let key = IcebergKey {
                dataset: id.clone(),
                schema_version: version,
                dims: dims.clone(),
                aggregator: query.aggregator.clone(),
                limit,
            };
            match state.icebergs.lookup(key) {
                Lookup::Ready(ice) => Some(ice),
                Lookup::Busy => {
                    return Err(ApiError::new(
                        StatusCode::CONFLICT,
                        "IcebergBuilding",
                        "the iceberg for this query is being materialized; retry shortly",
                    ))
                }
                Lookup::Build(ticket) => {
                    let (table, schema, agg) = (Arc::clone(&ds.table), Arc::clone(&schema), query.aggregator.clone());
                    let built =
                        blocking(move || tagcube::materialize_iceberg(&table, &schema, &dims, &agg, limit)).await;
                    Some(ticket.finish(built.map_err(PipelineError::from)?))
                }
            }
        }
    };

    let (table, schema_c, q, limits) = (Arc::clone(&ds.table), Arc::clone(&schema), query.clone(), state.limits);
    let body = blocking(move || pipeline::execute(&table, &schema_c, &q, iceberg.as_deref(), &limits)).await?;
    let cloud_id = permalink_id(&id, version, &query);
    let response = CloudResponse {
        permalink: format!("/clouds/{cloud_id}"),
        id: cloud_id.clone(),
        dataset_id: id,
        schema_version: version,
        body,
        timing_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let bytes = serde_json::to_vec(&response).expect("serializable");
    state.clouds.insert_if_absent(&cloud_id, bytes.clone());
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn get_cloud(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = state.clouds.get(&id).ok_or_else(|| ApiError::not_found("cloud", &id))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes.as_ref().clone()).into_response())
}

async fn embed_cloud(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Html<String>> {
    let bytes = state.clouds.get(&id).ok_or_else(|| ApiError::not_found("cloud", &id))?;
    let response: CloudResponse = serde_json::from_slice(&bytes).expect("stored responses parse");
    Ok(Html(embed::render(&response)))
}
