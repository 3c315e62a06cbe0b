//! HTTP preview service.
//!
//! | method | path           | body                                   | reply                          |
//! |--------|----------------|----------------------------------------|--------------------------------|
//! | GET    | `/v1/registry` |                                        | feature schemas                |
//! | POST   | `/v1/validate` | config JSON                            | validation report              |
//! | POST   | `/v1/render`   | `{config, seed, sample_index}`         | PNG previews and records       |
//! | POST   | `/v1/compare`  | multipart: `request` (as render), `image` (PNG/TIFF) | previews and frame statistics |
//!
//! `/v1/render?part=image` (or `label`) replies with the PNG bytes alone and
//! the display range in the `x-display-range` header. Errors are
//! `{code, message, path}` with an HTTP status: 400 for parse and validation
//! errors, 413 for bodies or images over the configured limits, 422 for
//! configs that fail during evaluation.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::prelude::{Engine, BASE64_STANDARD};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use synthscope::io::{
    compare_frames, display_plane, import_image_limited, load_config_with, object_truth, preview_png, Comparison,
    ConfigError, Finding, ImageError, ObjectTruth, PipelineConfig, Registry, ValidationReport, MAX_IMPORT_PIXELS,
};
use synthscope::pipeline::{ImageData, PipelineError, PropertyRecord, SampleContext, SamplePair};

/// Default request body limit (bytes).
pub const DEFAULT_BODY_LIMIT: usize = 16 << 20;

/// Header carrying the `lo hi` display range of a raw PNG reply.
pub const RANGE_HEADER: &str = "x-display-range";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Largest accepted request body, uploads included.
    pub body_limit: usize,
    /// Largest accepted uploaded image, in pixels.
    pub max_pixels: u64,
    /// Config used by requests that carry none.
    pub default_config: Option<PipelineConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { body_limit: DEFAULT_BODY_LIMIT, max_pixels: MAX_IMPORT_PIXELS, default_config: None }
    }
}

struct AppState {
    registry: Registry,
    config: ServiceConfig,
}

/// Structured error reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    /// Node path or request field the error refers to; empty for the whole request.
    pub path: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Finding>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, path: &str) -> Self {
        Self { status: status.as_u16(), code: code.to_string(), message: message.into(), path: path.to_string(), findings: Vec::new() }
    }

    fn bad_request(code: &str, message: impl Into<String>, path: &str) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message, path)
    }

    fn from_config(e: ConfigError, field: &str) -> Self {
        let report = e.report();
        let first = report.errors().next().cloned();
        let code = if matches!(e, ConfigError::Parse { .. }) { "parse" } else { "validation" };
        let path = match &first {
            Some(f) if !f.path.is_empty() => f.path.clone(),
            _ => field.to_string(),
        };
        let message = first.map_or_else(|| e.to_string(), |f| f.to_string());
        Self { findings: report.findings, ..Self::bad_request(code, message, &path) }
    }

    fn from_pipeline(e: PipelineError) -> Self {
        let path = e.instance().map(|i| i.to_string()).unwrap_or_default();
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "evaluation", e.to_string(), &path)
    }

    fn from_image(e: ImageError, field: &str) -> Self {
        match e {
            ImageError::TooLarge { .. } => Self::new(StatusCode::PAYLOAD_TOO_LARGE, "too_large", e.to_string(), field),
            ImageError::Decode(_) => Self::bad_request("decode", e.to_string(), field),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "encode", e.to_string(), field),
        }
    }

    fn from_body(status: StatusCode, message: String, limit: usize) -> Self {
        if status == StatusCode::PAYLOAD_TOO_LARGE {
            Self::new(status, "too_large", format!("request body exceeds the {limit}-byte limit"), "")
        } else {
            Self::new(status, "bad_body", message, "")
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// Body of `/v1/render` and the `request` part of `/v1/compare`.
///
/// `config` is either a config object or its JSON text; the text form keeps
/// line and column numbers meaningful in parse errors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    #[serde(default)]
    pub config: Option<Value>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sample_index: u64,
}

/// A display-normalised PNG preview of one array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub png: String,
    /// Intensities mapped to black and white.
    pub range: [f64; 2],
    /// Shape and dtype of the array behind the preview.
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub config_hash: String,
    pub seed: u64,
    pub sample_index: u64,
    pub image: Preview,
    pub label: Option<Preview>,
    pub records: Vec<PropertyRecord>,
    pub objects: Vec<ObjectTruth>,
    pub label_records: Vec<PropertyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub config_hash: String,
    pub synthetic: Preview,
    pub experimental: Preview,
    pub stats: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub valid: bool,
    pub findings: Vec<Finding>,
    pub config_hash: String,
    /// The config with every default filled in.
    pub canonical: PipelineConfig,
}

#[derive(Debug, Deserialize)]
struct PartQuery {
    part: Option<String>,
}

pub fn router(config: ServiceConfig) -> Router {
    let limit = config.body_limit;
    let state = Arc::new(AppState { registry: Registry::standard(), config });
    Router::new()
        .route("/v1/registry", get(registry))
        .route("/v1/validate", post(validate))
        .route("/v1/render", post(render))
        .route("/v1/compare", post(compare))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves [`router`] on `addr` until the process ends.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(config)).await
}

async fn registry(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(state.registry.to_json())
}

fn body(state: &AppState, body: Result<Bytes, BytesRejection>) -> Result<Bytes, ApiError> {
    body.map_err(|r| ApiError::from_body(r.status(), r.body_text(), state.config.body_limit))
}

fn utf8<'a>(bytes: &'a [u8], field: &str) -> Result<&'a str, ApiError> {
    std::str::from_utf8(bytes).map_err(|_| ApiError::bad_request("parse", "body is not UTF-8", field))
}

async fn validate(State(state): State<Arc<AppState>>, raw: Result<Bytes, BytesRejection>) -> Result<Json<ValidateResponse>, ApiError> {
    let raw = body(&state, raw)?;
    let (config, report) = load_config_with(utf8(&raw, "")?, &state.registry).map_err(|e| ApiError::from_config(e, ""))?;
    Ok(Json(from_report(config, report)))
}

fn from_report(canonical: PipelineConfig, report: ValidationReport) -> ValidateResponse {
    ValidateResponse { valid: report.is_valid(), findings: report.findings, config_hash: canonical.hash(), canonical }
}

fn request_config(state: &AppState, req: &RenderRequest) -> Result<PipelineConfig, ApiError> {
    let text = match &req.config {
        None | Some(Value::Null) => {
            return state
                .config
                .default_config
                .clone()
                .ok_or_else(|| ApiError::bad_request("missing_config", "request has no config and the service has no default", "config"));
        }
        Some(Value::String(s)) => s.clone(),
        Some(v) => v.to_string(),
    };
    load_config_with(&text, &state.registry).map(|(c, _)| c).map_err(|e| ApiError::from_config(e, "config"))
}

fn parse_request(bytes: &[u8]) -> Result<RenderRequest, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::bad_request("parse", format!("line {} column {}: {e}", e.line(), e.column()), "")
    })
}

async fn sample(state: Arc<AppState>, req: RenderRequest) -> Result<(PipelineConfig, SamplePair), ApiError> {
    let config = request_config(&state, &req)?;
    let generator = config.build(&state.registry).map_err(|e| ApiError::from_config(e, "config"))?;
    let ctx = SampleContext::new(req.seed, req.sample_index);
    let pair = tokio::task::spawn_blocking(move || generator.sample(ctx))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), ""))?
        .map_err(ApiError::from_pipeline)?;
    Ok((config, pair))
}

fn preview(data: &ImageData, field: &str) -> Result<(Vec<u8>, Preview), ApiError> {
    let (png, range) = preview_png(data).map_err(|e| ApiError::from_image(e, field))?;
    let p = Preview { png: BASE64_STANDARD.encode(&png), range, shape: data.shape().to_vec(), dtype: data.dtype().to_string() };
    Ok((png, p))
}

fn png_reply(png: Vec<u8>, range: [f64; 2]) -> Response {
    let mut r = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    let value = HeaderValue::from_str(&format!("{} {}", range[0], range[1])).expect("ascii numbers");
    r.headers_mut().insert(RANGE_HEADER, value);
    r
}

async fn render(
    State(state): State<Arc<AppState>>,
    Query(q): Query<PartQuery>,
    raw: Result<Bytes, BytesRejection>,
) -> Result<Response, ApiError> {
    let raw = body(&state, raw)?;
    let req = parse_request(&raw)?;
    let (seed, sample_index) = (req.seed, req.sample_index);
    let (config, pair) = sample(state, req).await?;
    let has_label = !config.label.is_empty();
    match q.part.as_deref() {
        None => {}
        Some("image") => {
            let (png, p) = preview(&pair.image.data, "image")?;
            return Ok(png_reply(png, p.range));
        }
        Some("label") if has_label => {
            let (png, p) = preview(&pair.label.data, "label")?;
            return Ok(png_reply(png, p.range));
        }
        Some("label") => return Err(ApiError::bad_request("no_label", "config has no label pipeline", "label")),
        Some(other) => return Err(ApiError::bad_request("bad_query", format!("unknown part {other:?} (image or label)"), "part")),
    }
    let image = preview(&pair.image.data, "image")?.1;
    let label = if has_label { Some(preview(&pair.label.data, "label")?.1) } else { None };
    Ok(Json(RenderResponse {
        config_hash: config.hash(),
        seed,
        sample_index,
        image,
        label,
        records: pair.image.records.to_vec(),
        objects: object_truth(&pair.image.records),
        label_records: pair.label.records.to_vec(),
    })
    .into_response())
}

async fn compare(
    State(state): State<Arc<AppState>>,
    form: Result<Multipart, MultipartRejection>,
) -> Result<Json<CompareResponse>, ApiError> {
    let limit = state.config.body_limit;
    let mut form = form.map_err(|r| ApiError::from_body(r.status(), r.body_text(), limit))?;
    let (mut req, mut upload) = (None, None);
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::from_body(e.status(), e.body_text(), limit))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::from_body(e.status(), e.body_text(), limit))?;
        match name.as_str() {
            "request" => req = Some(parse_request(&bytes)?),
            "image" => upload = Some(bytes),
            other => return Err(ApiError::bad_request("bad_body", format!("unexpected form field {other:?}"), other)),
        }
    }
    let upload = upload.ok_or_else(|| ApiError::bad_request("missing_image", "form has no image field", "image"))?;
    let max_pixels = state.config.max_pixels;
    let experimental = tokio::task::spawn_blocking(move || import_image_limited(&upload, max_pixels))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), ""))?
        .map_err(|e| ApiError::from_image(e, "image"))?;
    let (config, pair) = sample(state, req.unwrap_or_default()).await?;
    let synthetic = display_plane(&pair.image.data).map_err(|e| ApiError::from_image(e, "image"))?;
    let stats = compare_frames(synthetic.view(), experimental.view());
    let experimental = ImageData::real2(experimental);
    Ok(Json(CompareResponse {
        config_hash: config.hash(),
        synthetic: preview(&pair.image.data, "image")?.1,
        experimental: preview(&experimental, "image")?.1,
        stats,
    }))
}

async fn not_found(uri: axum::http::Uri) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no route {}", uri.path()), "")
}
