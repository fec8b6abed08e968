//! HTTP/JSON interface.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use diffscope::pipeline::{catalog_prompt, prompt_catalog, DEFAULT_GUIDANCE_SCALE};
use diffscope::scheduler::{build_sigma_schedule, DEFAULT_STEPS};
use diffscope::{Engine, GenerationConfig, Trajectory, GUIDANCE_SWEEP_SCALES};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::cache::{CacheError, TrajectoryCache};

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub cache: Arc<TrajectoryCache>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, cache: TrajectoryCache) -> Self {
        Self {
            engine,
            cache: Arc::new(cache),
        }
    }
}

pub fn router(state: AppState, cors: bool) -> Router {
    let app = Router::new()
        .route("/health", get(health))
        .route("/api/prompts", get(prompts))
        .route("/api/generate", post(generate))
        .route("/api/guidance-sweep", get(guidance_sweep))
        .route("/api/trajectories/{id}", get(trajectory_summary))
        .route("/api/trajectories/{id}/frames/{t}", get(frame))
        .route("/api/trajectories/{id}/raw", get(raw))
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl From<CacheError> for ApiError {
    fn from(e: CacheError) -> Self {
        match e {
            CacheError::Rejected(m) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, m),
            CacheError::Internal(m) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Serialize)]
struct Health {
    status: &'static str,
    engine_version: String,
    schedule_checksum: String,
    parallel: bool,
}

async fn health(State(s): State<AppState>) -> ApiResult<Json<Health>> {
    let schedule = build_sigma_schedule(DEFAULT_STEPS)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(Health {
        status: "ok",
        engine_version: s.engine.version().to_owned(),
        schedule_checksum: schedule.checksum(),
        parallel: diffscope::par::is_parallel(),
    }))
}

#[derive(Serialize)]
struct PromptItem {
    id: u32,
    text: String,
    keywords: Vec<&'static str>,
}

async fn prompts() -> Json<Vec<PromptItem>> {
    Json(
        prompt_catalog()
            .iter()
            .map(|p| PromptItem {
                id: p.id,
                text: p.text.clone(),
                keywords: p.keywords.clone(),
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub prompt_id: Option<u32>,
    pub prompt_text: Option<String>,
    pub seed: u64,
    #[serde(default = "default_scale")]
    pub guidance_scale: f64,
}

fn default_scale() -> f64 {
    DEFAULT_GUIDANCE_SCALE
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct GenerateResponse {
    pub trajectory_id: String,
    pub cached: bool,
}

fn catalog_text(id: u32) -> ApiResult<String> {
    catalog_prompt(id)
        .map(|p| p.text.clone())
        .ok_or_else(|| ApiError::bad_request(format!("prompt_id must be in 1..={}", prompt_catalog().len())))
}

impl GenerateRequest {
    fn into_config(self) -> ApiResult<GenerationConfig> {
        let prompt = match (self.prompt_id, self.prompt_text) {
            (Some(id), None) => catalog_text(id)?,
            (None, Some(text)) => text,
            _ => return Err(ApiError::bad_request("give exactly one of prompt_id or prompt_text")),
        };
        GenerationConfig::new(prompt, self.seed, self.guidance_scale)
            .map_err(|e| ApiError::bad_request(e.to_string()))
    }
}

async fn generate(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<GenerateResponse>> {
    let req: GenerateRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    let cfg = req.into_config()?;
    let (trajectory_id, cached) = s.cache.ensure(&s.engine, &cfg).await?;
    Ok(Json(GenerateResponse {
        trajectory_id,
        cached,
    }))
}

#[derive(Deserialize)]
struct SweepQuery {
    prompt_id: Option<String>,
    seed: Option<String>,
}

async fn guidance_sweep(
    State(s): State<AppState>,
    Query(q): Query<SweepQuery>,
) -> ApiResult<Json<BTreeMap<String, String>>> {
    let prompt_id: u32 = q
        .prompt_id
        .as_deref()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ApiError::bad_request("prompt_id query parameter must be an integer"))?;
    let seed: u64 = q
        .seed
        .as_deref()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ApiError::bad_request("seed query parameter must be an unsigned 64-bit integer"))?;
    let prompt = catalog_text(prompt_id)?;
    let configs = GUIDANCE_SWEEP_SCALES
        .iter()
        .map(|&scale| GenerationConfig::new(prompt.clone(), seed, scale))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let (a, b, c, d) = tokio::try_join!(
        s.cache.ensure(&s.engine, &configs[0]),
        s.cache.ensure(&s.engine, &configs[1]),
        s.cache.ensure(&s.engine, &configs[2]),
        s.cache.ensure(&s.engine, &configs[3]),
    )?;
    Ok(Json(
        GUIDANCE_SWEEP_SCALES
            .iter()
            .zip([a, b, c, d])
            .map(|(scale, (id, _))| (format!("{scale}"), id))
            .collect(),
    ))
}

fn load(s: &AppState, id: &str) -> ApiResult<Trajectory> {
    s.cache
        .load(id)?
        .ok_or_else(|| ApiError::not_found(format!("unknown trajectory {id:?}")))
}

#[derive(Serialize)]
struct TokenInfo {
    ids: Vec<u32>,
    length: usize,
    strings: Vec<String>,
}

#[derive(Serialize)]
struct TrajectorySummary {
    id: String,
    engine_version: String,
    prompt: String,
    seed: u64,
    guidance_scale: f64,
    num_steps: usize,
    num_frames: usize,
    sigmas: Vec<f64>,
    tokens: TokenInfo,
    final_image_png_base64: String,
}

async fn trajectory_summary(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<TrajectorySummary>> {
    let t = load(&s, &id)?;
    let strings = s
        .engine
        .tokenizer()
        .token_strings(&t.token_ids)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(TrajectorySummary {
        id: t.id,
        engine_version: t.engine_version,
        prompt: t.config.prompt,
        seed: t.config.seed,
        guidance_scale: t.config.guidance_scale,
        num_steps: t.config.num_steps,
        num_frames: t.frames.len(),
        sigmas: t.frames.iter().map(|f| f.sigma).collect(),
        tokens: TokenInfo {
            ids: t.token_ids.ids.clone(),
            length: t.token_ids.length,
            strings,
        },
        final_image_png_base64: BASE64.encode(&t.final_image),
    }))
}

#[derive(Serialize, Deserialize)]
pub struct LatentStats {
    pub min: f32,
    pub max: f32,
    pub mean: f64,
}

#[derive(Serialize)]
struct FrameResponse {
    timestep: usize,
    sigma: f64,
    preview_png_base64: String,
    /// Cond, uncond, guided; absent for the initial-noise frame.
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_previews_base64: Option<[String; 3]>,
    latent_stats: LatentStats,
}

async fn frame(
    State(s): State<AppState>,
    Path((id, t)): Path<(String, String)>,
) -> ApiResult<Json<FrameResponse>> {
    let traj = load(&s, &id)?;
    let f = t
        .parse::<usize>()
        .ok()
        .and_then(|t| traj.frame(t))
        .ok_or_else(|| {
            ApiError::not_found(format!(
                "timestep {t:?} is outside 0..={}",
                traj.frames.len() - 1
            ))
        })?;
    let stats = f.latent.stats();
    Ok(Json(FrameResponse {
        timestep: f.timestep,
        sigma: f.sigma,
        preview_png_base64: BASE64.encode(&f.preview_png),
        noise_previews_base64: f
            .noise_previews
            .as_ref()
            .map(|p| [BASE64.encode(&p[0]), BASE64.encode(&p[1]), BASE64.encode(&p[2])]),
        latent_stats: LatentStats {
            min: stats.min,
            max: stats.max,
            mean: stats.mean,
        },
    }))
}

async fn raw(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let bytes = s
        .cache
        .read_raw(&id)?
        .ok_or_else(|| ApiError::not_found(format!("unknown trajectory {id:?}")))?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream".to_owned()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"{id}.traj\""),
            ),
        ],
        bytes,
    )
        .into_response())
}
