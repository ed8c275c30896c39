//! HTTP API over an in-memory stack of immutable scene revisions.
//!
//! Revision 0 is the loaded scene. `POST /edit` derives a new revision from
//! any existing one and makes it current; `POST /revert` moves the current
//! pointer back without discarding anything. Simulation runs as a background
//! job (one at a time); its frames are attached to the revision it started
//! from and can be rendered with `frame=k`. Every error is
//! `{"error": {"code": ..., "message": ...}}` with a stable code.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use featsplat::decompose::{PostProcess, QuerySpec};
use featsplat::distill::DecodeHead;
use featsplat::edit::{apply_script, EditOp, EditScript};
use featsplat::io::{load_scene, RgbImage, Vocab};
use featsplat::physics::{simulate, MaterialBank};
use featsplat::synth::{oracle_features, two_object_dataset, SynthConfig};
use featsplat::{CameraView, GaussianScene};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assets::{load_cameras, load_head, load_vocab};
use crate::config::Config;
use crate::error::CliError;
use crate::sim::{prepare, SimRequest};
use crate::views::{heat_image, parse_vec3, query_heat, render_rgb, resolve_camera, split_words, HeatMode, RenderMode, ViewRequest};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn unknown_revision(rev: usize) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_revision", format!("no revision {rev}"))
    }

    fn no_language() -> Self {
        ApiError::new(StatusCode::CONFLICT, "no_language", "the service was started without a decode head and vocabulary")
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        let code = e.code();
        let status = match code {
            "bad_query" | "usage" | "contract" | "json" | "validation" => StatusCode::BAD_REQUEST,
            "empty" | "degenerate" | "no_floor" | "cfl" | "diverged" | "provider" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<featsplat::Error> for ApiError {
    fn from(e: featsplat::Error) -> Self {
        CliError::from(e).into()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone)]
pub struct Revision {
    pub id: usize,
    pub parent: Option<usize>,
    pub note: String,
    pub scene: Arc<GaussianScene>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: u64,
    pub kind: String,
    pub rev: usize,
    pub state: JobState,
    pub frames_done: usize,
    pub frames_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Value>,
}

#[derive(Default)]
struct Jobs {
    next: u64,
    map: HashMap<u64, JobStatus>,
    cancel: HashMap<u64, Arc<AtomicBool>>,
    active: Option<u64>,
}

struct Store {
    revisions: Vec<Revision>,
    current: usize,
}

pub struct AppState {
    store: RwLock<Store>,
    /// Serializes edits so revision ids follow request order.
    writer: tokio::sync::Mutex<()>,
    jobs: Mutex<Jobs>,
    sims: Mutex<HashMap<usize, Arc<Vec<GaussianScene>>>>,
    lang: Option<(DecodeHead, Vocab)>,
    cameras: Vec<CameraView>,
    config: Config,
    bank: MaterialBank,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(scene: GaussianScene, lang: Option<(DecodeHead, Vocab)>, cameras: Vec<CameraView>, config: Config) -> Shared {
        let root = Revision { id: 0, parent: None, note: "loaded".into(), scene: Arc::new(scene) };
        Arc::new(AppState {
            store: RwLock::new(Store { revisions: vec![root], current: 0 }),
            writer: tokio::sync::Mutex::new(()),
            jobs: Mutex::new(Jobs::default()),
            sims: Mutex::new(HashMap::new()),
            lang,
            cameras,
            config,
            bank: MaterialBank::default(),
        })
    }

    /// Loads the scene, head, vocabulary and cameras named in `config.data`.
    pub fn from_config(config: Config) -> Result<Shared, CliError> {
        let d = &config.data;
        let scene_path = d.scene.as_ref().ok_or_else(|| CliError::Config("data.scene is required (or use --synthetic)".into()))?;
        let scene = load_scene(scene_path)?;
        let lang = match (&d.head, d.vocab_path()) {
            (Some(h), Some(v)) => Some((load_head(h)?, load_vocab(&v)?)),
            (None, None) => None,
            _ => return Err(CliError::Config("data.head and a vocabulary must be given together".into())),
        };
        let cameras = match d.cameras_path() {
            Some(p) => load_cameras(&p)?,
            None => Vec::new(),
        };
        Ok(AppState::new(scene, lang, cameras, config))
    }

    /// The two-object synthetic scene with exact features, for demos and tests.
    pub fn synthetic(config: Config, synth: &SynthConfig) -> Result<Shared, CliError> {
        let syn = two_object_dataset(synth)?;
        let (scene, head) = oracle_features(&syn)?;
        Ok(AppState::new(scene, Some((head, syn.dataset.vocab)), syn.dataset.views, config))
    }

    /// Scene of revision `rev` (the current one when `None`).
    pub fn scene(&self, rev: Option<usize>) -> Option<Arc<GaussianScene>> {
        self.revision(rev).ok().map(|r| r.scene)
    }

    fn lang(&self) -> Option<(&DecodeHead, &Vocab)> {
        self.lang.as_ref().map(|(h, v)| (h, v))
    }

    fn revision(&self, rev: Option<usize>) -> ApiResult<Revision> {
        let store = self.store.read().unwrap();
        let id = rev.unwrap_or(store.current);
        store.revisions.get(id).cloned().ok_or_else(|| ApiError::unknown_revision(id))
    }

    /// Scene of `rev`, or simulated frame `frame` of it.
    fn scene_at(&self, rev: Option<usize>, frame: Option<usize>) -> ApiResult<(usize, Arc<GaussianScene>)> {
        let r = self.revision(rev)?;
        let Some(f) = frame else { return Ok((r.id, r.scene)) };
        let sims = self.sims.lock().unwrap();
        let frames = sims
            .get(&r.id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_frame", format!("revision {} has no simulation", r.id)))?;
        let scene = frames
            .get(f)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_frame", format!("frame {f} of {} not available", frames.len())))?;
        Ok((r.id, Arc::new(scene)))
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/scene/meta", get(meta))
        .route("/segment", post(segment))
        .route("/edit", post(edit))
        .route("/revert", post(revert))
        .route("/simulate", post(simulate_job))
        .route("/job/{id}", get(job))
        .route("/job/{id}/cancel", post(cancel_job))
        .route("/render", get(render))
        .route("/heatmap", get(heatmap))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn meta(State(st): State<Shared>) -> ApiResult<Json<Value>> {
    let store = st.store.read().unwrap();
    let cur = &store.revisions[store.current].scene;
    let revisions: Vec<Value> = store
        .revisions
        .iter()
        .map(|r| json!({ "id": r.id, "parent": r.parent, "note": r.note, "gaussians": r.scene.len() }))
        .collect();
    let mut simulated: Vec<Value> = st.sims.lock().unwrap().iter().map(|(rev, f)| json!({ "rev": rev, "frames": f.len() })).collect();
    simulated.sort_by_key(|v| v["rev"].as_u64());
    let cameras: Vec<Value> = st.cameras.iter().enumerate().map(|(i, c)| json!({ "view": i, "width": c.width, "height": c.height })).collect();
    Ok(Json(json!({
        "current": store.current,
        "gaussians": cur.len(),
        "sh_degree": cur.sh_degree,
        "feature_dim": cur.feature_dim,
        "has_language": st.lang.is_some(),
        "vocabulary": st.lang.as_ref().map(|(_, v)| v.entries.keys().cloned().collect::<Vec<_>>()).unwrap_or_default(),
        "cameras": cameras,
        "materials": st.bank.materials.iter().map(|m| m.name.clone()).collect::<Vec<_>>(),
        "revisions": revisions,
        "simulated": simulated,
        "active_job": st.jobs.lock().unwrap().active,
    })))
}

#[derive(Debug, Deserialize)]
struct SegmentRequest {
    #[serde(default)]
    rev: Option<usize>,
    #[serde(flatten)]
    query: QuerySpec,
    #[serde(default)]
    postprocess: bool,
}

async fn segment(State(st): State<Shared>, body: Result<Json<SegmentRequest>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    if req.query.positive.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_query", "positive query is empty"));
    }
    let (rev, scene) = st.scene_at(req.rev, None)?;
    if st.lang.is_none() {
        return Err(ApiError::no_language());
    }
    blocking(move || {
        let (head, vocab) = st.lang().expect("checked above");
        let pp = PostProcess::default();
        let sel = featsplat::decompose::select(&scene, head, vocab, &req.query, req.postprocess.then_some(&pp))?;
        Ok(Json(json!({ "rev": rev, "positive": req.query.positive, "count": sel.len(), "indices": sel.indices, "scores": sel.scores })))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    #[serde(default)]
    rev: Option<usize>,
    #[serde(default)]
    ops: Vec<EditOp>,
    #[serde(default)]
    note: Option<String>,
}

async fn edit(State(st): State<Shared>, body: Result<Json<EditRequest>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let _guard = st.writer.lock().await;
    let parent = st.revision(req.rev)?;
    let note = req.note.unwrap_or_else(|| format!("{} op(s)", req.ops.len()));
    let script = EditScript { ops: req.ops };
    let st2 = st.clone();
    let base = parent.scene.clone();
    let scene = blocking(move || Ok(apply_script(&base, &script, st2.lang())?)).await?;
    let mut store = st.store.write().unwrap();
    let id = store.revisions.len();
    let gaussians = scene.len();
    store.revisions.push(Revision { id, parent: Some(parent.id), note, scene: Arc::new(scene) });
    store.current = id;
    Ok(Json(json!({ "rev": id, "parent": parent.id, "gaussians": gaussians })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RevertRequest {
    rev: usize,
}

async fn revert(State(st): State<Shared>, body: Result<Json<RevertRequest>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let _guard = st.writer.lock().await;
    let mut store = st.store.write().unwrap();
    if req.rev >= store.revisions.len() {
        return Err(ApiError::unknown_revision(req.rev));
    }
    store.current = req.rev;
    Ok(Json(json!({ "current": req.rev })))
}

#[derive(Debug, Deserialize)]
struct SimulateBody {
    #[serde(default)]
    rev: Option<usize>,
    #[serde(flatten)]
    request: SimRequest,
}

async fn simulate_job(State(st): State<Shared>, body: Result<Json<Value>, JsonRejection>) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(raw) = body?;
    let body: SimulateBody = serde_json::from_value(raw).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    if let Some(id) = st.jobs.lock().unwrap().active {
        return Err(ApiError::new(StatusCode::CONFLICT, "busy", format!("job {id} is still running")));
    }
    let rev = st.revision(body.rev)?;
    let st2 = st.clone();
    let scene = rev.scene.clone();
    let prepared = blocking(move || Ok(prepare(&scene, &body.request, st2.lang(), &st2.config, &st2.bank)?)).await?;

    let cancel = Arc::new(AtomicBool::new(false));
    let id = {
        let mut jobs = st.jobs.lock().unwrap();
        // another request may have started a job while this one was preparing
        if let Some(id) = jobs.active {
            return Err(ApiError::new(StatusCode::CONFLICT, "busy", format!("job {id} is still running")));
        }
        let id = jobs.next;
        jobs.next += 1;
        jobs.active = Some(id);
        jobs.cancel.insert(id, cancel.clone());
        jobs.map.insert(
            id,
            JobStatus {
                id,
                kind: "simulate".into(),
                rev: rev.id,
                state: JobState::Running,
                frames_done: 1,
                frames_total: prepared.frames,
                result: None,
                error: None,
            },
        );
        id
    };

    let st2 = st.clone();
    std::thread::spawn(move || {
        let p = prepared;
        let progress = |f: usize| {
            if let Some(j) = st2.jobs.lock().unwrap().map.get_mut(&id) {
                j.frames_done = f + 1;
            }
            !cancel.load(Ordering::Relaxed)
        };
        let out = simulate(&rev.scene, &p.sel, &p.materials, &p.bank, &p.cfg, &p.fill, p.frames, progress);
        let mut jobs = st2.jobs.lock().unwrap();
        let cancelled = cancel.load(Ordering::Relaxed);
        let job = jobs.map.get_mut(&id).expect("job registered");
        match out {
            Ok(o) => {
                job.frames_done = o.frames.len();
                job.state = if cancelled { JobState::Cancelled } else { JobState::Done };
                job.result = Some(json!({
                    "rev": rev.id,
                    "frames": o.frames.len(),
                    "particles": o.particle_count,
                    "interior_particles": o.interior_count,
                    "centroids": o.centroids.iter().map(|c| [c.x, c.y, c.z]).collect::<Vec<_>>(),
                }));
                st2.sims.lock().unwrap().insert(rev.id, Arc::new(o.frames));
            }
            Err(e) => {
                job.state = JobState::Failed;
                job.error = Some(json!({ "code": e.code(), "message": e.to_string() }));
            }
        }
        jobs.active = None;
        jobs.cancel.remove(&id);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": id, "rev": rev.id }))))
}

fn unknown_job(id: u64) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job {id}"))
}

async fn job(State(st): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<JobStatus>> {
    st.jobs.lock().unwrap().map.get(&id).cloned().map(Json).ok_or_else(|| unknown_job(id))
}

async fn cancel_job(State(st): State<Shared>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    let jobs = st.jobs.lock().unwrap();
    let status = jobs.map.get(&id).ok_or_else(|| unknown_job(id))?;
    if let Some(flag) = jobs.cancel.get(&id) {
        flag.store(true, Ordering::Relaxed);
    }
    Ok(Json(json!({ "job": id, "state": status.state })))
}

/// Camera fields shared by the image endpoints, in query-string form.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct CameraQuery {
    view: Option<usize>,
    eye: Option<String>,
    target: Option<String>,
    fov: Option<f64>,
    width: Option<u32>,
    height: Option<u32>,
}

impl CameraQuery {
    fn request(&self) -> ApiResult<ViewRequest> {
        let v = |s: &Option<String>| s.as_deref().map(parse_vec3).transpose();
        Ok(ViewRequest { view: self.view, eye: v(&self.eye)?, target: v(&self.target)?, fov: self.fov, width: self.width, height: self.height })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct RenderQuery {
    rev: Option<usize>,
    frame: Option<usize>,
    mode: RenderMode,
    view: Option<usize>,
    eye: Option<String>,
    target: Option<String>,
    fov: Option<f64>,
    width: Option<u32>,
    height: Option<u32>,
}

fn png_response(rev: usize, img: &RgbImage) -> ApiResult<Response> {
    let bytes = img.encode_png()?;
    let mut res = ([(header::CONTENT_TYPE, "image/png")], bytes).into_response();
    res.headers_mut().insert("x-revision", HeaderValue::from(rev));
    Ok(res)
}

async fn render(State(st): State<Shared>, q: Result<Query<RenderQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let cq = CameraQuery { view: q.view, eye: q.eye, target: q.target, fov: q.fov, width: q.width, height: q.height };
    let (rev, scene) = st.scene_at(q.rev, q.frame)?;
    let cam = resolve_camera(&cq.request()?, &st.cameras, &scene)?;
    let img = blocking(move || Ok(render_rgb(&scene, &cam, q.mode)?)).await?;
    png_response(rev, &img)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct HeatmapQuery {
    query: String,
    negatives: Option<String>,
    tau: Option<f64>,
    temperature: Option<f64>,
    rev: Option<usize>,
    frame: Option<usize>,
    mode: HeatMode,
    view: Option<usize>,
    eye: Option<String>,
    target: Option<String>,
    fov: Option<f64>,
    width: Option<u32>,
    height: Option<u32>,
}

async fn heatmap(State(st): State<Shared>, q: Result<Query<HeatmapQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    if q.query.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_query", "query is empty"));
    }
    if st.lang.is_none() {
        return Err(ApiError::no_language());
    }
    let mut spec = QuerySpec::new(q.query.trim());
    if let Some(n) = &q.negatives {
        spec.negatives = split_words(n);
    }
    spec.tau = q.tau.unwrap_or(spec.tau);
    spec.temperature = q.temperature.unwrap_or(spec.temperature);
    spec.validate()?;
    let cq = CameraQuery { view: q.view, eye: q.eye, target: q.target, fov: q.fov, width: q.width, height: q.height };
    let (rev, scene) = st.scene_at(q.rev, q.frame)?;
    let cam = resolve_camera(&cq.request()?, &st.cameras, &scene)?;
    let mode = q.mode;
    let st2 = st.clone();
    let img = blocking(move || {
        let (head, vocab) = st2.lang().expect("checked above");
        let (heat, color) = query_heat(&scene, head, vocab, &spec, &cam)?;
        Ok(heat_image(&heat, &color, cam.width, cam.height, mode))
    })
    .await?;
    png_response(rev, &img)
}

/// Binds `config.server` and serves until Ctrl-C.
pub async fn serve(state: Shared) -> Result<(), CliError> {
    let addr = format!("{}:{}", state.config.server.host, state.config.server.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Server(format!("binding {addr}: {e}")))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Server(e.to_string()))
}
