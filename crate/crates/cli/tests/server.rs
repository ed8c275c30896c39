use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use featsplat::io::{write_scene, RgbImage};
use featsplat::raster::{rasterize, RasterConfig};
use featsplat::synth::{oracle_features, two_object_dataset, SynthConfig};
use featsplat::GaussianScene;
use featsplat_cli::config::Config;
use featsplat_cli::server::{router, AppState, Shared};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn synth_cfg() -> SynthConfig {
    SynthConfig { views: 4, width: 64, height: 64, coarse: 16, gaussians_per_object: 120, ..Default::default() }
}

fn fixture() -> (Shared, Router) {
    let mut cfg = Config::default();
    cfg.sim.grid_res = 16;
    cfg.sim.substeps_per_frame = 4;
    cfg.infill.grid_res = 8;
    let st = AppState::synthetic(cfg, &synth_cfg()).unwrap();
    let app = router(st.clone());
    (st, app)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or_else(|_| panic!("non-JSON body from {uri}: {}", String::from_utf8_lossy(&b))))
}

/// Validates `v` against `$defs/<def>` of the shipped schema.
fn assert_schema(def: &str, v: &Value) {
    let mut schema: Value = serde_json::from_str(include_str!("../api/schema.json")).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{def}: {errors:?}\n{v}");
}

fn bytes(scene: &GaussianScene) -> Vec<u8> {
    let mut b = Vec::new();
    write_scene(scene, &mut b).unwrap();
    b
}

fn error_code(v: &Value) -> &str {
    assert_schema("Error", v);
    v["error"]["code"].as_str().unwrap()
}

#[tokio::test]
async fn meta_describes_scene() {
    let (_, app) = fixture();
    let (s, v) = call_json(&app, "GET", "/scene/meta", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("Meta", &v);
    assert_eq!(v["current"], 0);
    assert_eq!(v["gaussians"], 240);
    assert_eq!(v["cameras"].as_array().unwrap().len(), 4);
    assert!(v["vocabulary"].as_array().unwrap().contains(&json!("apple")));
}

#[tokio::test]
async fn segment_returns_object_indices() {
    let (_, app) = fixture();
    let (s, v) = call_json(&app, "POST", "/segment", Some(json!({ "positive": "box" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("SegmentResponse", &v);
    let want: Vec<usize> = (120..240).collect();
    assert_eq!(serde_json::from_value::<Vec<usize>>(v["indices"].clone()).unwrap(), want);
}

#[tokio::test]
async fn heatmap_covers_object_pixels() {
    let (_, app) = fixture();
    let syn = two_object_dataset(&synth_cfg()).unwrap();
    let (scene, _) = oracle_features(&syn).unwrap();
    // reference: composited weight of the apple's Gaussians
    let indicator: Vec<f32> = syn.labels.iter().map(|&k| if k == 0 { 1.0 } else { 0.0 }).collect();
    let marked = scene.with_features(1, &indicator);
    let tau = 0.6;
    let (mut inter, mut union) = (0usize, 0usize);
    for (v, cam) in syn.dataset.views.iter().enumerate() {
        let (s, png) = call(&app, "GET", &format!("/heatmap?query=apple&mode=mask&view={v}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let img = RgbImage::decode_png(&png).unwrap();
        let truth = rasterize(&marked, cam, &RasterConfig::default()).unwrap().feature;
        for (p, w) in truth.iter().enumerate() {
            let hot = img.data[p * 3] as f64 / 255.0 > tau;
            let obj = *w > 0.5;
            inter += (hot && obj) as usize;
            union += (hot || obj) as usize;
        }
    }
    let iou = inter as f64 / union as f64;
    assert!(iou >= 0.9, "heatmap IoU {iou}");
}

#[tokio::test]
async fn empty_edit_creates_identical_revision() {
    let (st, app) = fixture();
    let (s, v) = call_json(&app, "POST", "/edit", Some(json!({ "ops": [] }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("EditResponse", &v);
    assert_eq!((v["rev"].as_u64(), v["parent"].as_u64()), (Some(1), Some(0)));
    assert_eq!(bytes(&st.scene(Some(1)).unwrap()), bytes(&st.scene(Some(0)).unwrap()));
    let (_, a) = call(&app, "GET", "/render?rev=0", None).await;
    let (_, b) = call(&app, "GET", "/render?rev=1", None).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn revert_restores_bit_exact_scene() {
    let (st, app) = fixture();
    let (_, before) = call(&app, "GET", "/render?view=2", None).await;
    let edit = json!({ "ops": [
        { "op": "translate", "select": { "query": { "positive": "apple" } }, "offset": [0.1, 0.0, 0.0] },
        { "op": "remove", "select": { "indices": [0, 1, 2] } }
    ]});
    let (s, v) = call_json(&app, "POST", "/edit", Some(edit)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (_, moved) = call(&app, "GET", "/render?view=2", None).await;
    assert_ne!(before, moved);

    let (s, v) = call_json(&app, "POST", "/revert", Some(json!({ "rev": 0 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("RevertResponse", &v);
    assert_eq!(bytes(&st.scene(None).unwrap()), bytes(&st.scene(Some(0)).unwrap()));
    let (_, after) = call(&app, "GET", "/render?view=2", None).await;
    assert_eq!(before, after);
    // the edited revision is still addressable
    let (_, v) = call_json(&app, "GET", "/scene/meta", None).await;
    assert_eq!(v["current"], 0);
    assert_eq!(v["revisions"][1]["gaussians"], 237);
}

async fn wait_for_job(app: &Router, id: u64) -> Value {
    let start = Instant::now();
    loop {
        let (s, v) = call_json(app, "GET", &format!("/job/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        assert_schema("Job", &v);
        if v["state"] != "running" {
            return v;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn simulate_runs_as_job_and_frames_render() {
    let (_, app) = fixture();
    let req = json!({ "select": { "query": { "positive": "apple" } }, "frames": 3, "gravity": [0.0, 0.0, -9.8] });
    let (s, v) = call_json(&app, "POST", "/simulate", Some(req)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    assert_schema("SimulateAccepted", &v);
    let job = wait_for_job(&app, v["job"].as_u64().unwrap()).await;
    assert_eq!(job["state"], "done", "{job}");
    assert_eq!(job["result"]["frames"], 3);

    let (_, base) = call(&app, "GET", "/render?view=1", None).await;
    let (_, f0) = call(&app, "GET", "/render?view=1&frame=0", None).await;
    let (s, f2) = call(&app, "GET", "/render?view=1&frame=2", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(base, f0);
    assert_ne!(f0, f2);
    let (s, v) = call_json(&app, "GET", "/render?frame=9", None).await;
    assert_eq!((s, error_code(&v)), (StatusCode::NOT_FOUND, "unknown_frame"));
}

#[tokio::test]
async fn second_simulation_is_busy_while_one_runs() {
    let (_, app) = fixture();
    let req = json!({ "select": { "query": { "positive": "box" } }, "frames": 100000, "gravity": [0.0, 0.0, -9.8] });
    let (s, v) = call_json(&app, "POST", "/simulate", Some(req.clone())).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let id = v["job"].as_u64().unwrap();
    let (s, busy) = call_json(&app, "POST", "/simulate", Some(req)).await;
    assert_eq!((s, error_code(&busy)), (StatusCode::CONFLICT, "busy"));
    let (_, meta) = call_json(&app, "GET", "/scene/meta", None).await;
    assert_eq!(meta["active_job"], id);

    let (s, v) = call_json(&app, "POST", &format!("/job/{id}/cancel"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_schema("CancelResponse", &v);
    assert_eq!(wait_for_job(&app, id).await["state"], "cancelled");
    // the slot is free again
    let (s, v) = call_json(&app, "POST", "/simulate", Some(json!({ "select": { "indices": [0, 1, 2, 3] }, "frames": 1 }))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
}

#[tokio::test]
async fn errors_are_structured() {
    let (_, app) = fixture();
    let cases = [
        ("POST", "/segment", Some(json!({ "positive": "pear" })), StatusCode::BAD_REQUEST, "bad_query"),
        ("POST", "/segment", Some(json!({ "positive": "" })), StatusCode::BAD_REQUEST, "bad_query"),
        ("POST", "/segment", Some(json!({ "positive": "apple", "tau": 1.5 })), StatusCode::BAD_REQUEST, "contract"),
        ("POST", "/revert", Some(json!({ "rev": 42 })), StatusCode::NOT_FOUND, "unknown_revision"),
        ("POST", "/edit", Some(json!({ "rev": 7, "ops": [] })), StatusCode::NOT_FOUND, "unknown_revision"),
        ("POST", "/edit", Some(json!({ "ops": [{ "op": "explode" }] })), StatusCode::BAD_REQUEST, "bad_request"),
        ("GET", "/job/5", None, StatusCode::NOT_FOUND, "unknown_job"),
        ("GET", "/render?rev=3", None, StatusCode::NOT_FOUND, "unknown_revision"),
        ("GET", "/render?view=99", None, StatusCode::BAD_REQUEST, "usage"),
        ("GET", "/render?width=abc", None, StatusCode::BAD_REQUEST, "bad_request"),
        ("GET", "/heatmap?query=pear", None, StatusCode::BAD_REQUEST, "bad_query"),
        ("POST", "/simulate", Some(json!({ "select": { "indices": [] } })), StatusCode::UNPROCESSABLE_ENTITY, "empty"),
        ("POST", "/simulate", Some(json!({ "material": "jelly" })), StatusCode::BAD_REQUEST, "contract"),
        ("GET", "/nope", None, StatusCode::NOT_FOUND, "not_found"),
    ];
    for (method, uri, body, status, code) in cases {
        let (s, v) = call_json(&app, method, uri, body.clone()).await;
        assert_eq!((s, error_code(&v)), (status, code), "{method} {uri} {body:?}: {v}");
    }
    // malformed JSON
    let req = Request::builder().method("POST").uri("/edit").header("content-type", "application/json").body(Body::from("{")).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn render_is_png_with_revision_header() {
    let (_, app) = fixture();
    let req = Request::builder().uri("/render?eye=0,-3,1&width=40&height=30&mode=pca").body(Body::empty()).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()["content-type"], "image/png");
    assert_eq!(res.headers()["x-revision"], "0");
    let img = RgbImage::decode_png(&res.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!((img.width, img.height), (40, 30));
}
