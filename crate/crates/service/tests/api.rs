use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use hintcolor::dataset::synthetic_scene;
use hintcolor::image::{decode_png, encode_png, to_greyscale, InputMode};
use hintcolor::model::{DiscriminatorConfig, GeneratorConfig};
use hintcolor::training::{save_checkpoint, ExtractorConfig, TrainConfig, TrainState};
use hintcolor_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const SIDE: usize = 32;

fn checkpoint(dir: &std::path::Path, mode: InputMode) {
    let cfg = TrainConfig {
        mode,
        seed: 21,
        generator: GeneratorConfig { base_channels: 4, n_residual_blocks: 1 },
        discriminator: DiscriminatorConfig { n_layers: 3, base_channels: 4, use_spectral_norm: true },
        extractor: Some(ExtractorConfig::Toy { seed: 1 }),
        ..TrainConfig::default()
    };
    let state = TrainState::<f32>::new(&cfg).unwrap();
    save_checkpoint(dir, &state, &cfg, (SIDE, SIDE)).unwrap();
}

fn app_with_ttl(ttl: Duration) -> (Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    checkpoint(dir.path(), InputMode::LineArt);
    let state = AppState::load(dir.path(), ttl).unwrap();
    (router(Arc::new(state)), dir)
}

fn app() -> (Router, tempfile::TempDir) {
    app_with_ttl(Duration::from_secs(600))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn new_session(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/api/sessions", Some(json!({"mode": "line_art", "width": SIDE, "height": SIDE}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v["id"].as_str().unwrap().to_string()
}

fn line_art_b64(frame: usize) -> String {
    let frames = synthetic_scene::<f32>(frame + 1, SIDE, SIDE, 4).unwrap();
    let grey = to_greyscale(&frames[frame]).unwrap();
    B64.encode(encode_png(&grey).unwrap())
}

fn request(frame: usize) -> Value {
    json!({
        "line_art_png_b64": line_art_b64(frame),
        "hints": [{"x": 4, "y": 8, "rgb": [200, 30, 90]}, {"x": 16, "y": 16, "rgb": [10, 220, 40]}],
    })
}

async fn colorize(app: &Router, id: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", &format!("/api/sessions/{id}/colorize"), Some(body)).await
}

async fn frame_of(app: &Router, id: &str, body: Value) -> Vec<u8> {
    let (status, v) = colorize(app, id, body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    B64.decode(v["frame_png_b64"].as_str().unwrap()).unwrap()
}

fn pixels(png: &[u8]) -> Vec<u8> {
    decode_png(png).unwrap().data
}

#[tokio::test]
async fn health_reports_the_checkpoint() {
    let (app, _dir) = app();
    let (status, v) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["model"], "loaded");
    assert_eq!(v["checkpoint"], "step_00000000");
}

#[tokio::test]
async fn create_session_validates_resolution_and_mode() {
    let (app, _dir) = app();
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_ne!(a, b);
    let (status, v) = call(&app, "POST", "/api/sessions", Some(json!({"mode": "line_art", "width": 30, "height": 32}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("divisible by 4"));
    let (status, _) = call(&app, "POST", "/api/sessions", Some(json!({"mode": "line_art", "width": 8, "height": 8}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/api/sessions", Some(json!({"mode": "greyscale", "width": 32, "height": 32}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn colorize_returns_an_rgb_frame_and_counts() {
    let (app, _dir) = app();
    let id = new_session(&app).await;
    for expected in 0..3 {
        let (status, v) = colorize(&app, &id, request(expected)).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["frame_index"], expected as u64);
        let raw = decode_png(&B64.decode(v["frame_png_b64"].as_str().unwrap()).unwrap()).unwrap();
        assert_eq!((raw.height, raw.width, raw.channels), (SIDE, SIDE, 3));
    }
}

#[tokio::test]
async fn fresh_sessions_are_deterministic() {
    let (app, _dir) = app();
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_eq!(frame_of(&app, &a, request(0)).await, frame_of(&app, &b, request(0)).await);
}

#[tokio::test]
async fn second_call_depends_on_the_carried_frame() {
    let (app, _dir) = app();
    let a = new_session(&app).await;
    frame_of(&app, &a, request(0)).await;
    let carried = pixels(&frame_of(&app, &a, request(1)).await);
    let b = new_session(&app).await;
    let fresh = pixels(&frame_of(&app, &b, request(1)).await);
    let diff: f64 = carried.iter().zip(&fresh).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>()
        / carried.len() as f64;
    assert!(diff > 0.0);
}

#[tokio::test]
async fn reset_matches_a_fresh_session() {
    let (app, _dir) = app();
    let a = new_session(&app).await;
    frame_of(&app, &a, request(0)).await;
    frame_of(&app, &a, request(1)).await;
    let (status, v) = call(&app, "POST", &format!("/api/sessions/{a}/reset"), None).await;
    assert_eq!((status, v), (StatusCode::OK, json!({})));
    let (status, _) = call(&app, "POST", &format!("/api/sessions/{a}/reset"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, v) = colorize(&app, &a, request(2)).await;
    assert_eq!(v["frame_index"], 0);
    let after_reset = B64.decode(v["frame_png_b64"].as_str().unwrap()).unwrap();
    let b = new_session(&app).await;
    assert_eq!(after_reset, frame_of(&app, &b, request(2)).await);
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let (app, _dir) = app();
    let (status, _) = call(&app, "POST", "/api/sessions/nope/reset", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, v) = colorize(&app, "nope", request(0)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("nope"));
}

#[tokio::test]
async fn expired_sessions_are_not_found() {
    let (app, _dir) = app_with_ttl(Duration::from_millis(50));
    let id = new_session(&app).await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    let (status, _) = colorize(&app, &id, request(0)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_hints_are_rejected_with_their_index() {
    let (app, _dir) = app();
    let id = new_session(&app).await;
    let body = json!({
        "line_art_png_b64": line_art_b64(0),
        "hints": [{"x": 0, "y": 0, "rgb": [1, 2, 3]}, {"x": 3, "y": 0, "rgb": [1, 2, 3]}],
    });
    let (status, v) = colorize(&app, &id, body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("hint 1"), "{v}");
    let body = json!({"line_art_png_b64": line_art_b64(0), "hints": [{"x": 32, "y": 0, "rgb": [1, 2, 3]}]});
    let (status, v) = colorize(&app, &id, body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("hint 0"), "{v}");
    // A rejected call leaves the session untouched.
    let (_, v) = colorize(&app, &id, request(0)).await;
    assert_eq!(v["frame_index"], 0);
}

#[tokio::test]
async fn wrong_line_art_size_is_rejected() {
    let (app, _dir) = app();
    let id = new_session(&app).await;
    let small = hintcolor::image::ImageTensor::<f32>::blank(16, 16, 1).unwrap();
    let body = json!({"line_art_png_b64": B64.encode(encode_png(&small).unwrap()), "hints": []});
    let (status, _) = colorize(&app, &id, body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_match_serial_execution() {
    let (app, _dir) = app();
    let mut serial = Vec::new();
    for _ in 0..3 {
        let id = new_session(&app).await;
        let mut frames = Vec::new();
        for f in 0..3 {
            frames.push(frame_of(&app, &id, request(f)).await);
        }
        serial.push(frames);
    }
    let mut handles = Vec::new();
    for _ in 0..3 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let id = new_session(&app).await;
            let mut frames = Vec::new();
            for f in 0..3 {
                frames.push(frame_of(&app, &id, request(f)).await);
            }
            frames
        }));
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), serial[0]);
    }
    assert!(serial.iter().all(|s| s == &serial[0]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn calls_on_one_session_are_serialized() {
    let (app, _dir) = app();
    let id = new_session(&app).await;
    let mut handles = Vec::new();
    for _ in 0..4 {
        let app = app.clone();
        let id = id.clone();
        handles.push(tokio::spawn(async move { colorize(&app, &id, request(0)).await.1["frame_index"].as_u64().unwrap() }));
    }
    let mut seen = Vec::new();
    for h in handles {
        seen.push(h.await.unwrap());
    }
    seen.sort_unstable();
    assert_eq!(seen, vec![0, 1, 2, 3]);
}

#[tokio::test]
async fn invalid_checkpoint_fails_to_load() {
    let dir = tempfile::tempdir().unwrap();
    assert!(AppState::load(dir.path(), Duration::from_secs(1)).is_err());
}
