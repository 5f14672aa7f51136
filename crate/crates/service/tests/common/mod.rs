#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use stepcoin_core::lexicon::{Domain, Lexicon, Step, Task};
use stepcoin_service::{router, ProjectRegistry};
use tower::ServiceExt;

/// Two tasks: task 0 owns steps 0..3, task 1 owns steps 3..5.
pub fn lexicon() -> Lexicon {
    let domains = vec![Domain { id: 0, name: "Vehicles".into() }];
    let tasks = vec![
        Task { id: 0, domain_id: 0, name: "Change Car Tire".into() },
        Task { id: 1, domain_id: 0, name: "Replace Wiper".into() },
    ];
    let phrases = [
        (0, "unscrew the screws"),
        (0, "jack up the car"),
        (0, "put on the tire"),
        (1, "remove the old blade"),
        (1, "attach the new blade"),
    ];
    let steps = phrases
        .iter()
        .enumerate()
        .map(|(id, &(task_id, p))| Step { id, task_id, phrase: p.into() })
        .collect();
    Lexicon::new("test-v1", domains, tasks, steps).unwrap()
}

/// Writes a project with the given videos, each 10 s long with frames
/// extracted at 2 and 10 fps. Returns the data root.
pub fn make_project(root: &Path, project_id: &str, video_ids: &[&str]) -> PathBuf {
    let dir = root.join(project_id);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("lexicon.json"), lexicon().to_json_string()).unwrap();
    let videos: Vec<Value> = video_ids
        .iter()
        .map(|v| {
            for rate in ["2", "10"] {
                let d = dir.join("frames").join(v).join(rate);
                fs::create_dir_all(&d).unwrap();
                fs::write(d.join("000000.jpg"), format!("{v}@{rate}")).unwrap();
            }
            json!({
                "video_id": v,
                "duration": 10.0,
                "frame_dir": format!("frames/{v}"),
                "native_fps_available": [2.0, 10.0],
                "task_id": 0
            })
        })
        .collect();
    let cfg = json!({ "project_id": project_id, "lexicon": "lexicon.json", "videos": videos });
    fs::write(dir.join("project.json"), serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    dir
}

pub fn app(root: &Path) -> Router {
    router(ProjectRegistry::open(root).unwrap())
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

pub fn draft(video: &str, pass: u8, segments: &[(f64, f64, usize)]) -> Value {
    json!({
        "video_id": video,
        "author_pass": pass,
        "segments": segments
            .iter()
            .map(|&(s, e, k)| json!({ "start": s, "end": e, "step_id": k }))
            .collect::<Vec<_>>(),
    })
}

pub async fn submit(
    app: &Router,
    project: &str,
    video: &str,
    pass: u8,
    rev: u64,
    complete: bool,
    segments: &[(f64, f64, usize)],
) -> (StatusCode, Value) {
    post(
        app,
        &format!("/api/projects/{project}/videos/{video}/annotation"),
        json!({ "draft": draft(video, pass, segments), "expected_revision": rev, "complete": complete }),
    )
    .await
}

/// Drives a video through all three passes.
pub async fn finish(app: &Router, project: &str, video: &str, segments: &[(f64, f64, usize)]) {
    for pass in 1..=3u8 {
        let (status, body) = submit(app, project, video, pass, (pass - 1) as u64, true, segments).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
}
