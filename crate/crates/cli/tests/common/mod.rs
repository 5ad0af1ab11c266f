#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::Value;
use topoforge::problem::render_mask_layer;
use topoforge::{render_problem, DesignProblem, Grid, Palette};
use topoforge_cli::config::Settings;
use topoforge_cli::server::{router, AppState, ServiceConfig};
use tower::ServiceExt;

/// The cantilever-like benchmark drawn at `scale` pixels per element.
pub fn benchmark_sketch(grid: Grid, scale: usize) -> Vec<u8> {
    sketch_of(&DesignProblem::benchmark(grid), scale)
}

pub fn sketch_of(problem: &DesignProblem, scale: usize) -> Vec<u8> {
    let g = problem.grid;
    let stripped = DesignProblem {
        mask: None,
        ..problem.clone()
    };
    render_problem(
        &stripped,
        &Palette::default(),
        g.nelx * scale,
        g.nely * scale,
    )
    .to_png()
    .unwrap()
}

pub fn mask_of(problem: &DesignProblem, scale: usize) -> Option<Vec<u8>> {
    let g = problem.grid;
    render_mask_layer(problem, &Palette::default(), g.nelx * scale, g.nely * scale)
        .map(|m| m.to_png().unwrap())
}

pub fn white_png(w: usize, h: usize) -> Vec<u8> {
    topoforge::RasterSketch::filled(w, h, [255, 255, 255, 255])
        .unwrap()
        .to_png()
        .unwrap()
}

pub fn topoforge(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_topoforge"));
    cmd.args(args).current_dir(dir).env_clear();
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

pub fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

pub fn service(out_root: &Path, layers: &[(&str, &str)]) -> (Router, Arc<AppState>) {
    let layer = layers
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut settings = Settings::resolve(&[layer]).unwrap();
    settings.out = Some(out_root.to_path_buf());
    let state = AppState::new(ServiceConfig::from_settings(settings));
    (router(state.clone()), state)
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body.map(|b| b.to_string())).await;
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

pub async fn call_raw(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX)
        .await
        .unwrap()
        .to_vec();
    (status, bytes)
}

/// Poll a job until it leaves Queued/Running.
pub async fn wait_job(app: &Router, id: &str, limit: Duration) -> Value {
    let start = std::time::Instant::now();
    loop {
        let (status, job) = call(app, "GET", &format!("/api/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let state = job["state"].as_str().unwrap().to_string();
        if state == "Done" || state == "Failed" {
            return job;
        }
        assert!(start.elapsed() < limit, "job {id} still {state}");
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
}

pub fn b64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

pub fn unb64(s: &str) -> Vec<u8> {
    B64.decode(s).unwrap()
}

/// Every file under `dir`, as sorted relative paths.
pub fn files_under(dir: &Path) -> Vec<String> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(
                    p.strip_prefix(base)
                        .unwrap()
                        .to_string_lossy()
                        .replace('\\', "/"),
                );
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
