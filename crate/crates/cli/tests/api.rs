use std::net::TcpListener as StdListener;
use std::time::Duration;

use axum::http::StatusCode;
use serde_json::{json, Value};
use topoforge::raster::GrayImage;
use topoforge::{DesignProblem, GenerationParams, Grid, Palette, SolverConfig};
use topoforge_cli::run::{self, SolveInput};
use topoforge_cli::server::{AppState, ServiceConfig};

mod common;
use common::*;

const LIMIT: Duration = Duration::from_secs(120);

fn job_body(sketch: &[u8], vf: f64) -> Value {
    json!({
        "sketch_png_b64": b64(sketch),
        "mask_png_b64": null,
        "volume_fraction": vf,
        "load_angle_deg": 270.0,
        "strength": 0.7,
        "backend": "simp",
        "batch_count": 1,
        "seed": null,
    })
}

#[tokio::test]
async fn health_palette_and_missing_routes() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = service(tmp.path(), &[]);
    assert_eq!(
        call(&app, "GET", "/api/health", None).await,
        (StatusCode::OK, json!({"status": "ok"}))
    );

    let (status, palette) = call(&app, "GET", "/api/palette", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(palette, serde_json::to_value(Palette::default()).unwrap());
    let roles: Vec<&str> = palette["codes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["role"].as_str().unwrap())
        .collect();
    for role in [
        "Material",
        "Load",
        "FixX",
        "FixY",
        "FixXY",
        "Mask",
        "Background",
    ] {
        assert!(roles.contains(&role), "{role} missing from {roles:?}");
    }

    let (status, body) = call(&app, "GET", "/api/jobs/unknown", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("unknown"));
    assert_eq!(
        call(&app, "GET", "/index.html", None).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn invalid_requests_are_rejected_with_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = service(tmp.path(), &[("grid", "12x12")]);
    let sketch = benchmark_sketch(Grid::new(12, 12), 2);

    let (status, body) = call(&app, "POST", "/api/jobs", Some(job_body(&sketch, 1.5))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "volume_fraction");
    assert!(body["error"].as_str().unwrap().contains("1.5"));

    let mut b = job_body(&sketch, 0.2);
    b["batch_count"] = json!(0);
    assert_eq!(
        call(&app, "POST", "/api/jobs", Some(b)).await.1["field"],
        "batch_count"
    );
    let mut b = job_body(&sketch, 0.2);
    b["backend"] = json!("remote");
    assert_eq!(
        call(&app, "POST", "/api/jobs", Some(b)).await.1["field"],
        "backend"
    );

    let (status, body) = call(
        &app,
        "POST",
        "/api/jobs",
        Some(job_body(&white_png(24, 24), 0.2)),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "sketch_png_b64");
    assert!(body["error"].as_str().unwrap().contains("NoMaterial"));

    // missing required field
    let (status, body) = call(
        &app,
        "POST",
        "/api/jobs",
        Some(json!({"volume_fraction": 0.2})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("sketch_png_b64"));
    // not JSON at all
    let (status, _) = call_raw(&app, "POST", "/api/jobs", Some("{nope".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // nothing was queued
    assert_eq!(call(&app, "GET", "/api/jobs", None).await.1, json!([]));
    drop(state);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn job_results_match_the_runner() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = service(tmp.path(), &[("grid", "16x16")]);
    let sketch = benchmark_sketch(Grid::new(16, 16), 4);
    let mut body = job_body(&sketch, 0.3);
    body["seed"] = json!(11);
    body["batch_count"] = json!(2);

    let (status, created) = call(&app, "POST", "/api/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = created["job_id"].as_str().unwrap().to_string();
    let job = wait_job(&app, &id, LIMIT).await;
    assert_eq!(job["state"], "Done", "{job}");
    assert_eq!(job["error"], Value::Null);
    let results = job["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);

    let input = SolveInput {
        sketch_png: sketch,
        mask_png: None,
        prior_png: None,
        grid: Grid::new(16, 16),
        params: GenerationParams {
            volume_fraction: Some(0.3),
            batch_count: 2,
            seed: Some(11),
            solver: SolverConfig::default(),
            ..GenerationParams::default()
        },
        threshold: 0.5,
    };
    let direct = run::solve(&input).unwrap();
    for (r, (entry, png)) in results
        .iter()
        .zip(direct.entries.iter().zip(&direct.structures))
    {
        let report = entry.report.as_ref().unwrap();
        assert_eq!(r["compliance"].as_f64().unwrap(), report.compliance);
        assert_eq!(
            r["vf_global_pct"].as_f64().unwrap(),
            100.0 * report.vf_global
        );
        assert_eq!(r["vf_editable_pct"], Value::Null);
        assert_eq!(
            unb64(r["structure_png_b64"].as_str().unwrap()),
            *png.as_ref().unwrap()
        );
        assert_eq!(
            serde_json::from_value::<run::RunEntry>(r["entry"].clone()).unwrap(),
            *entry
        );
        let on_disk = std::fs::read(
            tmp.path()
                .join(&id)
                .join(r["structure_path"].as_str().unwrap()),
        )
        .unwrap();
        assert_eq!(on_disk, *png.as_ref().unwrap());
    }
    assert!(tmp.path().join(&id).join("manifest.json").exists());
    assert!(job["finished_unix_ms"].as_u64().unwrap() >= job["created_unix_ms"].as_u64().unwrap());
    assert_eq!(
        call(&app, "GET", "/api/jobs", None).await.1,
        json!([{"id": id, "state": "Done"}])
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_jobs_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = service(tmp.path(), &[("grid", "12x12"), ("workers", "2")]);
    let sketch = benchmark_sketch(Grid::new(12, 12), 2);
    let mut ids = Vec::new();
    for vf in [0.3, 0.5] {
        let (status, created) = call(&app, "POST", "/api/jobs", Some(job_body(&sketch, vf))).await;
        assert_eq!(status, StatusCode::ACCEPTED);
        ids.push(created["job_id"].as_str().unwrap().to_string());
    }
    assert_ne!(ids[0], ids[1]);
    for (id, vf) in ids.iter().zip([0.3, 0.5]) {
        let job = wait_job(&app, id, LIMIT).await;
        assert_eq!(job["state"], "Done", "{job}");
        let problem = DesignProblem::from_json(
            &std::fs::read_to_string(tmp.path().join(id).join("problem.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(problem.volume_fraction, vf);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn masked_iterate_keeps_prior_pixels() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = Grid::new(16, 16);
    let (app, _) = service(tmp.path(), &[("grid", "16x16")]);
    let mask: Vec<bool> = (0..grid.n_elements())
        .map(|e| grid.element_row_col(e).0 < 8)
        .collect();
    let problem = DesignProblem::benchmark(grid).with_mask(mask.clone());
    let sketch = sketch_of(&problem, 4);

    let (_, created) = call(&app, "POST", "/api/jobs", Some(job_body(&sketch, 0.3))).await;
    let first = wait_job(&app, created["job_id"].as_str().unwrap(), LIMIT).await;
    let prior_b64 = first["results"][0]["structure_png_b64"]
        .as_str()
        .unwrap()
        .to_string();

    let mut body = job_body(&sketch, 0.3);
    body["mask_png_b64"] = json!(b64(&mask_of(&problem, 4).unwrap()));
    body["prior_png_b64"] = json!(prior_b64);
    body["strength"] = json!(0.6);
    body["seed"] = json!(5);
    let (status, created) = call(&app, "POST", "/api/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = wait_job(&app, created["job_id"].as_str().unwrap(), LIMIT).await;
    assert_eq!(job["state"], "Done", "{job}");
    let result = &job["results"][0];
    let prior = GrayImage::from_png(&unb64(&prior_b64)).unwrap();
    let after = GrayImage::from_png(&unb64(result["structure_png_b64"].as_str().unwrap())).unwrap();
    for (e, _) in mask.iter().enumerate().filter(|(_, &m)| !m) {
        assert_eq!(prior.values[e], after.values[e], "element {e}");
    }
    assert!(result["vf_editable_pct"].as_f64().is_some());
    assert!(result["prior_drift"].as_f64().unwrap() > 0.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn remote_failures_fail_the_job() {
    let tmp = tempfile::tempdir().unwrap();
    let closed = {
        let l = StdListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let (app, _) = service(
        tmp.path(),
        &[
            ("grid", "12x12"),
            ("remote_url", &closed),
            ("remote_timeout_ms", "2000"),
        ],
    );
    let mut body = job_body(&benchmark_sketch(Grid::new(12, 12), 2), 0.3);
    body["backend"] = json!("remote");
    let (status, created) = call(&app, "POST", "/api/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = wait_job(&app, created["job_id"].as_str().unwrap(), LIMIT).await;
    assert_eq!(job["state"], "Failed");
    assert!(job["error"].as_str().unwrap().contains("remote"), "{job}");
    assert_eq!(job["results"], json!([]));
}

#[tokio::test]
async fn static_files_are_served() {
    let tmp = tempfile::tempdir().unwrap();
    let site = tmp.path().join("site");
    std::fs::create_dir_all(site.join("assets")).unwrap();
    std::fs::write(
        site.join("index.html"),
        "<!doctype html><title>studio</title>",
    )
    .unwrap();
    std::fs::write(site.join("assets/app.js"), "console.log(1)").unwrap();
    let (app, _) = service(tmp.path(), &[("static_dir", site.to_str().unwrap())]);
    let (status, body) = call_raw(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("studio"));
    let (status, body) = call_raw(&app, "GET", "/assets/app.js", None).await;
    assert_eq!((status, body), (StatusCode::OK, b"console.log(1)".to_vec()));
    // the API still takes priority
    assert_eq!(
        call(&app, "GET", "/api/health", None).await.0,
        StatusCode::OK
    );
}

#[test]
fn serves_over_tcp() {
    let tmp = tempfile::tempdir().unwrap();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    let settings = {
        let mut s = topoforge_cli::config::Settings::resolve(&[]).unwrap();
        s.out = Some(tmp.path().to_path_buf());
        s
    };
    runtime.spawn(topoforge_cli::server::serve(
        listener,
        AppState::new(ServiceConfig::from_settings(settings)),
    ));
    let health: Value = ureq::get(&format!("http://{addr}/api/health"))
        .call()
        .unwrap()
        .body_mut()
        .read_json()
        .unwrap();
    assert_eq!(health, json!({"status": "ok"}));
}
