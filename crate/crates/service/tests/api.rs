use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use poisint_core::io::cdf_from_csv;
use poisint_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(state: &AppState, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(state: &AppState, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(state, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post(state: &AppState, body: Value) -> (StatusCode, Value) {
    let req = Request::post("/solve")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = call(state, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn example_one() -> Value {
    json!({"g": "s", "n": "1", "T": 1.0, "delta": 1e-3, "h": 1e-3, "x_max": 3.0})
}

async fn wait_done(state: &AppState, id: &str) -> Value {
    for _ in 0..600 {
        let (s, v) = get(state, &format!("/jobs/{id}")).await;
        assert_eq!(s, StatusCode::OK);
        if v["status"] == "done" || v["status"] == "failed" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread")]
async fn solve_and_query() {
    let state = AppState::new();
    let (s, v) = post(&state, example_one()).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = v["job_id"].as_str().unwrap().to_string();
    let job = wait_done(&state, &id).await;
    assert_eq!(job["status"], "done");
    let atom = &job["result"]["atoms"][0];
    assert_eq!(atom["x"], 0.0);
    assert!((atom["mass"].as_f64().unwrap() - (-1.0f64).exp()).abs() < 1e-10);

    let (_, v) = get(&state, &format!("/jobs/{id}/cdf?x=-1")).await;
    assert_eq!(v["F"], 0.0);
    let (_, v) = get(&state, &format!("/jobs/{id}/cdf?x=0")).await;
    assert!((v["F"].as_f64().unwrap() - 0.367879).abs() < 1e-3);

    let (_, v) = get(&state, &format!("/jobs/{id}/quantile?p=0")).await;
    assert_eq!(v["x"], 0.0);
    let (_, v) = get(&state, &format!("/jobs/{id}/quantile?p=0.5")).await;
    let x = v["x"].as_f64().unwrap();
    assert!(x > 0.0 && x < 1.0);
    // smallest node whose value reaches one half
    let (_, below) = get(&state, &format!("/jobs/{id}/cdf?x={}", x - 1e-3)).await;
    let (_, at) = get(&state, &format!("/jobs/{id}/cdf?x={x}")).await;
    assert!(below["F"].as_f64().unwrap() < 0.5 && at["F"].as_f64().unwrap() >= 0.5);

    let (s, _) = get(&state, &format!("/jobs/{id}/quantile?p=1.5")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, d) = get(&state, &format!("/jobs/{id}/density?window=0.05")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(d["values"].as_array().unwrap().len(), 3001);
    assert_eq!(d["atoms"][0]["x"], 0.0);
    let (s, _) = get(&state, &format!("/jobs/{id}/density?delta1=0.0001")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, body) = call(&state, Request::get(format!("/jobs/{id}/csv")).body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    let grid = cdf_from_csv(std::str::from_utf8(&body).unwrap()).unwrap();
    assert_eq!(grid.mesh().len(), 3001);
}

#[tokio::test]
async fn unknown_job_is_404() {
    let state = AppState::new();
    let (s, _) = get(&state, "/jobs/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = get(&state, "/jobs/nope/csv").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn parse_error_is_400_with_offset() {
    let state = AppState::new();
    let mut cfg = example_one();
    cfg["g"] = json!("s^");
    let (s, v) = post(&state, cfg).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["errors"][0]["field"], "g");
    assert_eq!(v["errors"][0]["offset"], 2);

    let (s, v) = post(&state, json!({"g": "s"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["errors"][0]["field"], "body");
}

#[tokio::test]
async fn unstable_config_is_422() {
    let state = AppState::new();
    let mut cfg = example_one();
    cfg["h"] = json!(2.0);
    cfg["delta"] = json!(0.5);
    let (s, v) = post(&state, cfg).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["margin"].as_f64().unwrap() < 0.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn pending_job_is_409_and_failures_carry_errors() {
    let state = AppState::new();
    // division by zero at s = 0.5 fails the job once it runs
    let cfg = json!({"g": "1/(s-0.5)", "n": "1", "T": 1.0, "delta": 0.01, "h": 0.01, "x_max": 3.0});
    let (_, v) = post(&state, cfg).await;
    let id = v["job_id"].as_str().unwrap().to_string();
    let job = wait_done(&state, &id).await;
    assert_eq!(job["status"], "failed");
    assert!(!job["error"].as_str().unwrap().is_empty());
    let (s, v) = get(&state, &format!("/jobs/{id}/cdf?x=1")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["status"], "failed");
}

#[tokio::test(flavor = "multi_thread")]
async fn identical_posts_get_distinct_jobs_with_equal_results() {
    let state = AppState::new();
    let cfg = json!({"g": "sin(2*pi*s)", "n": "1", "T": 1.0, "delta": 0.01, "h": 0.01, "x_max": 2.0});
    let (a, b) = tokio::join!(post(&state, cfg.clone()), post(&state, cfg));
    let ia = a.1["job_id"].as_str().unwrap().to_string();
    let ib = b.1["job_id"].as_str().unwrap().to_string();
    assert_ne!(ia, ib);
    wait_done(&state, &ia).await;
    wait_done(&state, &ib).await;
    let (_, ca) = call(&state, Request::get(format!("/jobs/{ia}/csv")).body(Body::empty()).unwrap()).await;
    let (_, cb) = call(&state, Request::get(format!("/jobs/{ib}/csv")).body(Body::empty()).unwrap()).await;
    assert_eq!(ca, cb);
}
