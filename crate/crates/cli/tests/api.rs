use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use florae_cli::api::{router, SharedState, API_VERSION};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn small_session() -> Value {
    json!({"preset": "persistence", "n_candidates": 3, "seed": 4, "frame_every": 100})
}

#[tokio::test]
async fn full_session_flow() {
    let app = router(SharedState::default());
    let (st, created) = call(&app, "POST", "/sessions", Some(small_session())).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(created["api_version"], API_VERSION);
    let id = created["session_id"].as_str().unwrap().to_string();
    assert_eq!(created["candidates"].as_array().unwrap().len(), 3);

    let (st, frames) = call(&app, "GET", &format!("/sessions/{id}/candidates/2/frames"), None).await;
    assert_eq!(st, StatusCode::OK);
    let w = frames["width"].as_u64().unwrap() as usize;
    let h = frames["height"].as_u64().unwrap() as usize;
    let fs = frames["frames"].as_array().unwrap();
    assert_eq!(fs.len(), 4);
    assert!(fs.iter().all(|f| f.as_array().unwrap().len() == w * h));
    let n_colors = frames["palette"].as_array().unwrap().len() as u64;
    assert!(fs[0].as_array().unwrap().iter().all(|v| v.as_u64().unwrap() < n_colors));
    assert!(frames["n_repro"].is_u64());

    for pick in [0, 2, 1] {
        let (st, s) = call(&app, "POST", &format!("/sessions/{id}/choice"), Some(json!({"index": pick}))).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(s["api_version"], API_VERSION);
    }
    let (_, s) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s["generation"], 3);
    assert_eq!(s["history"].as_array().unwrap().len(), 3);
    assert_eq!(s["state"], "active");

    let (st, _) = call(&app, "GET", &format!("/sessions/{id}/record"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let deploy = json!({"width": 32, "height": 24, "steps": 50, "reps": 2});
    let (st, d) = call(&app, "POST", &format!("/sessions/{id}/deploy"), Some(deploy.clone())).await;
    assert_eq!(st, StatusCode::OK, "{d}");
    assert_eq!(d["report"]["replicas"].as_array().unwrap().len(), 2);
    assert!(d["report"]["extinction_pct"].is_number());

    let (st, r) = call(&app, "GET", &format!("/sessions/{id}/record"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(r["record"]["n_steps"], 50);

    let (st, e) = call(&app, "POST", &format!("/sessions/{id}/choice"), Some(json!({"index": 0}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(e["code"], "session_closed");
    let (st, _) = call(&app, "POST", &format!("/sessions/{id}/deploy"), Some(deploy)).await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn errors_are_json() {
    let app = router(SharedState::default());
    let (st, e) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "session_not_found");
    assert_eq!(e["api_version"], API_VERSION);
    assert!(e["message"].is_string());

    let (st, e) = call(&app, "POST", "/sessions", Some(json!({"preset": "moon"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "invalid_json");

    let (st, e) = call(&app, "POST", "/sessions", Some(json!({"params": [1.0, 2.0]}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "invalid_request");

    let (_, created) = call(&app, "POST", "/sessions", Some(small_session())).await;
    let id = created["session_id"].as_str().unwrap();
    let (st, e) = call(&app, "POST", &format!("/sessions/{id}/choice"), Some(json!({"index": 3}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["code"], "invalid_candidate");
    let (_, s) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s["generation"], 0);
    let (st, _) = call(&app, "GET", &format!("/sessions/{id}/candidates/9/frames"), None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn session_ids_are_unique() {
    let app = router(SharedState::default());
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move {
                call(&app, "POST", "/sessions", Some(json!({"n_candidates": 1, "frame_every": 300}))).await
            })
        })
        .collect();
    let mut ids = std::collections::BTreeSet::new();
    for h in handles {
        let (st, v) = h.await.unwrap();
        assert_eq!(st, StatusCode::CREATED);
        assert!(ids.insert(v["session_id"].as_str().unwrap().to_string()));
    }
}
