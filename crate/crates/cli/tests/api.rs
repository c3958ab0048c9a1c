use std::sync::{Arc, RwLock};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use brainqc::annotation::{AnnotationStore, ExportedLabel};
use brainqc::model::Volume;
use brainqc::nifti::{export_central_slices, write_slice_pngs};
use brainqc_cli::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    app: Router,
    _dir: tempfile::TempDir,
}

fn fixture(n: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<String> = (1..=n).map(|i| format!("img{i}")).collect();
    let v = Volume::from_fn([8, 9, 10], [1.0; 3], |x, y, z| (x + y + z) as f32).unwrap();
    for id in &images {
        write_slice_pngs(&dir.path().join("slices"), id, &export_central_slices(&v)).unwrap();
    }
    let store = AnnotationStore::open(&dir.path().join("log.jsonl"), images, ["alice".into(), "bob".into()]).unwrap();
    let state = AppState { store: Arc::new(RwLock::new(store)), slices_dir: dir.path().join("slices") };
    Fixture { app: router(state), _dir: dir }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(b.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn graded(rater: &str, m: u8, c: u8, n: u8) -> Value {
    json!({ "rater_id": rater, "straight_reject": false, "gadolinium": false,
            "grades": { "motion": m, "contrast": c, "noise": n } })
}

#[tokio::test]
async fn next_image_walks_each_raters_queue() {
    let f = fixture(3);
    let (s, v) = call_json(&f.app, "GET", "/api/raters/alice/next", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["image_id"], "img1");
    assert_eq!(v["slices"]["axial"], "/api/images/img1/slices/axial.png");
    for id in ["img1", "img2", "img3"] {
        let (s, _) =
            call_json(&f.app, "POST", &format!("/api/images/{id}/annotations"), Some(graded("alice", 0, 0, 0))).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let (_, v) = call_json(&f.app, "GET", "/api/raters/alice/next", None).await;
    assert_eq!(v["exhausted"], true);
    let (_, v) = call_json(&f.app, "GET", "/api/raters/bob/next", None).await;
    assert_eq!(v["image_id"], "img1");
    let (s, v) = call_json(&f.app, "GET", "/api/raters/carol/next", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "annotation");
}

#[tokio::test]
async fn slices_are_served_as_png() {
    let f = fixture(1);
    for view in ["axial", "coronal", "sagittal"] {
        let (s, bytes) = call(&f.app, "GET", &format!("/api/images/img1/slices/{view}.png"), None).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    }
    let (s, _) = call(&f.app, "GET", "/api/images/img1/slices/oblique.png", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&f.app, "GET", "/api/images/nope/slices/axial.png", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn resubmission_creates_version_two() {
    let f = fixture(2);
    let (_, v) = call_json(&f.app, "POST", "/api/images/img1/annotations", Some(graded("alice", 0, 0, 0))).await;
    assert_eq!(v["version"], 1);
    let (_, v) = call_json(&f.app, "POST", "/api/images/img1/annotations", Some(graded("alice", 1, 0, 0))).await;
    assert_eq!(v["version"], 2);
    let (s, v) = call_json(&f.app, "GET", "/api/images/img1/annotations", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["history"].as_array().unwrap().len(), 2);
    assert_eq!(v["current"][0]["version"], 2);
    assert_eq!(v["consensus"]["status"], "awaiting-annotations");
}

#[tokio::test]
async fn invalid_annotations_are_rejected() {
    let f = fixture(1);
    let sr_with_grades = json!({ "rater_id": "alice", "straight_reject": true,
                                  "grades": { "motion": 1, "contrast": 0, "noise": 0 } });
    let (s, v) = call_json(&f.app, "POST", "/api/images/img1/annotations", Some(sr_with_grades)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["kind"], "annotation");
    let (s, _) = call_json(&f.app, "POST", "/api/images/img9/annotations", Some(graded("alice", 0, 0, 0))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let no_rater = json!({ "straight_reject": true });
    let (s, _) = call_json(&f.app, "POST", "/api/images/img1/annotations", Some(no_rater)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let bad_grade = json!({ "rater_id": "alice", "straight_reject": false, "gadolinium": false,
                            "grades": { "motion": 3, "contrast": 0, "noise": 0 } });
    let (s, _) = call(&f.app, "POST", "/api/images/img1/annotations", Some(bad_grade)).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn rater_header_identifies_the_rater() {
    let f = fixture(1);
    let req = Request::builder()
        .method("POST")
        .uri("/api/images/img1/annotations")
        .header("content-type", "application/json")
        .header("x-rater-id", "bob")
        .body(Body::from(json!({ "straight_reject": true }).to_string()))
        .unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    let v: Value = serde_json::from_slice(&to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap();
    assert_eq!(v["rater_id"], "bob");
}

#[tokio::test]
async fn sr_disagreement_goes_through_adjudication() {
    let f = fixture(2);
    call_json(
        &f.app,
        "POST",
        "/api/images/img1/annotations",
        Some(json!({ "rater_id": "alice", "straight_reject": true })),
    )
    .await;
    call_json(&f.app, "POST", "/api/images/img1/annotations", Some(graded("bob", 0, 2, 0))).await;
    call_json(&f.app, "POST", "/api/images/img2/annotations", Some(graded("alice", 0, 0, 1))).await;
    call_json(&f.app, "POST", "/api/images/img2/annotations", Some(graded("bob", 0, 0, 2))).await;

    let (_, p) = call_json(&f.app, "GET", "/api/progress", None).await;
    assert_eq!(p["adjudication_queue"], json!(["img1"]));
    assert_eq!(p["consensus"]["tier3"], 1);
    let (_, v) = call_json(&f.app, "GET", "/api/images/img1/annotations", None).await;
    assert_eq!(v["consensus"]["status"], "pending-adjudication");
    assert_eq!(v["current"].as_array().unwrap().len(), 2);

    let (s, _) =
        call_json(&f.app, "POST", "/api/images/img2/consensus-resolution", Some(json!({ "straight_reject": true })))
            .await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, v) =
        call_json(&f.app, "POST", "/api/images/img1/consensus-resolution", Some(json!({ "straight_reject": false })))
            .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["label"]["tier"], 3);
    assert_eq!(v["label"]["sr_adjudicated"], true);

    let (_, p) = call_json(&f.app, "GET", "/api/progress", None).await;
    assert_eq!(p["adjudication_queue"], json!([]));
    assert_eq!(p["consensus"]["tier3"], 2);

    let (s, body) = call(&f.app, "GET", "/api/export", None).await;
    assert_eq!(s, StatusCode::OK);
    let lines: Vec<ExportedLabel> =
        String::from_utf8(body).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for line in &lines {
        line.label.as_ref().unwrap().validate().unwrap();
    }
}

#[tokio::test]
async fn resolution_before_both_annotations_conflicts() {
    let f = fixture(1);
    let (s, v) =
        call_json(&f.app, "POST", "/api/images/img1/consensus-resolution", Some(json!({ "straight_reject": true })))
            .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["error"]["message"].as_str().unwrap().contains("0 of the 2"));
}

#[tokio::test(flavor = "current_thread")]
async fn concurrent_submissions_lose_nothing() {
    let f = fixture(1);
    let mut tasks = Vec::new();
    for i in 0..10u8 {
        let app = f.app.clone();
        let rater = if i % 2 == 0 { "alice" } else { "bob" };
        tasks.push(tokio::spawn(async move {
            call_json(&app, "POST", "/api/images/img1/annotations", Some(graded(rater, i % 3, 0, 0))).await
        }));
    }
    let mut versions = Vec::new();
    for t in tasks {
        let (s, v) = t.await.unwrap();
        assert_eq!(s, StatusCode::CREATED);
        versions.push((v["rater_id"].as_str().unwrap().to_string(), v["version"].as_u64().unwrap()));
    }
    for rater in ["alice", "bob"] {
        let mut v: Vec<u64> = versions.iter().filter(|(r, _)| r == rater).map(|(_, v)| *v).collect();
        v.sort();
        assert_eq!(v, vec![1, 2, 3, 4, 5]);
    }
    let (_, v) = call_json(&f.app, "GET", "/api/images/img1/annotations", None).await;
    assert_eq!(v["history"].as_array().unwrap().len(), 10);
}
