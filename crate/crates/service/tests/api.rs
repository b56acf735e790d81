use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use finnger_core::dataset::synth::SilhouetteSpec;
use finnger_core::dataset::load_sample;
use finnger_core::model::FinngerModel;
use finnger_service::{router, LoadedModel, ServiceConfig, MAX_BODY_BYTES};
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tower::ServiceExt;

fn model() -> LoadedModel {
    let m = FinngerModel::build(3, 0.125).unwrap();
    let (m, info) = FinngerModel::from_bytes(&m.to_bytes()).unwrap();
    LoadedModel::new(m, &info)
}

fn hand_png(k: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
    SilhouetteSpec::random(k, &mut rng).render().encode_png()
}

async fn call(app: &Router, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let ctype = res.headers().get("content-type").map(|v| v.to_str().unwrap().to_owned());
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    if bytes.is_empty() {
        return (status, Value::Null);
    }
    assert_eq!(ctype.as_deref(), Some("application/json"));
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn predict_returns_normalised_probabilities() {
    let app = router(ServiceConfig { model: Some(model()), ..Default::default() });
    let (status, v) = call(&app, "POST", "/api/predict", hand_png(2)).await;
    assert_eq!(status, StatusCode::OK);
    let probs: Vec<f64> = v["probs"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
    let logs: Vec<f64> = v["logProbs"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
    assert_eq!(probs.len(), 6);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    for (p, l) in probs.iter().zip(&logs) {
        assert!((p - l.exp()).abs() < 1e-6);
    }
    let predicted = v["predicted"].as_u64().unwrap() as usize;
    assert!(probs.iter().all(|&p| p <= probs[predicted]));
    assert!(v["modelVersion"].as_str().unwrap().starts_with("fngr-v1"));
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let app = router(ServiceConfig { model: Some(model()), ..Default::default() });
    let png = hand_png(1);
    for body in [Vec::new(), b"not an image".to_vec(), png[..png.len() / 2].to_vec()] {
        let (status, v) = call(&app, "POST", "/api/predict", body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn oversized_body_is_rejected() {
    let app = router(ServiceConfig { model: Some(model()), ..Default::default() });
    let (status, _) = call(&app, "POST", "/api/predict", vec![0; MAX_BODY_BYTES + 1]).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let app = router(ServiceConfig { model: Some(model()), ..Default::default() });
    let png = hand_png(4);
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, png) = (app.clone(), png.clone());
            tokio::spawn(async move { call(&app, "POST", "/api/predict", png).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, v) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(v);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn health_reports_model_state() {
    let loaded = model();
    let version = loaded.version.clone();
    let app = router(ServiceConfig { model: Some(loaded), ..Default::default() });
    let (status, v) = call(&app, "GET", "/api/health", Vec::new()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["modelVersion"], version.as_str());

    let empty = router(ServiceConfig::default());
    assert_eq!(call(&empty, "GET", "/api/health", Vec::new()).await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(call(&empty, "POST", "/api/predict", hand_png(1)).await.0, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn dataset_capture_writes_distinct_files() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(ServiceConfig { dataset_dir: Some(dir.path().to_owned()), ..Default::default() });
    let png = hand_png(3);
    let (s1, a) = call(&app, "POST", "/api/dataset/3", png.clone()).await;
    let (s2, b) = call(&app, "POST", "/api/dataset/3", png.clone()).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    let (a, b) = (a["path"].as_str().unwrap(), b["path"].as_str().unwrap());
    assert_ne!(a, b);
    assert!(a.starts_with("3/") && a.ends_with(".png"));
    let stored = load_sample(dir.path().join(a)).unwrap();
    assert_eq!(stored.dims(), &[3, 96, 96]);
    assert_eq!(std::fs::read(dir.path().join(b)).unwrap(), png);
}

#[tokio::test]
async fn dataset_capture_validates_input() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(ServiceConfig { dataset_dir: Some(dir.path().to_owned()), ..Default::default() });
    assert_eq!(call(&app, "POST", "/api/dataset/7", hand_png(1)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "POST", "/api/dataset/two", hand_png(1)).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "POST", "/api/dataset/2", b"junk".to_vec()).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);

    let disabled = router(ServiceConfig::default());
    assert_eq!(call(&disabled, "POST", "/api/dataset/2", hand_png(1)).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_static_client() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>t</title>").unwrap();
    let app = router(ServiceConfig { static_dir: Some(dir.path().to_owned()), ..Default::default() });
    let req = Request::builder().uri("/").body(Body::empty()).unwrap();
    let res = app.oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let body = res.into_body().collect().await.unwrap().to_bytes();
    assert!(body.starts_with(b"<!doctype html>"));
}
