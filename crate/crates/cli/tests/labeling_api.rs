//! Labeling API through the router, with ground truth re-composed on the
//! client side from the raw mask bits.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::Engine;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use offroad_cli::server::{router, FrameView, LabelReply};
use offroad_core::harness::{write_frame, Label, LabelStore, StoredFrame, ToggleState};
use offroad_core::mask::{Mask, Rle};
use offroad_core::segmentation::{annotate, FrameSource};
use offroad_core::world::{ClassSet, SensorPatch, TerrainClass};

const W: usize = 16;
const H: usize = 12;

/// Eight overlapping rectangles; masks 6 and 7 cut across 4 and 5.
fn rects() -> Vec<[usize; 4]> {
    vec![
        [0, 0, 4, 4],
        [4, 0, 8, 4],
        [8, 0, 16, 4],
        [0, 4, 8, 12],
        [6, 4, 16, 10],
        [5, 2, 10, 8],
        [2, 6, 12, 11],
        [12, 8, 16, 12],
    ]
}

fn frame(id: u64) -> StoredFrame {
    let patch = SensorPatch::from_classes(id, W, H, vec![TerrainClass::Dirt; W * H]);
    let masks = rects()
        .into_iter()
        .map(|[x0, y0, x1, y1]| Mask::from_fn(W, H, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1))
        .collect();
    let annotated = annotate(masks, FrameSource::of(&patch)).unwrap();
    StoredFrame::new(patch, &annotated, ClassSet::default_drivable())
}

fn store(ids: &[u64]) -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    for &id in ids {
        write_frame(dir.path(), &frame(id)).unwrap();
    }
    let store = LabelStore::open(dir.path()).unwrap();
    (dir, router(Arc::new(store)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

/// Pixel set of a rectangle, straight from its coordinates.
fn rect_pixel(i: usize, x: usize, y: usize) -> bool {
    let [x0, y0, x1, y1] = rects()[i - 1];
    x >= x0 && x < x1 && y >= y0 && y < y1
}

/// Client-side preview: (any added) and not (any subtracted).
fn preview(states: &BTreeMap<usize, ToggleState>) -> Mask {
    Mask::from_fn(W, H, |x, y| {
        let hit = |want| {
            states
                .iter()
                .any(|(&i, &s)| s == want && rect_pixel(i, x, y))
        };
        hit(ToggleState::Add) && !hit(ToggleState::Subtract)
    })
}

fn states(pairs: &[(usize, &str)]) -> Value {
    json!({ "states": pairs.iter().map(|(i, s)| (i.to_string(), json!(s))).collect::<serde_json::Map<_, _>>() })
}

fn decode(v: &Value) -> Mask {
    let rle: Rle = serde_json::from_value(v["gt_rle"].clone()).unwrap();
    Mask::from_rle(&rle).unwrap()
}

#[tokio::test]
async fn frames_are_listed_in_numerical_order() {
    let (_dir, app) = store(&[12, 3, 100, 7]);
    let (status, body) = call(&app, "GET", "/frames", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!([3, 7, 12, 100]));
}

#[tokio::test]
async fn frame_view_carries_images_and_masks() {
    let (_dir, app) = store(&[5]);
    let (status, body) = call(&app, "GET", "/frames/5", None).await;
    assert_eq!(status, StatusCode::OK);
    let view: FrameView = serde_json::from_value(body).unwrap();
    assert_eq!(view.masks.len(), 8);
    assert_eq!(
        view.masks.iter().map(|m| m.index).collect::<Vec<_>>(),
        (1..=8).collect::<Vec<_>>()
    );
    for b64 in [&view.original_image_b64, &view.annotated_image_b64] {
        let png = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }
    let m4 = Mask::from_rle(&view.masks[3].rle).unwrap();
    assert_eq!(m4, Mask::from_fn(W, H, |x, y| rect_pixel(4, x, y)));
}

#[tokio::test]
async fn unknown_frames_are_not_found() {
    let (_dir, app) = store(&[1]);
    assert_eq!(
        call(&app, "GET", "/frames/2", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, "GET", "/frames/2/label", None).await.0,
        StatusCode::NOT_FOUND
    );
    let post = call(&app, "POST", "/frames/2/label", Some(states(&[(1, "add")]))).await;
    assert_eq!(post.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn toggling_a_missing_mask_index_is_rejected() {
    let (_dir, app) = store(&[1]);
    let (status, _) = call(&app, "POST", "/frames/1/label", Some(states(&[(9, "add")]))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn add_then_subtract_sequence_composes_the_expected_truth() {
    let (_dir, app) = store(&[1]);
    let (status, first) = call(
        &app,
        "POST",
        "/frames/1/label",
        Some(states(&[(4, "add"), (5, "add"), (6, "add")])),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["version"], 1);
    let (_, second) = call(
        &app,
        "POST",
        "/frames/1/label",
        Some(states(&[(6, "subtract"), (7, "subtract")])),
    )
    .await;
    assert_eq!(second["version"], 2);

    let expected = Mask::from_fn(W, H, |x, y| {
        (rect_pixel(4, x, y) || rect_pixel(5, x, y))
            && !(rect_pixel(6, x, y) || rect_pixel(7, x, y))
    });
    assert_eq!(decode(&second), expected);
    assert_ne!(decode(&first), expected);

    // Resetting mask 7 restores the parts of 4 and 5 only 7 was removing.
    let (_, third) = call(
        &app,
        "POST",
        "/frames/1/label",
        Some(states(&[(7, "reset")])),
    )
    .await;
    let expected = Mask::from_fn(W, H, |x, y| {
        (rect_pixel(4, x, y) || rect_pixel(5, x, y)) && !rect_pixel(6, x, y)
    });
    assert_eq!(decode(&third), expected);

    let (_, stored) = call(&app, "GET", "/frames/1/label", None).await;
    let label: Label = serde_json::from_value(stored).unwrap();
    assert_eq!(label.version, 3);
    assert_eq!(Mask::from_rle(&label.gt_rle).unwrap(), expected);
    assert_eq!(
        label.states,
        BTreeMap::from([
            (4, ToggleState::Add),
            (5, ToggleState::Add),
            (6, ToggleState::Subtract)
        ])
    );
}

#[tokio::test]
async fn stale_versions_conflict() {
    let (_dir, app) = store(&[1]);
    let mut body = states(&[(1, "add")]);
    body["version"] = json!(0);
    assert_eq!(
        call(&app, "POST", "/frames/1/label", Some(body.clone()))
            .await
            .0,
        StatusCode::OK
    );
    // A second client still holding version 0.
    let (status, err) = call(&app, "POST", "/frames/1/label", Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["version"], 1);
    let mut body = states(&[(2, "add")]);
    body["version"] = json!(1);
    let (status, ok) = call(&app, "POST", "/frames/1/label", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ok["version"], 2);
}

#[tokio::test]
async fn unlabeled_frames_report_an_empty_version_zero_label() {
    let (_dir, app) = store(&[4]);
    let (status, body) = call(&app, "GET", "/frames/4/label", None).await;
    assert_eq!(status, StatusCode::OK);
    let label: Label = serde_json::from_value(body).unwrap();
    assert_eq!(label.version, 0);
    assert_eq!(Mask::from_rle(&label.gt_rle).unwrap(), Mask::new(W, H));
}

#[tokio::test]
async fn labels_survive_a_restart() {
    let (dir, app) = store(&[1]);
    let (_, reply) = call(
        &app,
        "POST",
        "/frames/1/label",
        Some(states(&[(3, "add"), (8, "add")])),
    )
    .await;
    let reopened = router(Arc::new(LabelStore::open(dir.path()).unwrap()));
    let (_, stored) = call(&reopened, "GET", "/frames/1/label", None).await;
    assert_eq!(stored["gt_rle"], reply["gt_rle"]);
    assert_eq!(stored["version"], 1);
}

#[tokio::test]
async fn randomized_click_sequences_match_the_client_preview() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1AB);
    for seq in 0..100u64 {
        let (_dir, app) = store(&[seq]);
        // Tri-state cycle per mask: neutral → add → subtract → neutral.
        let mut client: BTreeMap<usize, ToggleState> = BTreeMap::new();
        let mut version = 0;
        for _ in 0..rng.random_range(1..6) {
            let mut batch = Vec::new();
            for _ in 0..rng.random_range(1..5) {
                let i = rng.random_range(1..=8);
                let next = match client.get(&i) {
                    None => ToggleState::Add,
                    Some(ToggleState::Add) => ToggleState::Subtract,
                    Some(_) => ToggleState::Reset,
                };
                match next {
                    ToggleState::Reset => client.remove(&i),
                    s => client.insert(i, s),
                };
                batch.retain(|&(j, _)| j != i);
                batch.push((i, next));
            }
            let names: Vec<(usize, &str)> = batch
                .iter()
                .map(|&(i, s)| {
                    (
                        i,
                        match s {
                            ToggleState::Add => "add",
                            ToggleState::Subtract => "subtract",
                            ToggleState::Reset => "reset",
                        },
                    )
                })
                .collect();
            let mut body = states(&names);
            body["version"] = json!(version);
            let (status, reply) =
                call(&app, "POST", &format!("/frames/{seq}/label"), Some(body)).await;
            assert_eq!(status, StatusCode::OK, "sequence {seq}: {reply}");
            let reply: LabelReply = serde_json::from_value(reply).unwrap();
            assert_eq!(reply.version, version + 1);
            version = reply.version;
            assert_eq!(
                Mask::from_rle(&reply.gt_rle).unwrap(),
                preview(&client),
                "sequence {seq}"
            );
        }
    }
}
