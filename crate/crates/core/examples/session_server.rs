// Usage: cargo run --release --example session_server [-- <highlighter dir>]
//
// Without a trained highlighter directory (as written by `deictic
// train-highlighter`) a freshly initialized one is used and its masks are
// noise.
//
// Starts the session server in-process and drives it the way a browser
// client would: create a session, add classes, stream frames over the
// websocket while capturing samples, train, then switch to assessment.

use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

use deictic::handseg::OracleParser;
use deictic::highlighter::HighlighterModel;
use deictic::imaging::codec;
use deictic::nn::{BackboneId, DecoderId, ModelSpec};
use deictic::service::{serve, ClientMessage, ServerMessage, ServiceConfig, SessionManager};
use deictic::synth::class_object_frame;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn send(ws: &mut Ws, msg: ClientMessage) {
    ws.send(Message::text(serde_json::to_string(&msg).unwrap())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        if let Message::Text(t) = ws.next().await.expect("socket open").unwrap() {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

#[tokio::main]
async fn main() {
    let dir = std::env::temp_dir().join(format!("deictic-server-{}", std::process::id()));
    let hands = dir.join("hands");
    std::fs::create_dir_all(&hands).unwrap();
    let highlighter = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let p = dir.join("highlighter");
            HighlighterModel::new(ModelSpec::new(BackboneId::TinyCnn, DecoderId::Unet), (64, 64), 0)
                .and_then(|m| m.save(&p))
                .unwrap();
            p
        }
    };

    let config = ServiceConfig::from_toml(&format!(
        r#"
[handseg]
backend = "oracle"
model_path = "{}"
[highlighter]
model = "{}"
[capture]
width = 64
height = 64
[storage]
root = "{}"
[train]
backbone = "tiny-cnn"
pretrained_encoder = false
input_size = [64, 64]
epochs = 15
lr = 0.002
"#,
        hands.display(),
        highlighter.display(),
        dir.join("sessions").display()
    ))
    .unwrap();
    let manager = Arc::new(SessionManager::new(config, HighlighterModel::load(&highlighter).unwrap()).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(manager, listener));
    println!("serving on http://{addr}");

    let http = reqwest::Client::new();
    let post = |path: String, body: Value| {
        let req = http.post(format!("http://{addr}{path}")).json(&body);
        async move { req.send().await.unwrap().json::<Value>().await.unwrap() }
    };
    let session = post("/sessions".into(), json!({})).await;
    let id = session["session_id"].as_str().unwrap().to_string();
    println!("session {id}, mode {}", session["mode"]);
    for label in ["apple", "cup"] {
        post(format!("/sessions/{id}/classes"), json!({ "label": label })).await;
    }

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream")).await.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for class in 0..2 {
        post(format!("/sessions/{id}/active_class"), json!({ "class_id": class })).await;
        for i in 0..5 {
            let frame_id = format!("c{class}-{i}");
            let scene = class_object_frame(&mut rng, class, 64, 64, &frame_id);
            let fixture = OracleParser::fixture_path(&hands, &frame_id);
            codec::write_atomic(&fixture, &codec::encode_mask_png(&scene.hands[0]).unwrap()).unwrap();

            send(&mut ws, ClientMessage::frame(&scene.frame, Some(frame_id.clone())).unwrap()).await;
            if let ServerMessage::Highlight { mask, latency_ms, .. } = recv(&mut ws).await {
                let m = deictic::service::decode_mask_b64(&mask).unwrap();
                let lit = m.values().iter().filter(|v| **v >= 0.5).count();
                println!("{frame_id}: highlight with {lit} lit pixels in {latency_ms:.1} ms");
            }
            send(&mut ws, ClientMessage::capture(&scene.frame, Some(frame_id)).unwrap()).await;
            if let ServerMessage::Captured { sample_id, sample_count, .. } = recv(&mut ws).await {
                println!("  captured {sample_id} ({sample_count} for this class)");
            }
        }
    }

    let job = post(format!("/sessions/{id}/train"), json!({})).await;
    let job_id = job["job_id"].as_str().unwrap().to_string();
    loop {
        let j: Value = http.get(format!("http://{addr}/jobs/{job_id}")).send().await.unwrap().json().await.unwrap();
        println!("job {job_id}: {} {}/{}", j["status"], j["progress"], j["epochs"]);
        if j["status"] == "done" || j["status"] == "failed" {
            break;
        }
        tokio::time::sleep(Duration::from_secs(2)).await;
    }

    post(format!("/sessions/{id}/mode"), json!({ "mode": "assessment" })).await;
    for class in 0..2 {
        let scene = class_object_frame(&mut rng, class, 64, 64, "probe");
        send(&mut ws, ClientMessage::frame(&scene.frame, None).unwrap()).await;
        if let ServerMessage::Prediction { predicted_label, confidences, .. } = recv(&mut ws).await {
            println!("shown a class-{class} object: predicted {predicted_label} {confidences:.3?}");
        }
    }
    println!("session files: {}", dir.join("sessions").join(&id).display());
}
