#![allow(dead_code)]

//! Scripted headless client for the session server.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::Message;

use deictic::datamgmt::load_session;
use deictic::handseg::OracleParser;
use deictic::highlighter::HighlighterModel;
use deictic::imaging::{codec, resize_frame_bilinear};
use deictic::nn::{BackboneId, DecoderId, ModelSpec};
use deictic::service::{
    decode_mask_b64, replay, serve, ClientMessage, ServerMessage, ServiceConfig, SessionManager, SCHEMA_JSON,
};
use deictic::synth::{class_object_frame, Scene};

pub type Check<T> = std::result::Result<T, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}
#[allow(unused_imports)]
pub(crate) use ensure;

pub fn err<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{context}: {e}")
}

pub struct Server {
    pub addr: SocketAddr,
    pub manager: Arc<SessionManager>,
    pub config: ServiceConfig,
    pub highlighter_dir: PathBuf,
    pub fixtures: PathBuf,
}

pub fn config_toml(root: &Path, fixtures: &Path, highlighter: &Path, size: u32, train_epochs: usize) -> String {
    format!(
        r#"
[handseg]
backend = "oracle"
model_path = "{fixtures}"

[highlighter]
model = "{highlighter}"

[capture]
width = {size}
height = {size}

[stream]
max_fps = 24

[storage]
root = "{root}"

[train]
backbone = "tiny-cnn"
pretrained_encoder = false
input_size = [{size}, {size}]
epochs = {train_epochs}
lr = 0.002
seed = 0
"#,
        fixtures = fixtures.display(),
        highlighter = highlighter.display(),
        root = root.display(),
    )
}

/// Saves a freshly initialized tiny highlighter, loads it back the way the
/// server binary does, and serves on an ephemeral port.
pub async fn start_server(tmp: &Path, size: u32, train_epochs: usize) -> Check<Server> {
    let fixtures = tmp.join("hands");
    let highlighter_dir = tmp.join("highlighter");
    std::fs::create_dir_all(&fixtures).map_err(err("fixtures dir"))?;
    HighlighterModel::new(ModelSpec::new(BackboneId::TinyCnn, DecoderId::Unet), (size, size), 0)
        .and_then(|m| m.save(&highlighter_dir))
        .map_err(err("save highlighter"))?;
    let text = config_toml(&tmp.join("sessions"), &fixtures, &highlighter_dir, size, train_epochs);
    let config = ServiceConfig::from_toml(&text).map_err(err("config"))?;
    let hl_path = config.highlighter.model.clone().expect("set above");
    let model = HighlighterModel::load(&hl_path).map_err(err("load highlighter"))?;
    let manager = Arc::new(SessionManager::new(config.clone(), model).map_err(err("manager"))?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(err("bind"))?;
    let addr = listener.local_addr().map_err(err("addr"))?;
    tokio::spawn(serve(manager.clone(), listener));
    Ok(Server {
        addr,
        manager,
        config,
        highlighter_dir,
        fixtures,
    })
}

pub struct Http {
    client: reqwest::Client,
    base: String,
}

impl Http {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            client: reqwest::Client::new(),
            base: format!("http://{addr}"),
        }
    }

    pub async fn post(&self, path: &str, body: Value) -> Check<(u16, Value)> {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .map_err(err(path))?;
        let status = r.status().as_u16();
        Ok((status, r.json().await.map_err(err(path))?))
    }

    pub async fn get(&self, path: &str) -> Check<(u16, Value)> {
        let r = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .map_err(err(path))?;
        let status = r.status().as_u16();
        Ok((status, r.json().await.map_err(err(path))?))
    }

    pub async fn post_ok(&self, path: &str, body: Value, expect: u16) -> Check<Value> {
        let (status, v) = self.post(path, body).await?;
        ensure!(status == expect, "POST {path}: status {status}, body {v}");
        Ok(v)
    }
}

pub struct Socket {
    tx: futures::stream::SplitSink<
        tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>,
        Message,
    >,
    rx: mpsc::UnboundedReceiver<String>,
    validator: jsonschema::Validator,
}

impl Socket {
    pub async fn connect(addr: SocketAddr, session_id: &str) -> Check<Self> {
        let url = format!("ws://{addr}/sessions/{session_id}/stream");
        let (ws, _) = tokio_tungstenite::connect_async(url).await.map_err(err("connect"))?;
        let (tx, mut stream) = ws.split();
        let (out, rx) = mpsc::unbounded_channel();
        tokio::spawn(async move {
            while let Some(Ok(msg)) = stream.next().await {
                if let Message::Text(t) = msg {
                    if out.send(t.to_string()).is_err() {
                        break;
                    }
                }
            }
        });
        let schema: Value = serde_json::from_str(SCHEMA_JSON).map_err(err("schema"))?;
        let validator = jsonschema::validator_for(&schema).map_err(err("schema compile"))?;
        Ok(Self { tx, rx, validator })
    }

    pub fn validate(&self, v: &Value) -> Check<()> {
        ensure!(self.validator.is_valid(v), "message fails schema: {v}");
        Ok(())
    }

    pub async fn send(&mut self, msg: &ClientMessage) -> Check<()> {
        let v = serde_json::to_value(msg).map_err(err("encode"))?;
        self.validate(&v)?;
        self.tx
            .send(Message::text(v.to_string()))
            .await
            .map_err(err("send"))
    }

    pub async fn send_raw(&mut self, text: &str) -> Check<()> {
        self.tx.send(Message::text(text.to_string())).await.map_err(err("send"))
    }

    /// Next server message, schema-checked and parsed.
    pub async fn recv(&mut self, timeout: Duration) -> Check<ServerMessage> {
        let text = tokio::time::timeout(timeout, self.rx.recv())
            .await
            .map_err(|_| "timed out waiting for a server message".to_string())?
            .ok_or("socket closed")?;
        let v: Value = serde_json::from_str(&text).map_err(err("reply json"))?;
        self.validate(&v)?;
        serde_json::from_value(v).map_err(err("reply type"))
    }

    pub async fn close(mut self) {
        let _ = self.tx.send(Message::Close(None)).await;
    }
}

/// Synthetic frames of one class with oracle hand fixtures written under
/// `fixtures`, ids `c<class>-f<i>`.
pub fn class_frames(rng: &mut ChaCha8Rng, class: usize, n: usize, size: u32, fixtures: &Path) -> Check<Vec<Scene>> {
    (0..n)
        .map(|i| {
            let id = format!("c{class}-f{i:02}");
            let scene = class_object_frame(rng, class, size, size, &id);
            let bytes = codec::encode_mask_png(&scene.hands[0]).map_err(err("fixture"))?;
            codec::write_atomic(&OracleParser::fixture_path(fixtures, &id), &bytes).map_err(err("fixture"))?;
            Ok(scene)
        })
        .collect()
}

/// The end-to-end teaching and assessment script. Returns a one-line summary.
pub async fn service_end_to_end(tmp: &Path, train_epochs: usize) -> Check<String> {
    const SIZE: u32 = 64;
    const FRAMES: usize = 30;
    const CAPTURES: usize = 10;
    let labels = ["mug", "book", "plant"];
    let server = start_server(tmp, SIZE, train_epochs).await?;
    let http = Http::new(server.addr);

    let created = http.post_ok("/sessions", json!({}), 201).await?;
    let id = created["session_id"].as_str().ok_or("no session id")?.to_string();
    ensure!(created["mode"] == "teaching", "new session mode {}", created["mode"]);
    ensure!(created["classes"].as_array().map(Vec::len) == Some(0), "new session has classes");
    for (k, label) in labels.iter().enumerate() {
        let c = http
            .post_ok(&format!("/sessions/{id}/classes"), json!({"label": label}), 201)
            .await?;
        ensure!(c["id"] == k, "class {label} got id {}", c["id"]);
    }
    let (status, early) = http
        .post(&format!("/sessions/{id}/mode"), json!({"mode": "assessment"}))
        .await?;
    ensure!(status == 409, "assessment before training gave {status}: {early}");

    let mut ws = Socket::connect(server.addr, &id).await?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let period = Duration::from_secs_f64(1.0 / server.config.stream.max_fps);
    let (mut highlights, mut drops) = (0usize, 0u64);
    for class in 0..labels.len() {
        http.post_ok(&format!("/sessions/{id}/active_class"), json!({"class_id": class}), 200)
            .await?;
        let scenes = class_frames(&mut rng, class, FRAMES, SIZE, &server.fixtures)?;
        let before = server.manager.dropped(&id).map_err(err("dropped"))?;
        for (i, scene) in scenes.iter().enumerate() {
            let frame_id = Some(format!("c{class}-f{i:02}"));
            // one oversized frame per class exercises the server-side resize
            let frame = if i == 1 {
                resize_frame_bilinear(&scene.frame, 2 * SIZE, 2 * SIZE)
            } else {
                scene.frame.clone()
            };
            ws.send(&ClientMessage::frame(&frame, frame_id.clone()).map_err(err("frame"))?)
                .await?;
            if i % 3 == 0 {
                ws.send(&ClientMessage::capture(&scene.frame, frame_id).map_err(err("capture"))?)
                    .await?;
            }
            tokio::time::sleep(period).await;
        }
        let last = format!("c{class}-f{:02}", FRAMES - 1);
        let (mut captured, mut seen_last, mut class_highlights) = (0usize, false, 0usize);
        while captured < CAPTURES || !seen_last {
            match ws.recv(Duration::from_secs(60)).await? {
                ServerMessage::Highlight {
                    frame_id,
                    width,
                    height,
                    mask,
                    ..
                } => {
                    ensure!((width, height) == (SIZE, SIZE), "highlight is {width}x{height}");
                    let m = decode_mask_b64(&mask).map_err(err("mask"))?;
                    ensure!(m.dims() == (SIZE, SIZE), "mask payload is {:?}", m.dims());
                    class_highlights += 1;
                    seen_last |= frame_id.as_deref() == Some(last.as_str());
                }
                ServerMessage::Captured {
                    class_id, sample_count, ..
                } => {
                    captured += 1;
                    ensure!(class_id == class, "captured into class {class_id}, active {class}");
                    ensure!(sample_count == captured, "sample_count {sample_count} after {captured} captures");
                }
                other => return Err(format!("unexpected reply while teaching: {other:?}")),
            }
        }
        let dropped = server.manager.dropped(&id).map_err(err("dropped"))? - before;
        ensure!(
            class_highlights as u64 + dropped == FRAMES as u64,
            "class {class}: {class_highlights} highlights + {dropped} drops != {FRAMES} frames"
        );
        highlights += class_highlights;
        drops += dropped;
    }
    let (_, view) = http.get(&format!("/sessions/{id}")).await?;
    let counts: Vec<u64> = view["classes"]
        .as_array()
        .ok_or("no classes")?
        .iter()
        .map(|c| c["sample_count"].as_u64().unwrap_or(0))
        .collect();
    ensure!(counts == vec![CAPTURES as u64; 3], "sample counts {counts:?}");

    let job = http.post_ok(&format!("/sessions/{id}/train"), json!({}), 202).await?;
    let job_id = job["job_id"].as_str().ok_or("no job id")?.to_string();
    let (status, second) = http.post(&format!("/sessions/{id}/train"), json!({})).await?;
    ensure!(status == 409, "second training job gave {status}: {second}");
    ensure!(second["error"]["code"] == "conflict", "second job error {second}");
    let rank = |s: &str| ["queued", "running", "done", "failed"].iter().position(|x| *x == s);
    let (mut last_rank, mut last_progress) = (0usize, 0u64);
    let t0 = Instant::now();
    loop {
        let (_, j) = http.get(&format!("/jobs/{job_id}")).await?;
        let status = j["status"].as_str().ok_or("job status")?.to_string();
        let r = rank(&status).ok_or("unknown status")?;
        let progress = j["progress"].as_u64().ok_or("job progress")?;
        ensure!(r >= last_rank, "job status went back to {status}");
        ensure!(progress >= last_progress, "job progress went back {last_progress} -> {progress}");
        (last_rank, last_progress) = (r, progress);
        if status == "failed" {
            return Err(format!("training failed: {}", j["error"]));
        }
        if status == "done" {
            ensure!(progress == train_epochs as u64, "done at progress {progress}");
            break;
        }
        ensure!(t0.elapsed() < Duration::from_secs(500), "training did not finish");
        tokio::time::sleep(Duration::from_millis(200)).await;
    }

    let v = http
        .post_ok(&format!("/sessions/{id}/mode"), json!({"mode": "assessment"}), 200)
        .await?;
    ensure!(v["mode"] == "assessment", "mode after switch {}", v["mode"]);
    let mut max_err = 0f64;
    let mut predictions = 0;
    for class in 0..labels.len() {
        for scene in class_frames(&mut rng, class, 3, SIZE, &server.fixtures)? {
            ws.send(&ClientMessage::frame(&scene.frame, None).map_err(err("frame"))?)
                .await?;
            match ws.recv(Duration::from_secs(60)).await? {
                ServerMessage::Prediction {
                    confidences,
                    predicted_class,
                    predicted_label,
                    saliency,
                    ..
                } => {
                    ensure!(confidences.len() == 3, "{} confidences", confidences.len());
                    max_err = max_err.max((confidences.iter().sum::<f64>() - 1.0).abs());
                    ensure!(labels[predicted_class] == predicted_label, "label {predicted_label}");
                    let s = decode_mask_b64(&saliency).map_err(err("saliency"))?;
                    ensure!(s.dims() == (SIZE, SIZE), "saliency is {:?}", s.dims());
                    predictions += 1;
                }
                other => return Err(format!("unexpected reply in assessment: {other:?}")),
            }
        }
    }
    ensure!(max_err <= 1e-6, "confidence sums off by {max_err:e}");
    let probe = class_frames(&mut rng, 0, 1, SIZE, &server.fixtures)?;
    ws.send(&ClientMessage::capture(&probe[0].frame, None).map_err(err("capture"))?)
        .await?;
    match ws.recv(Duration::from_secs(60)).await? {
        ServerMessage::Error { code, .. } => ensure!(code == "state", "capture in assessment gave {code}"),
        other => return Err(format!("capture in assessment answered {other:?}")),
    }
    ws.close().await;

    let live = server.manager.state(&id).map_err(err("state"))?;
    let dir = server.manager.session_dir(&id).map_err(err("dir"))?;
    let reloaded = load_session(&dir).map_err(err("load_session"))?;
    ensure!(reloaded == live.snapshot(), "reloaded session differs from the live one");
    ensure!(
        replay(&dir).map_err(err("replay"))? == live,
        "event replay differs from the live state"
    );
    let restarted = SessionManager::new(
        server.config.clone(),
        HighlighterModel::load(&server.highlighter_dir).map_err(err("reload highlighter"))?,
    )
    .map_err(err("restart"))?;
    ensure!(
        restarted.state(&id).map_err(err("restored state"))? == live,
        "restarted server restored a different session"
    );
    Ok(format!(
        "3 classes x {FRAMES} frames: {highlights} highlights + {drops} dropped; {} samples; \
         job done after {train_epochs} epochs; {predictions} predictions, max |sum-1| {max_err:.1e}; reload bit-exact",
        live.samples.len()
    ))
}
