use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use deictic::datamgmt::{load_hutics, load_session, split_by_participant, DatasetSplit};
use deictic::evalbench::{benchmark_frames, benchmark_fps, compare_architectures, FPS_WARMUP};
use deictic::handseg::{HandSegmentor, HandSegmentorConfig, BACKEND_CONSTANT, BACKEND_ORACLE};
use deictic::highlighter::{
    evaluate_highlighter, examples_from_records, save_training_outputs, train_on_examples, HighlighterModel,
    HighlighterTrainConfig, REPORT_FILE,
};
use deictic::imaging::codec;
use deictic::nn::{BackboneId, DecoderId, ModelSpec};
use deictic::service::{serve, ServiceConfig, SessionManager};
use deictic::teachtrain::{train_user_model_with_classes, UserTrainConfig};
use deictic::{Error, Result};

#[derive(Parser)]
#[command(name = "deictic", version, about = "Gesture-guided object highlighting and machine teaching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Highlighter model directory; overrides `highlighter.model`.
        #[arg(long)]
        highlighter: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a highlighter on a canonical dataset and write model, report and worst cases.
    TrainHighlighter {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "efficientnet-b0")]
        backbone: BackboneId,
        #[arg(long, default_value = "unet")]
        decoder: DecoderId,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        /// Network input as WIDTHxHEIGHT.
        #[arg(long, default_value = "640x480", value_parser = parse_size)]
        input: (u32, u32),
        #[arg(long)]
        out: PathBuf,
        /// Encoder weights (safetensors) to start from.
        #[arg(long)]
        encoder_weights: Option<PathBuf>,
        /// Number of lowest-IoU test images to render.
        #[arg(long, default_value_t = 10)]
        worst: usize,
    },
    /// Train a user model on a saved teaching session.
    TrainUserModel {
        #[arg(long)]
        session: PathBuf,
        /// Segmentation weight of the joint loss.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value = "efficientnet-b0")]
        backbone: BackboneId,
        #[arg(long, default_value = "640x480", value_parser = parse_size)]
        input: (u32, u32),
        /// Encoder weights (safetensors) to start from.
        #[arg(long)]
        encoder_weights: Option<PathBuf>,
        /// Output directory; defaults to `<session>/models/cli-seed<S>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trained highlighter on the test split of a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train several architectures with one config and tabulate mIoU and fps.
    CompareArch {
        /// Comma-separated decoders (combined with --backbone) or backbone+decoder specs.
        #[arg(long, default_value = "unet,unetpp,deeplabv3,deeplabv3plus")]
        specs: String,
        #[arg(long, default_value = "efficientnet-b0")]
        backbone: BackboneId,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "640x480", value_parser = parse_size)]
        input: (u32, u32),
        /// Encoder weights (safetensors) to start from.
        #[arg(long)]
        encoder_weights: Option<PathBuf>,
        /// Write the table as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Dataset root with `metadata.json`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    /// Hand segmentation backend; defaults to the oracle when `<data>/hands` exists.
    #[arg(long)]
    handseg: Option<String>,
    /// Parser weights or oracle fixture directory.
    #[arg(long)]
    handseg_path: Option<PathBuf>,
}

impl DataArgs {
    fn split(&self) -> Result<DatasetSplit> {
        let report = load_hutics(&self.data)?;
        for issue in &report.issues {
            log::warn!("skipped {issue:?}");
        }
        split_by_participant(&report.records, self.ratio, self.split_seed)
    }

    fn handseg(&self) -> HandSegmentorConfig {
        let hands = self.data.join("hands");
        let backend = self.handseg.clone().unwrap_or_else(|| {
            if hands.is_dir() { BACKEND_ORACLE } else { BACKEND_CONSTANT }.to_string()
        });
        let path = self
            .handseg_path
            .clone()
            .or_else(|| (backend == BACKEND_ORACLE).then_some(hands));
        log::info!("hand segmentation backend: {backend}");
        HandSegmentorConfig {
            model_path: path,
            ..HandSegmentorConfig::new(backend)
        }
    }
}

fn parse_size(s: &str) -> std::result::Result<(u32, u32), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w: u32 = w.parse().map_err(|e| format!("width: {e}"))?;
    let h: u32 = h.parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((w, h))
}

fn parse_specs(list: &str, backbone: BackboneId) -> Result<Vec<ModelSpec>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.contains('+') {
                s.parse()
            } else {
                Ok(ModelSpec::new(backbone, s.parse()?))
            }
        })
        .collect()
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    codec::write_atomic(path, text.as_bytes())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve {
            port,
            host,
            highlighter,
            config,
        } => {
            let config = match config {
                Some(p) => ServiceConfig::load(&p)?,
                None => ServiceConfig::default(),
            };
            let dir = highlighter
                .or_else(|| config.highlighter.model.clone())
                .ok_or_else(|| Error::Config("no highlighter model: pass --highlighter or set highlighter.model".into()))?;
            let model = HighlighterModel::load(&dir)?;
            let manager = Arc::new(SessionManager::new(config, model)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::State(e.to_string()))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .map_err(|e| Error::Config(format!("cannot bind {host}:{port}: {e}")))?;
                serve(manager, listener)
                    .await
                    .map_err(|e| Error::State(format!("server stopped: {e}")))
            })
        }
        Command::TrainHighlighter {
            data,
            backbone,
            decoder,
            epochs,
            seed,
            batch_size,
            input,
            encoder_weights,
            out,
            worst,
        } => {
            let split = data.split()?;
            let handseg = data.handseg();
            let config = HighlighterTrainConfig {
                epochs,
                lr_hold_head: epochs / 4,
                lr_hold_tail: epochs / 4,
                seed,
                batch_size,
                input_size: input,
                encoder_weights,
                ..Default::default()
            };
            let seg = HandSegmentor::new(handseg.clone())?;
            let train = examples_from_records(&split.train, &seg)?;
            let test = examples_from_records(&split.test, &seg)?;
            let spec = ModelSpec::new(backbone, decoder);
            let (model, mut report) = train_on_examples(&train, &test, spec, &config, |e, loss| {
                log::info!("epoch {e}: loss {loss:.5}");
            })?;
            report.fps = Some(benchmark_fps(&model, &handseg, &benchmark_frames(&split)?, FPS_WARMUP)?);
            let shown = if test.is_empty() { &train } else { &test };
            save_training_outputs(&out, &model, &report, shown, worst)?;
            println!("{}", report.to_json()?);
            Ok(())
        }
        Command::TrainUserModel {
            session,
            lambda,
            epochs,
            seed,
            lr,
            backbone,
            input,
            encoder_weights,
            out,
        } => {
            let snapshot = load_session(&session)?;
            let config = UserTrainConfig {
                epochs,
                seed,
                lr,
                backbone,
                input_size: input,
                pretrained_encoder: encoder_weights.is_some(),
                encoder_weights,
                ..Default::default()
            };
            let model = train_user_model_with_classes(snapshot.classes, &snapshot.samples, &config, lambda, |e, loss| {
                log::info!("epoch {e}: loss {loss:.5}");
            })?;
            let out = out.unwrap_or_else(|| session.join("models").join(format!("cli-seed{seed}")));
            model.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&model.metrics())?);
            log::info!("model written to {}", out.display());
            Ok(())
        }
        Command::Eval { model, data, out } => {
            let model = HighlighterModel::load(&model)?;
            let split = data.split()?;
            let handseg = data.handseg();
            let seg = HandSegmentor::new(handseg.clone())?;
            let records = if split.test.is_empty() { &split.train } else { &split.test };
            let examples = examples_from_records(records, &seg)?;
            let mut report = evaluate_highlighter(&model, &examples)?.describe(
                model.describe(),
                format!(
                    "{} images of {} (ratio {}, split seed {})",
                    examples.len(),
                    data.data.display(),
                    split.ratio,
                    split.seed
                ),
                split.seed,
            );
            report.fps = Some(benchmark_fps(&model, &handseg, &benchmark_frames(&split)?, FPS_WARMUP)?);
            let json = report.to_json()?;
            if let Some(dir) = out {
                write_json(&dir.join(REPORT_FILE), &json)?;
            }
            println!("{json}");
            Ok(())
        }
        Command::CompareArch {
            specs,
            backbone,
            data,
            epochs,
            seed,
            input,
            encoder_weights,
            out,
        } => {
            let specs = parse_specs(&specs, backbone)?;
            let split = data.split()?;
            let config = HighlighterTrainConfig {
                epochs,
                lr_hold_head: epochs / 4,
                lr_hold_tail: epochs / 4,
                seed,
                input_size: input,
                encoder_weights,
                ..Default::default()
            };
            let table = compare_architectures(&split, &specs, &config, &data.handseg())?;
            print!("{}", table.render());
            if let Some(path) = out {
                write_json(&path, &table.to_json()?)?;
            }
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
