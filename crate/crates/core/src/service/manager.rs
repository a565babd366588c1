use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ServiceConfig;
use super::session::{EventLog, Mode, SessionEvent, SessionState, EVENT_LOG};
use crate::datamgmt::{write_manifest, write_sample_files, TeachingSample};
use crate::error::{Error, Result};
use crate::handseg::HandSegmentor;
use crate::highlighter::HighlighterModel;
use crate::imaging::{resize_frame_bilinear, ImageFrame, SoftMask};
use crate::teachtrain::{train_user_model_with_classes, ClassDef, PredictionResult, UserModel, UserModelMetrics};

/// Client-facing summary of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub mode: Mode,
    pub classes: Vec<ClassDef>,
    pub active_class: Option<usize>,
    pub lambda_blend: f64,
    /// Job that produced the current model, if any.
    pub model_job: Option<String>,
    pub training_job: Option<String>,
    pub dropped_frames: u64,
    pub capture_width: u32,
    pub capture_height: u32,
    pub max_fps: f64,
    pub highlighter: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingJob {
    pub job_id: String,
    pub session_id: String,
    pub status: JobStatus,
    /// Epochs completed.
    pub progress: usize,
    pub epochs: usize,
    pub error: Option<String>,
    /// Model directory once done.
    pub result: Option<PathBuf>,
    pub metrics: Option<UserModelMetrics>,
}

impl TrainingJob {
    fn advance(&mut self, to: JobStatus) {
        let ok = matches!(
            (self.status, to),
            (JobStatus::Queued, JobStatus::Running) | (JobStatus::Running, JobStatus::Done | JobStatus::Failed)
        );
        assert!(ok, "job {} cannot go from {:?} to {:?}", self.job_id, self.status, to);
        self.status = to;
    }
}

/// Optional per-job overrides of the configured training setup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRequest {
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub lr: Option<f64>,
    /// Segmentation weight of the joint loss.
    pub lambda: Option<f64>,
}

/// Result of one processed frame.
#[derive(Debug, Clone)]
pub enum FrameOutput {
    Highlight {
        mask: SoftMask,
        latency_ms: f64,
    },
    Prediction {
        result: PredictionResult,
        label: String,
        saliency_class: usize,
        latency_ms: f64,
    },
}

/// Outcome of a capture, read back after it was persisted.
#[derive(Debug, Clone)]
pub struct Captured {
    pub sample: TeachingSample,
    pub sample_count: usize,
}

struct Inner {
    state: SessionState,
    log: EventLog,
}

struct SessionHandle {
    dir: PathBuf,
    inner: Mutex<Inner>,
    /// Bumped on every mode switch; frames started under an older value are discarded.
    generation: AtomicU64,
    dropped: AtomicU64,
    job: Mutex<Option<Arc<Mutex<TrainingJob>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl SessionHandle {
    fn inner(&self) -> MutexGuard<'_, Inner> {
        lock(&self.inner)
    }

    /// Applies `event` to the state and then logs it, under the session lock.
    fn commit(&self, inner: &mut Inner, event: SessionEvent) -> Result<()> {
        inner.state.apply(&event, &self.dir)?;
        inner.log.append(&event)?;
        if matches!(
            event,
            SessionEvent::ClassAdded { .. } | SessionEvent::SampleCaptured { .. }
        ) {
            write_manifest(&self.dir, &inner.state.snapshot())?;
        }
        Ok(())
    }
}

/// Owns every session, the shared highlighter and the training jobs. All
/// mutations of one session are serialized by that session's lock; inference
/// runs outside it.
pub struct SessionManager {
    root: PathBuf,
    config: ServiceConfig,
    highlighter: Arc<HighlighterModel>,
    handseg: Arc<HandSegmentor>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    jobs: RwLock<HashMap<String, Arc<Mutex<TrainingJob>>>>,
}

impl SessionManager {
    /// Opens the storage root and restores every session found in it.
    pub fn new(config: ServiceConfig, highlighter: HighlighterModel) -> Result<Self> {
        config.validate()?;
        if !highlighter.is_loaded() {
            return Err(Error::State("highlighter model has no weights".into()));
        }
        let handseg = HandSegmentor::new(config.handseg_config())?;
        let root = config.storage.root.clone();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut sessions = HashMap::new();
        let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
        for entry in entries {
            let dir = entry.map_err(|e| Error::io(&root, e))?.path();
            if !dir.join(EVENT_LOG).is_file() {
                continue;
            }
            let (log, state) = EventLog::open(&dir)?;
            log::info!("restored session {} ({} samples)", state.session_id, state.samples.len());
            let id = state.session_id.clone();
            sessions.insert(id, Arc::new(Self::handle(dir, state, log)));
        }
        Ok(Self {
            root,
            config,
            highlighter: Arc::new(highlighter),
            handseg: Arc::new(handseg),
            sessions: RwLock::new(sessions),
            jobs: RwLock::new(HashMap::new()),
        })
    }

    fn handle(dir: PathBuf, state: SessionState, log: EventLog) -> SessionHandle {
        SessionHandle {
            dir,
            inner: Mutex::new(Inner { state, log }),
            generation: AtomicU64::new(0),
            dropped: AtomicU64::new(0),
            job: Mutex::new(None),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn session_dir(&self, session_id: &str) -> Result<PathBuf> {
        Ok(self.get(session_id)?.dir.clone())
    }

    fn get(&self, session_id: &str) -> Result<Arc<SessionHandle>> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {session_id}")))
    }

    fn view_of(&self, h: &SessionHandle, s: &SessionState) -> SessionView {
        SessionView {
            session_id: s.session_id.clone(),
            mode: s.mode,
            classes: s.classes.clone(),
            active_class: s.active_class,
            lambda_blend: s.lambda_blend,
            model_job: s.user_model.as_ref().map(|m| m.job_id.clone()),
            training_job: lock(&h.job).as_ref().map(|j| lock(j).job_id.clone()),
            dropped_frames: h.dropped.load(Ordering::Relaxed),
            capture_width: self.config.capture.width,
            capture_height: self.config.capture.height,
            max_fps: self.config.stream.max_fps,
            highlighter: self.highlighter.describe(),
        }
    }

    pub fn create_session(&self, lambda_blend: Option<f64>) -> Result<SessionView> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        let (log, state) = EventLog::create(&dir, &id, lambda_blend.unwrap_or(self.config.blend.lambda))?;
        write_manifest(&dir, &state.snapshot())?;
        let h = Arc::new(Self::handle(dir, state, log));
        let view = self.view_of(&h, &h.inner().state);
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(id, h);
        Ok(view)
    }

    pub fn view(&self, session_id: &str) -> Result<SessionView> {
        let h = self.get(session_id)?;
        let inner = h.inner();
        Ok(self.view_of(&h, &inner.state))
    }

    /// A copy of the live state.
    pub fn state(&self, session_id: &str) -> Result<SessionState> {
        Ok(self.get(session_id)?.inner().state.clone())
    }

    pub fn add_class(&self, session_id: &str, label: &str) -> Result<ClassDef> {
        let h = self.get(session_id)?;
        let mut inner = h.inner();
        let class_id = inner.state.classes.len();
        h.commit(
            &mut inner,
            SessionEvent::ClassAdded {
                class_id,
                label: label.to_string(),
            },
        )?;
        Ok(inner.state.classes[class_id].clone())
    }

    pub fn set_active_class(&self, session_id: &str, class_id: usize) -> Result<SessionView> {
        let h = self.get(session_id)?;
        let mut inner = h.inner();
        h.commit(&mut inner, SessionEvent::ActiveClassSet { class_id })?;
        Ok(self.view_of(&h, &inner.state))
    }

    pub fn set_lambda_blend(&self, session_id: &str, lambda_blend: f64) -> Result<SessionView> {
        let h = self.get(session_id)?;
        let mut inner = h.inner();
        h.commit(&mut inner, SessionEvent::LambdaBlendSet { lambda_blend })?;
        Ok(self.view_of(&h, &inner.state))
    }

    /// Switching mode fences every frame still being processed.
    pub fn set_mode(&self, session_id: &str, mode: Mode) -> Result<SessionView> {
        let h = self.get(session_id)?;
        let mut inner = h.inner();
        h.commit(&mut inner, SessionEvent::ModeSet { mode })?;
        h.generation.fetch_add(1, Ordering::SeqCst);
        Ok(self.view_of(&h, &inner.state))
    }

    /// Counts a frame that was replaced or fenced before producing a result.
    pub fn record_drop(&self, session_id: &str) -> Result<u64> {
        Ok(self.get(session_id)?.dropped.fetch_add(1, Ordering::Relaxed) + 1)
    }

    pub fn dropped(&self, session_id: &str) -> Result<u64> {
        Ok(self.get(session_id)?.dropped.load(Ordering::Relaxed))
    }

    fn fit_capture_size(&self, frame: &ImageFrame) -> ImageFrame {
        let (w, h) = (self.config.capture.width, self.config.capture.height);
        if frame.dims() == (w, h) {
            frame.clone()
        } else {
            resize_frame_bilinear(frame, w, h)
        }
    }

    fn highlight(&self, frame: &ImageFrame) -> Result<SoftMask> {
        let hand = self.handseg.hand_mask(frame)?;
        self.highlighter.predict_highlight(frame, &hand)
    }

    /// Highlights (teaching) or predicts (assessment) one frame. Returns
    /// `None` when the mode changed while the frame was in flight.
    pub fn process_frame(
        &self,
        session_id: &str,
        frame: &ImageFrame,
        saliency_class: Option<usize>,
    ) -> Result<Option<FrameOutput>> {
        let t0 = Instant::now();
        let h = self.get(session_id)?;
        let generation = h.generation.load(Ordering::SeqCst);
        let (mode, model, lambda_blend) = {
            let inner = h.inner();
            let s = &inner.state;
            (s.mode, s.user_model.as_ref().map(|m| m.model.clone()), s.lambda_blend)
        };
        let frame = self.fit_capture_size(frame);
        let out = match (mode, model) {
            (Mode::Teaching, _) => FrameOutput::Highlight {
                mask: self.highlight(&frame)?,
                latency_ms: 0.0,
            },
            (Mode::Assessment, Some(model)) => {
                let result = model.predict_for_class(&frame, lambda_blend, saliency_class)?;
                let shown = saliency_class.unwrap_or(result.predicted_class);
                FrameOutput::Prediction {
                    label: model.classes()[result.predicted_class].label.clone(),
                    saliency_class: shown,
                    result,
                    latency_ms: 0.0,
                }
            }
            (Mode::Assessment, None) => unreachable!("assessment mode always has a model"),
        };
        let _inner = h.inner();
        if h.generation.load(Ordering::SeqCst) != generation {
            return Ok(None);
        }
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        Ok(Some(match out {
            FrameOutput::Highlight { mask, .. } => FrameOutput::Highlight { mask, latency_ms: ms },
            FrameOutput::Prediction {
                result,
                label,
                saliency_class,
                ..
            } => FrameOutput::Prediction {
                result,
                label,
                saliency_class,
                latency_ms: ms,
            },
        }))
    }

    /// Stores the frame and its inferred highlight as a sample of the active
    /// class; the sample is on disk before this returns.
    pub fn capture_sample(&self, session_id: &str, frame: &ImageFrame) -> Result<Captured> {
        let h = self.get(session_id)?;
        let generation = h.generation.load(Ordering::SeqCst);
        let class_id = {
            let inner = h.inner();
            if inner.state.mode != Mode::Teaching {
                return Err(Error::State(format!("cannot capture in {} mode", inner.state.mode)));
            }
            inner
                .state
                .active_class
                .ok_or_else(|| Error::State("no active class selected".into()))?
        };
        let frame = self.fit_capture_size(frame);
        let soft = self.highlight(&frame)?;
        let mut inner = h.inner();
        if h.generation.load(Ordering::SeqCst) != generation {
            return Err(Error::State("mode changed during capture".into()));
        }
        let sample_id = format!("s{:05}", inner.state.samples.len());
        let sample = TeachingSample::new(&sample_id, class_id, frame, Some(soft), session_id)?;
        write_sample_files(&h.dir, &sample)?;
        h.commit(
            &mut inner,
            SessionEvent::SampleCaptured {
                sample_id,
                class_id,
                masked: true,
                captured_at: sample.captured_at(),
            },
        )?;
        let stored = inner.state.samples.last().expect("just committed").clone();
        Ok(Captured {
            sample_count: inner.state.classes[class_id].sample_count,
            sample: stored,
        })
    }

    /// Queues a training job on its own thread. Needs at least two classes,
    /// each with a sample, and no other unfinished job on the session.
    pub fn start_training(&self, session_id: &str, request: &TrainRequest) -> Result<TrainingJob> {
        let h = self.get(session_id)?;
        let mut config = self.config.train.clone();
        config.epochs = request.epochs.unwrap_or(config.epochs);
        config.seed = request.seed.unwrap_or(config.seed);
        config.lr = request.lr.unwrap_or(config.lr);
        config.validate()?;
        let lambda = request.lambda.unwrap_or(self.config.loss.lambda);
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Argument(format!("loss weight {lambda} must be finite and >= 0")));
        }

        let (classes, samples, lambda_blend) = {
            let inner = h.inner();
            let s = &inner.state;
            let counts = s.class_counts();
            if counts.len() < 2 || counts.contains(&0) {
                return Err(Error::Dataset(format!(
                    "training needs at least 2 classes with at least one sample each, have counts {counts:?}"
                )));
            }
            (s.classes.clone(), s.samples.clone(), s.lambda_blend)
        };
        let mut slot = lock(&h.job);
        if let Some(j) = slot.as_ref() {
            let j = lock(j);
            if !j.status.is_terminal() {
                return Err(Error::Conflict(format!("job {} is still {:?}", j.job_id, j.status)));
            }
        }
        let job = TrainingJob {
            job_id: uuid::Uuid::new_v4().simple().to_string(),
            session_id: session_id.to_string(),
            status: JobStatus::Queued,
            progress: 0,
            epochs: config.epochs,
            error: None,
            result: None,
            metrics: None,
        };
        let shared = Arc::new(Mutex::new(job.clone()));
        *slot = Some(shared.clone());
        drop(slot);
        self.jobs
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(job.job_id.clone(), shared.clone());

        let handle = h.clone();
        std::thread::Builder::new()
            .name(format!("train-{}", job.job_id))
            .spawn(move || {
                lock(&shared).advance(JobStatus::Running);
                let progress_job = shared.clone();
                let outcome = train_user_model_with_classes(classes, &samples, &config, lambda, |epoch, _| {
                    lock(&progress_job).progress = epoch + 1;
                })
                .and_then(|mut model| {
                    model.set_lambda_blend(lambda_blend)?;
                    let job_id = lock(&shared).job_id.clone();
                    finish_training(&handle, &job_id, &model)
                });
                let mut j = lock(&shared);
                match outcome {
                    Ok((dir, metrics)) => {
                        j.result = Some(dir);
                        j.metrics = metrics;
                        j.advance(JobStatus::Done);
                    }
                    Err(e) => {
                        log::warn!("training job {} failed: {e}", j.job_id);
                        j.error = Some(e.to_string());
                        j.advance(JobStatus::Failed);
                    }
                }
            })
            .map_err(|e| Error::State(format!("cannot start training thread: {e}")))?;
        Ok(job)
    }

    pub fn job_status(&self, job_id: &str) -> Result<TrainingJob> {
        let jobs = self.jobs.read().unwrap_or_else(|p| p.into_inner());
        let job = jobs.get(job_id).ok_or_else(|| Error::NotFound(format!("job {job_id}")))?;
        let snapshot = lock(job).clone();
        Ok(snapshot)
    }
}

fn finish_training(
    h: &SessionHandle,
    job_id: &str,
    model: &UserModel,
) -> Result<(PathBuf, Option<UserModelMetrics>)> {
    let rel = format!("models/{job_id}");
    let dir = h.dir.join(&rel);
    model.save(&dir)?;
    let mut inner = h.inner();
    h.commit(
        &mut inner,
        SessionEvent::ModelTrained {
            job_id: job_id.to_string(),
            model_dir: rel,
        },
    )?;
    Ok((dir, model.metrics().cloned()))
}
