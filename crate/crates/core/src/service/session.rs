use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datamgmt::{load_sample, SessionSnapshot, TeachingSample};
use crate::error::{Error, Result};
use crate::teachtrain::{ClassDef, UserModel};

pub const EVENT_LOG: &str = "events.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Teaching,
    Assessment,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Teaching => "teaching",
            Mode::Assessment => "assessment",
        })
    }
}

/// One line of a session's event log. Sample and model payloads live in
/// files next to the log; events only name them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created { session_id: String, lambda_blend: f64 },
    ClassAdded { class_id: usize, label: String },
    ActiveClassSet { class_id: usize },
    ModeSet { mode: Mode },
    LambdaBlendSet { lambda_blend: f64 },
    SampleCaptured {
        sample_id: String,
        class_id: usize,
        masked: bool,
        captured_at: u64,
    },
    /// `model_dir` is relative to the session directory.
    ModelTrained { job_id: String, model_dir: String },
}

/// A trained model attached to a session.
#[derive(Clone)]
pub struct UserModelRef {
    pub job_id: String,
    pub dir: PathBuf,
    pub model: Arc<UserModel>,
}

impl fmt::Debug for UserModelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserModelRef")
            .field("job_id", &self.job_id)
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

impl PartialEq for UserModelRef {
    fn eq(&self, other: &Self) -> bool {
        self.job_id == other.job_id && self.dir == other.dir
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub session_id: String,
    pub mode: Mode,
    pub classes: Vec<ClassDef>,
    pub samples: Vec<TeachingSample>,
    pub active_class: Option<usize>,
    pub user_model: Option<UserModelRef>,
    pub lambda_blend: f64,
}

fn check_lambda(l: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::Argument(format!("blend weight {l} is outside [0, 1]")));
    }
    Ok(())
}

impl SessionState {
    fn created(session_id: String, lambda_blend: f64) -> Self {
        Self {
            session_id,
            mode: Mode::Teaching,
            classes: Vec::new(),
            samples: Vec::new(),
            active_class: None,
            user_model: None,
            lambda_blend,
        }
    }

    /// Checks that `event` is legal in the current state without applying it.
    pub fn check(&self, event: &SessionEvent) -> Result<()> {
        match event {
            SessionEvent::Created { .. } => Err(Error::State("session already created".into())),
            SessionEvent::ClassAdded { class_id, label } => {
                if label.trim().is_empty() {
                    return Err(Error::Argument("class label must not be empty".into()));
                }
                if self.classes.iter().any(|c| c.label == *label) {
                    return Err(Error::Conflict(format!("class label {label:?} already exists")));
                }
                if *class_id != self.classes.len() {
                    return Err(Error::State(format!("next class id is {}, not {class_id}", self.classes.len())));
                }
                Ok(())
            }
            SessionEvent::ActiveClassSet { class_id } => self.check_class(*class_id),
            SessionEvent::ModeSet { mode } => {
                if *mode == Mode::Assessment && self.user_model.is_none() {
                    return Err(Error::State("assessment mode needs a trained model".into()));
                }
                Ok(())
            }
            SessionEvent::LambdaBlendSet { lambda_blend } => check_lambda(*lambda_blend),
            SessionEvent::SampleCaptured { sample_id, class_id, .. } => {
                if self.mode != Mode::Teaching {
                    return Err(Error::State(format!("cannot capture in {} mode", self.mode)));
                }
                self.check_class(*class_id)?;
                if self.samples.iter().any(|s| s.sample_id() == sample_id) {
                    return Err(Error::Conflict(format!("sample {sample_id} already exists")));
                }
                Ok(())
            }
            SessionEvent::ModelTrained { .. } => Ok(()),
        }
    }

    fn check_class(&self, class_id: usize) -> Result<()> {
        if class_id >= self.classes.len() {
            return Err(Error::NotFound(format!(
                "class {class_id} (session has {} classes)",
                self.classes.len()
            )));
        }
        Ok(())
    }

    /// Checks and applies `event`. Samples and models are read from `dir`, so
    /// the live state always equals what a replay would rebuild.
    pub fn apply(&mut self, event: &SessionEvent, dir: &Path) -> Result<()> {
        self.check(event)?;
        match event {
            SessionEvent::Created { .. } => unreachable!("rejected by check"),
            SessionEvent::ClassAdded { class_id, label } => self.classes.push(ClassDef::new(*class_id, label.clone())),
            SessionEvent::ActiveClassSet { class_id } => self.active_class = Some(*class_id),
            SessionEvent::ModeSet { mode } => self.mode = *mode,
            SessionEvent::LambdaBlendSet { lambda_blend } => self.lambda_blend = *lambda_blend,
            SessionEvent::SampleCaptured {
                sample_id,
                class_id,
                masked,
                captured_at,
            } => {
                let s = load_sample(dir, sample_id, *class_id, *masked, *captured_at, &self.session_id)?;
                self.samples.push(s);
                self.classes[*class_id].sample_count += 1;
            }
            SessionEvent::ModelTrained { job_id, model_dir } => {
                let path = dir.join(model_dir);
                let model = UserModel::load(&path)?;
                self.user_model = Some(UserModelRef {
                    job_id: job_id.clone(),
                    dir: path,
                    model: Arc::new(model),
                });
            }
        }
        Ok(())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.class_id()] += 1;
        }
        counts
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.session_id.clone(),
            classes: self.classes.clone(),
            samples: self.samples.clone(),
        }
    }
}

/// Append-only JSON-lines log, synced after every write.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Starts a new log whose first line creates the session.
    pub fn create(dir: &Path, session_id: &str, lambda_blend: f64) -> Result<(Self, SessionState)> {
        check_lambda(lambda_blend)?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(EVENT_LOG);
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut log = Self { path, file };
        log.append(&SessionEvent::Created {
            session_id: session_id.to_string(),
            lambda_blend,
        })?;
        Ok((log, SessionState::created(session_id.to_string(), lambda_blend)))
    }

    /// Reopens an existing log after rebuilding the state from it.
    pub fn open(dir: &Path) -> Result<(Self, SessionState)> {
        let state = replay(dir)?;
        let path = dir.join(EVENT_LOG);
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok((Self { path, file }, state))
    }

    pub fn append(&mut self, event: &SessionEvent) -> Result<()> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_events(dir: &Path) -> Result<Vec<SessionEvent>> {
    let path = dir.join(EVENT_LOG);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Validation {
                item: format!("{}:{}", path.display(), i + 1),
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Rebuilds a session from its directory's event log.
pub fn replay(dir: &Path) -> Result<SessionState> {
    let events = read_events(dir)?;
    let Some(SessionEvent::Created {
        session_id,
        lambda_blend,
    }) = events.first()
    else {
        return Err(Error::Validation {
            item: dir.join(EVENT_LOG).display().to_string(),
            reason: "log does not start with a created event".into(),
        });
    };
    let mut state = SessionState::created(session_id.clone(), *lambda_blend);
    for ev in &events[1..] {
        state.apply(ev, dir)?;
    }
    Ok(state)
}
