//! Hand/arm masks from RGB frames through a pluggable human-parsing backend.
//!
//! Backends publish a label-name table and the adapter selects arm pixels by
//! name, so no numeric label id is assumed. Note that parsers label exposed
//! skin as "arm": a gloved hand typically disappears from the mask.

mod labels;
mod parser;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{codec, BinaryMask, ImageFrame};

pub use labels::{extract_hand_mask, label_id, lip_label_names, BodyPartLabelMap, LIP_LABELS};
pub use parser::{write_initialized_parser_weights, PretrainedParser, PARSER_DEFAULT_INPUT};

pub const BACKEND_CONSTANT: &str = "constant";
pub const BACKEND_ORACLE: &str = "oracle";
pub const BACKEND_PRETRAINED: &str = "pretrained-parser";
pub const REGISTERED_BACKENDS: [&str; 3] = [BACKEND_PRETRAINED, BACKEND_ORACLE, BACKEND_CONSTANT];

/// Suffix of oracle fixture files: `<frame_id>.hand.png`.
pub const ORACLE_FIXTURE_SUFFIX: &str = ".hand.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSegmentorConfig {
    pub backend_id: String,
    #[serde(default = "default_arm_labels")]
    pub arm_label_names: BTreeSet<String>,
    /// Weights file for the pretrained parser, fixture directory for the oracle.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// Native (width, height) of the pretrained parser.
    #[serde(default)]
    pub input_size: Option<(u32, u32)>,
}

fn default_arm_labels() -> BTreeSet<String> {
    ["left-arm", "right-arm"].iter().map(|s| s.to_string()).collect()
}

impl HandSegmentorConfig {
    pub fn new(backend_id: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            arm_label_names: default_arm_labels(),
            model_path: None,
            input_size: None,
        }
    }

    pub fn constant() -> Self {
        Self::new(BACKEND_CONSTANT)
    }

    pub fn oracle(fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            model_path: Some(fixture_dir.into()),
            ..Self::new(BACKEND_ORACLE)
        }
    }

    pub fn pretrained(weights: impl Into<PathBuf>) -> Self {
        Self {
            model_path: Some(weights.into()),
            ..Self::new(BACKEND_PRETRAINED)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arm_label_names.is_empty() {
            return Err(Error::Config("arm_label_names must not be empty".into()));
        }
        if !REGISTERED_BACKENDS.contains(&self.backend_id.as_str()) {
            return Err(Error::Catalog {
                id: self.backend_id.clone(),
                registered: REGISTERED_BACKENDS.iter().map(|s| s.to_string()).collect(),
            });
        }
        Ok(())
    }
}

/// A body-part parser: maps a frame to per-pixel labels.
pub trait HumanParser: Send + Sync {
    fn label_names(&self) -> &BTreeMap<u8, String>;
    fn parse(&self, frame: &ImageFrame) -> Result<BodyPartLabelMap>;
}

/// Labels every pixel as background.
pub struct ConstantParser {
    names: BTreeMap<u8, String>,
}

impl Default for ConstantParser {
    fn default() -> Self {
        Self {
            names: lip_label_names(),
        }
    }
}

impl HumanParser for ConstantParser {
    fn label_names(&self) -> &BTreeMap<u8, String> {
        &self.names
    }

    fn parse(&self, frame: &ImageFrame) -> Result<BodyPartLabelMap> {
        BodyPartLabelMap::background(frame.width(), frame.height(), self.names.clone())
    }
}

/// Replays known hand masks: set fixture pixels become "left-arm", the rest
/// background. Fixtures come from `<dir>/<source_id>.hand.png` files or from
/// masks registered in memory.
pub struct OracleParser {
    names: BTreeMap<u8, String>,
    dir: Option<PathBuf>,
    masks: HashMap<String, BinaryMask>,
}

impl OracleParser {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::Initialization(format!(
                "oracle fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self {
            names: lip_label_names(),
            dir: Some(dir),
            masks: HashMap::new(),
        })
    }

    pub fn from_masks(masks: HashMap<String, BinaryMask>) -> Self {
        Self {
            names: lip_label_names(),
            dir: None,
            masks,
        }
    }

    pub fn fixture_path(dir: &Path, source_id: &str) -> PathBuf {
        dir.join(format!("{source_id}{ORACLE_FIXTURE_SUFFIX}"))
    }
}

impl HumanParser for OracleParser {
    fn label_names(&self) -> &BTreeMap<u8, String> {
        &self.names
    }

    fn parse(&self, frame: &ImageFrame) -> Result<BodyPartLabelMap> {
        let id = frame.source_id();
        let mask = match (self.masks.get(id), &self.dir) {
            (Some(m), _) => m.clone(),
            (None, Some(dir)) => codec::load_mask(&Self::fixture_path(dir, id)).map_err(|e| Error::Inference {
                source_id: id.to_string(),
                reason: e.to_string(),
            })?,
            (None, None) => {
                return Err(Error::Inference {
                    source_id: id.to_string(),
                    reason: "no oracle fixture registered".into(),
                })
            }
        };
        if mask.dims() != frame.dims() {
            return Err(Error::Inference {
                source_id: id.to_string(),
                reason: format!(
                    "fixture is {}x{}, frame is {}x{}",
                    mask.width(),
                    mask.height(),
                    frame.width(),
                    frame.height()
                ),
            });
        }
        let arm = label_id(&self.names, "left-arm").expect("LIP table has left-arm");
        let labels = mask.values().iter().map(|v| if *v == 1 { arm } else { 0 }).collect();
        BodyPartLabelMap::new(frame.width(), frame.height(), labels, self.names.clone())
    }
}

/// A configured backend plus the arm-label selection.
pub struct HandSegmentor {
    config: HandSegmentorConfig,
    backend: Box<dyn HumanParser>,
}

impl HandSegmentor {
    /// Initializes the backend named in `config`.
    pub fn new(config: HandSegmentorConfig) -> Result<Self> {
        config.validate()?;
        let backend: Box<dyn HumanParser> = match config.backend_id.as_str() {
            BACKEND_CONSTANT => Box::new(ConstantParser::default()),
            BACKEND_ORACLE => {
                let dir = config
                    .model_path
                    .as_ref()
                    .ok_or_else(|| Error::Initialization("oracle backend needs a fixture directory".into()))?;
                Box::new(OracleParser::from_dir(dir)?)
            }
            BACKEND_PRETRAINED => {
                let path = config
                    .model_path
                    .as_ref()
                    .ok_or_else(|| Error::Initialization("pretrained parser needs model_path".into()))?;
                Box::new(PretrainedParser::load(path, config.input_size.unwrap_or(PARSER_DEFAULT_INPUT))?)
            }
            _ => unreachable!("validated above"),
        };
        Self::with_backend(config, backend)
    }

    /// Wraps an already-initialized backend.
    pub fn with_backend(config: HandSegmentorConfig, backend: Box<dyn HumanParser>) -> Result<Self> {
        if config.arm_label_names.is_empty() {
            return Err(Error::Config("arm_label_names must not be empty".into()));
        }
        Ok(Self { config, backend })
    }

    pub fn config(&self) -> &HandSegmentorConfig {
        &self.config
    }

    pub fn parse_human(&self, frame: &ImageFrame) -> Result<BodyPartLabelMap> {
        let map = self.backend.parse(frame)?;
        if map.dims() != frame.dims() {
            return Err(Error::Inference {
                source_id: frame.source_id().to_string(),
                reason: "backend returned a label map of the wrong size".into(),
            });
        }
        Ok(map)
    }

    /// Parses `frame` and extracts the configured arm labels.
    pub fn hand_mask(&self, frame: &ImageFrame) -> Result<BinaryMask> {
        extract_hand_mask(&self.parse_human(frame)?, &self.config.arm_label_names)
    }
}
