use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::handseg::{HandSegmentorConfig, BACKEND_CONSTANT};
use crate::imaging::codec;
use crate::teachtrain::{UserTrainConfig, DEFAULT_LAMBDA_BLEND, DEFAULT_LAMBDA_LOSS};

/// Server configuration, read from TOML. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub handseg: HandsegSection,
    pub highlighter: HighlighterSection,
    pub blend: BlendSection,
    pub loss: LossSection,
    pub capture: CaptureSection,
    pub stream: StreamSection,
    pub storage: StorageSection,
    pub train: UserTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandsegSection {
    pub backend: String,
    /// Parser weights, or the fixture directory for the oracle backend.
    pub model_path: Option<PathBuf>,
}

impl Default for HandsegSection {
    fn default() -> Self {
        Self {
            backend: BACKEND_CONSTANT.into(),
            model_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighlighterSection {
    /// Directory holding `model.json` and `model.bin`.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlendSection {
    /// Saliency blend weight of the decoder output against the CAM.
    pub lambda: f64,
}

impl Default for BlendSection {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA_BLEND,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    /// Weight of the segmentation term in the joint loss.
    pub lambda: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA_LOSS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureSection {
    pub width: u32,
    pub height: u32,
}

impl Default for CaptureSection {
    fn default() -> Self {
        Self { width: 640, height: 480 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    /// Upper bound on the client's send rate; advertised to clients.
    pub max_fps: f64,
}

impl Default for StreamSection {
    fn default() -> Self {
        Self { max_fps: 24.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageSection {
    /// Sessions live in `<root>/<session_id>/`.
    pub root: PathBuf,
}

impl Default for StorageSection {
    fn default() -> Self {
        Self {
            root: PathBuf::from("sessions"),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = codec::read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.blend.lambda) {
            return Err(Error::Config(format!("blend.lambda = {} is outside [0, 1]", self.blend.lambda)));
        }
        if !(self.loss.lambda >= 0.0 && self.loss.lambda.is_finite()) {
            return Err(Error::Config(format!("loss.lambda = {} must be finite and >= 0", self.loss.lambda)));
        }
        if self.capture.width == 0 || self.capture.height == 0 {
            return Err(Error::Config("capture size must be positive".into()));
        }
        if !(self.stream.max_fps > 0.0) {
            return Err(Error::Config("stream.max_fps must be positive".into()));
        }
        self.handseg_config().validate()?;
        self.train.validate()
    }

    pub fn handseg_config(&self) -> HandSegmentorConfig {
        HandSegmentorConfig {
            model_path: self.handseg.model_path.clone(),
            ..HandSegmentorConfig::new(self.handseg.backend.clone())
        }
    }
}
