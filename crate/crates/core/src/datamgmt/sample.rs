use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};
use crate::imaging::{binarize, BinaryMask, ImageFrame, SoftMask, DEFAULT_THRESHOLD};

/// One captured teaching example: the RGB frame, the class it demonstrates
/// and, when a highlighter ran, the inferred object mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TeachingSample {
    sample_id: String,
    class_id: usize,
    frame: ImageFrame,
    highlight_soft: Option<SoftMask>,
    highlight_bin: Option<BinaryMask>,
    captured_at: u64,
    session_id: String,
}

/// Milliseconds since the Unix epoch.
pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl TeachingSample {
    /// The frame takes `sample_id` as its source id. The soft mask is snapped
    /// to 1/255 steps so it survives 8-bit PNG storage unchanged; the binary
    /// mask is derived from it at 0.5.
    pub fn new(
        sample_id: impl Into<String>,
        class_id: usize,
        frame: ImageFrame,
        highlight: Option<SoftMask>,
        session_id: impl Into<String>,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        let (soft, bin) = match highlight {
            Some(h) => {
                if h.dims() != frame.dims() {
                    return Err(Error::Validation {
                        item: sample_id,
                        reason: format!("mask is {:?}, frame is {:?}", h.dims(), frame.dims()),
                    });
                }
                let q = h.quantized();
                let b = binarize(&q, DEFAULT_THRESHOLD)?;
                (Some(q), Some(b))
            }
            None => (None, None),
        };
        Ok(Self {
            frame: frame.with_source_id(sample_id.clone()),
            sample_id,
            class_id,
            highlight_soft: soft,
            highlight_bin: bin,
            captured_at: now_millis(),
            session_id: session_id.into(),
        })
    }

    /// Rebuilds a stored sample; `bin` must equal the binarized `soft`.
    pub fn from_parts(
        sample_id: impl Into<String>,
        class_id: usize,
        frame: ImageFrame,
        masks: Option<(SoftMask, BinaryMask)>,
        captured_at: u64,
        session_id: impl Into<String>,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        let (soft, bin) = match masks {
            Some((s, b)) => {
                if s.dims() != frame.dims() || b.dims() != frame.dims() {
                    return Err(Error::Validation {
                        item: sample_id,
                        reason: "mask and frame shapes differ".into(),
                    });
                }
                if binarize(&s, DEFAULT_THRESHOLD)? != b {
                    return Err(Error::Validation {
                        item: sample_id,
                        reason: "binary mask is not the thresholded soft mask".into(),
                    });
                }
                (Some(s), Some(b))
            }
            None => (None, None),
        };
        Ok(Self {
            frame: frame.with_source_id(sample_id.clone()),
            sample_id,
            class_id,
            highlight_soft: soft,
            highlight_bin: bin,
            captured_at,
            session_id: session_id.into(),
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn frame(&self) -> &ImageFrame {
        &self.frame
    }

    pub fn highlight_soft(&self) -> Option<&SoftMask> {
        self.highlight_soft.as_ref()
    }

    pub fn highlight_bin(&self) -> Option<&BinaryMask> {
        self.highlight_bin.as_ref()
    }

    pub fn captured_at(&self) -> u64 {
        self.captured_at
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn with_class_id(mut self, class_id: usize) -> Self {
        self.class_id = class_id;
        self
    }
}
