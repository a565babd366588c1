//! Versioned JSON envelopes for the stream socket. Frames travel as base64
//! JPEG, masks as base64 8-bit grayscale PNG.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{codec, ImageFrame, SoftMask};

pub const PROTOCOL_VERSION: u32 = 1;

/// The published schema for every message below.
pub const SCHEMA_JSON: &str = include_str!("../../schema/messages.v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Frame {
        v: u32,
        frame: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_id: Option<String>,
        /// Assessment mode: show saliency for this class instead of the predicted one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        saliency_class: Option<usize>,
    },
    Capture {
        v: u32,
        frame: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_id: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ServerMessage {
    Highlight {
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_id: Option<String>,
        width: u32,
        height: u32,
        mask: String,
        latency_ms: f64,
        dropped: u64,
    },
    Prediction {
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_id: Option<String>,
        confidences: Vec<f64>,
        predicted_class: usize,
        predicted_label: String,
        saliency_class: usize,
        width: u32,
        height: u32,
        saliency: String,
        latency_ms: f64,
        dropped: u64,
    },
    Captured {
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_id: Option<String>,
        sample_id: String,
        class_id: usize,
        sample_count: usize,
    },
    Error {
        v: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame_id: Option<String>,
        code: String,
        message: String,
    },
}

impl ClientMessage {
    pub fn frame(frame: &ImageFrame, frame_id: Option<String>) -> Result<Self> {
        Ok(ClientMessage::Frame {
            v: PROTOCOL_VERSION,
            frame: encode_frame_b64(frame)?,
            frame_id,
            saliency_class: None,
        })
    }

    pub fn capture(frame: &ImageFrame, frame_id: Option<String>) -> Result<Self> {
        Ok(ClientMessage::Capture {
            v: PROTOCOL_VERSION,
            frame: encode_frame_b64(frame)?,
            frame_id,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let msg: Self = serde_json::from_str(text).map_err(|e| Error::Protocol(e.to_string()))?;
        let v = match &msg {
            ClientMessage::Frame { v, .. } | ClientMessage::Capture { v, .. } => *v,
        };
        if v != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!("unsupported protocol version {v}")));
        }
        Ok(msg)
    }

    pub fn frame_id(&self) -> Option<&str> {
        match self {
            ClientMessage::Frame { frame_id, .. } | ClientMessage::Capture { frame_id, .. } => frame_id.as_deref(),
        }
    }
}

impl ServerMessage {
    pub fn error(err: &Error, frame_id: Option<String>) -> Self {
        ServerMessage::Error {
            v: PROTOCOL_VERSION,
            frame_id,
            code: error_code(err).into(),
            message: err.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// Short machine-readable name for an error kind.
pub fn error_code(err: &Error) -> &'static str {
    match err {
        Error::NotFound(_) => "not_found",
        Error::Conflict(_) => "conflict",
        Error::State(_) => "state",
        Error::Protocol(_) => "protocol",
        Error::Dataset(_) => "dataset",
        Error::Validation { .. } => "validation",
        Error::Argument(_) | Error::Shape { .. } => "argument",
        Error::Config(_) | Error::Catalog { .. } => "config",
        Error::Inference { .. } => "inference",
        _ => "internal",
    }
}

pub fn encode_frame_b64(frame: &ImageFrame) -> Result<String> {
    Ok(B64.encode(codec::encode_frame_jpeg(frame, codec::WIRE_JPEG_QUALITY)?))
}

/// Any failure here is a protocol error.
pub fn decode_frame_b64(data: &str, source_id: impl Into<String>) -> Result<ImageFrame> {
    let bytes = B64
        .decode(data)
        .map_err(|e| Error::Protocol(format!("frame is not valid base64: {e}")))?;
    codec::decode_frame(&bytes, source_id).map_err(|e| Error::Protocol(format!("frame does not decode: {e}")))
}

pub fn encode_mask_b64(mask: &SoftMask) -> Result<String> {
    Ok(B64.encode(codec::encode_soft_png(mask)?))
}

pub fn decode_mask_b64(data: &str) -> Result<SoftMask> {
    let bytes = B64
        .decode(data)
        .map_err(|e| Error::Protocol(format!("mask is not valid base64: {e}")))?;
    codec::decode_soft_png(&bytes)
}
