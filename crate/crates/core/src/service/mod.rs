//! Live teaching sessions: frame streaming with object highlights, capture,
//! background training jobs and assessment predictions, over HTTP and a
//! WebSocket stream.

mod config;
mod http;
mod manager;
mod messages;
mod session;

pub use config::{BlendSection, CaptureSection, HandsegSection, HighlighterSection, LossSection, ServiceConfig, StorageSection, StreamSection};
pub use http::{router, serve, ApiError};
pub use manager::{Captured, FrameOutput, JobStatus, SessionManager, SessionView, TrainRequest, TrainingJob};
pub use messages::{
    decode_frame_b64, decode_mask_b64, encode_frame_b64, encode_mask_b64, error_code, ClientMessage, ServerMessage,
    PROTOCOL_VERSION, SCHEMA_JSON,
};
pub use session::{read_events, replay, EventLog, Mode, SessionEvent, SessionState, UserModelRef, EVENT_LOG};
