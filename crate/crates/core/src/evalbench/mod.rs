//! Metrics, cross-condition evaluation, throughput and architecture sweeps.

mod bench;
mod compare;
mod metrics;

pub use bench::{benchmark_fps, benchmark_fps_detailed, cross_condition_eval, FpsReport};
pub use compare::{benchmark_frames, compare_architectures, ArchRow, ArchTable, FPS_WARMUP};
pub use metrics::{classification_accuracy, iou, miou, EvalReport};
