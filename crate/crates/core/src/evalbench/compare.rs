use serde::{Deserialize, Serialize};

use super::bench::benchmark_fps;
use crate::datamgmt::DatasetSplit;
use crate::error::{Error, Result};
use crate::handseg::HandSegmentorConfig;
use crate::highlighter::{train_highlighter, HighlighterTrainConfig};
use crate::imaging::ImageFrame;
use crate::nn::ModelSpec;

pub const FPS_WARMUP: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchRow {
    pub spec: String,
    pub miou: f64,
    pub fps: f64,
}

/// One row per spec, most accurate first (ties keep input order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchTable {
    pub rows: Vec<ArchRow>,
    pub seed: u64,
    pub dataset_desc: String,
}

impl ArchTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text table with aligned columns.
    pub fn render(&self) -> String {
        let w = self.rows.iter().map(|r| r.spec.len()).max().unwrap_or(0).max(4);
        let mut out = format!("{:<w$}  {:>6}  {:>8}\n", "spec", "mIoU", "fps");
        for r in &self.rows {
            out.push_str(&format!("{:<w$}  {:>6.3}  {:>8.1}\n", r.spec, r.miou, r.fps));
        }
        out
    }
}

/// Frames for throughput measurement: the test images (training images for
/// an empty test set), cycled up to the minimum count the benchmark needs.
pub fn benchmark_frames(split: &DatasetSplit) -> Result<Vec<ImageFrame>> {
    let source = if split.test.is_empty() { &split.train } else { &split.test };
    let base = source.iter().map(|r| r.load_frame()).collect::<Result<Vec<_>>>()?;
    let need = FPS_WARMUP + 10;
    Ok(base.iter().cycle().take(need.max(base.len())).cloned().collect())
}

/// Trains every spec with the same config and seed, measures end-to-end
/// fps on the test frames, and sorts by mIoU.
pub fn compare_architectures(
    split: &DatasetSplit,
    specs: &[ModelSpec],
    config: &HighlighterTrainConfig,
    handseg: &HandSegmentorConfig,
) -> Result<ArchTable> {
    if specs.is_empty() {
        return Err(Error::Argument("no architectures to compare".into()));
    }
    let frames = benchmark_frames(split)?;
    let mut rows = Vec::with_capacity(specs.len());
    let mut dataset_desc = String::new();
    for spec in specs {
        log::info!("training {spec}");
        let (model, report) = train_highlighter(split, *spec, config, handseg, |_, _| {})?;
        let fps = benchmark_fps(&model, handseg, &frames, FPS_WARMUP)?;
        dataset_desc = report.dataset_desc.clone();
        rows.push(ArchRow {
            spec: spec.to_string(),
            miou: report.miou,
            fps,
        });
    }
    rows.sort_by(|a, b| b.miou.total_cmp(&a.miou));
    Ok(ArchTable {
        rows,
        seed: config.seed,
        dataset_desc,
    })
}
