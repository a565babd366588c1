use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{binarize, BinaryMask, SoftMask};

/// Intersection over union of two hard masks. Two empty masks score 1.0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape(
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.values().iter().zip(b.values()) {
        inter += (x & y) as usize;
        union += (x | y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Segmentation and classification metrics for one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub miou: f64,
    pub per_image_iou: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub image_ids: Vec<String>,
    #[serde(default)]
    pub classification_accuracy: Option<f64>,
    #[serde(default)]
    pub fps: Option<f64>,
    pub model_desc: String,
    pub dataset_desc: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn describe(mut self, model_desc: impl Into<String>, dataset_desc: impl Into<String>, seed: u64) -> Self {
        self.model_desc = model_desc.into();
        self.dataset_desc = dataset_desc.into();
        self.seed = seed;
        self
    }

    pub fn with_image_ids(mut self, ids: Vec<String>) -> Self {
        self.image_ids = ids;
        self
    }

    /// Indices of the `k` lowest-IoU images, worst first.
    pub fn worst_indices(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.per_image_iou.len()).collect();
        idx.sort_by(|a, b| self.per_image_iou[*a].total_cmp(&self.per_image_iou[*b]).then(a.cmp(b)));
        idx.truncate(k);
        idx
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Binarizes every prediction at `threshold` and averages the per-image IoU
/// (unweighted mean over images, not pixel-pooled).
pub fn miou(pairs: &[(SoftMask, BinaryMask)], threshold: f32) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("mIoU needs at least one prediction/ground-truth pair".into()));
    }
    let per_image_iou = pairs
        .iter()
        .map(|(pred, gt)| iou(&binarize(pred, threshold)?, gt))
        .collect::<Result<Vec<_>>>()?;
    let miou = per_image_iou.iter().sum::<f64>() / per_image_iou.len() as f64;
    Ok(EvalReport {
        miou,
        per_image_iou,
        image_ids: Vec::new(),
        classification_accuracy: None,
        fps: None,
        model_desc: String::new(),
        dataset_desc: String::new(),
        seed: 0,
    })
}

/// Fraction of positions where `preds` equals `labels`.
pub fn classification_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Argument("accuracy over an empty list".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}
