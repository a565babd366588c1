use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::classification_accuracy;
use crate::datamgmt::TeachingSample;
use crate::error::{Error, Result};
use crate::handseg::{HandSegmentor, HandSegmentorConfig};
use crate::highlighter::HighlighterModel;
use crate::imaging::ImageFrame;
use crate::teachtrain::{ClassDef, UserModel};

/// Classification accuracy of `model` on samples gathered elsewhere. Foreign
/// classes are matched to the model's classes by label.
pub fn cross_condition_eval(
    model: &UserModel,
    foreign_classes: &[ClassDef],
    foreign_samples: &[TeachingSample],
) -> Result<f64> {
    let by_label: BTreeMap<&str, usize> = model.classes().iter().map(|c| (c.label.as_str(), c.class_id)).collect();
    let unmatched: Vec<String> = foreign_classes
        .iter()
        .filter(|c| !by_label.contains_key(c.label.as_str()))
        .map(|c| c.label.clone())
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::Mapping(unmatched));
    }
    let remap: BTreeMap<usize, usize> = foreign_classes
        .iter()
        .map(|c| (c.class_id, by_label[c.label.as_str()]))
        .collect();
    let mut preds = Vec::with_capacity(foreign_samples.len());
    let mut labels = Vec::with_capacity(foreign_samples.len());
    for s in foreign_samples {
        let label = *remap.get(&s.class_id()).ok_or_else(|| Error::Validation {
            item: s.sample_id().to_string(),
            reason: format!("class {} has no foreign class definition", s.class_id()),
        })?;
        labels.push(label);
        preds.push(model.predict(s.frame(), model.lambda_blend())?.predicted_class);
    }
    classification_accuracy(&preds, &labels)
}

/// Throughput of the full highlight pipeline on in-memory frames, batch 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    /// Median of per-frame rates after warmup.
    pub fps: f64,
    pub per_frame_ms: Vec<f64>,
    pub warmup: usize,
    pub threads: usize,
}

/// Times hand segmentation plus highlight prediction per frame, discarding
/// the first `warmup` frames. Needs at least `warmup + 10` frames.
pub fn benchmark_fps_detailed(
    model: &HighlighterModel,
    handseg: &HandSegmentorConfig,
    frames: &[ImageFrame],
    warmup: usize,
) -> Result<FpsReport> {
    if frames.len() < warmup + 10 {
        return Err(Error::Argument(format!(
            "{} frames given, need at least warmup + 10 = {}",
            frames.len(),
            warmup + 10
        )));
    }
    let seg = HandSegmentor::new(handseg.clone())?;
    let mut per_frame_ms = Vec::with_capacity(frames.len() - warmup);
    for (i, frame) in frames.iter().enumerate() {
        let t0 = Instant::now();
        let hand = seg.hand_mask(frame)?;
        model.predict_highlight(frame, &hand)?;
        let dt = t0.elapsed().as_secs_f64();
        if i >= warmup {
            per_frame_ms.push(dt * 1e3);
        }
    }
    let mut rates: Vec<f64> = per_frame_ms.iter().map(|ms| 1e3 / ms.max(1e-9)).collect();
    rates.sort_by(f64::total_cmp);
    let n = rates.len();
    let fps = if n % 2 == 1 {
        rates[n / 2]
    } else {
        (rates[n / 2 - 1] + rates[n / 2]) / 2.0
    };
    Ok(FpsReport {
        fps,
        per_frame_ms,
        warmup,
        threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    })
}

pub fn benchmark_fps(
    model: &HighlighterModel,
    handseg: &HandSegmentorConfig,
    frames: &[ImageFrame],
    warmup: usize,
) -> Result<f64> {
    Ok(benchmark_fps_detailed(model, handseg, frames, warmup)?.fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{BackboneId, DecoderId, ModelSpec};
    use crate::teachtrain::UserTrainConfig;

    #[test]
    fn fps_needs_enough_frames() {
        let m = HighlighterModel::new(ModelSpec::new(BackboneId::TinyCnn, DecoderId::Unet), (16, 16), 0).unwrap();
        let frames: Vec<_> = (0..12).map(|i| ImageFrame::filled(16, 16, [i, 0, 0], "f").unwrap()).collect();
        assert!(matches!(
            benchmark_fps(&m, &HandSegmentorConfig::constant(), &frames, 3),
            Err(Error::Argument(_))
        ));
        let r = benchmark_fps_detailed(&m, &HandSegmentorConfig::constant(), &frames, 2).unwrap();
        assert_eq!(r.per_frame_ms.len(), 10);
        assert!(r.fps > 0.0);
    }

    #[test]
    fn cross_condition_label_mapping() {
        let cfg = UserTrainConfig {
            backbone: BackboneId::TinyCnn,
            pretrained_encoder: false,
            input_size: (16, 16),
            ..Default::default()
        };
        let classes = vec![ClassDef::new(0, "cup"), ClassDef::new(1, "book")];
        let m = UserModel::new(classes, cfg, 1.0).unwrap();
        let frame = ImageFrame::filled(16, 16, [5, 5, 5], "f").unwrap();
        let pred = m.predict(&frame, 0.5).unwrap().predicted_class;
        // foreign ids are swapped relative to the model; labels decide
        let foreign = vec![ClassDef::new(0, "book"), ClassDef::new(1, "cup")];
        let foreign_id = if pred == 0 { 1 } else { 0 };
        let s = TeachingSample::new("a", foreign_id, frame, None, "other").unwrap();
        assert_eq!(cross_condition_eval(&m, &foreign, &[s.clone()]).unwrap(), 1.0);
        let bad = vec![ClassDef::new(0, "pen"), ClassDef::new(1, "cup")];
        match cross_condition_eval(&m, &bad, &[s]) {
            Err(Error::Mapping(l)) => assert_eq!(l, vec!["pen".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
