use std::collections::BTreeSet;

use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::joint_loss_tensor;
use super::model::{ClassDef, UserModel, UserModelMetrics, UserTrainConfig};
use crate::datamgmt::TeachingSample;
use crate::error::{Error, Result};
use crate::evalbench::{classification_accuracy, miou, EvalReport};
use crate::imaging::{resize_mask_nearest, DEFAULT_THRESHOLD};
use crate::nn::trainable_vars;

/// Accuracy and, when the model segments and the samples carry masks, mIoU.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEval {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub segmentation: Option<EvalReport>,
}

/// Adam at a constant rate on the joint loss.
pub struct UserTrainer {
    model: UserModel,
    opt: AdamW,
    inputs: Vec<Tensor>,
    labels: Vec<u32>,
    targets: Option<Vec<Tensor>>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl UserTrainer {
    /// Checks the samples against the model: at least two classes present,
    /// ids in range, and masks on every sample when the seg term is active.
    pub fn new(model: UserModel, samples: &[TeachingSample]) -> Result<Self> {
        let present: BTreeSet<usize> = samples.iter().map(|s| s.class_id()).collect();
        if present.len() < 2 {
            return Err(Error::Dataset(format!(
                "training needs samples from at least 2 classes, found {}",
                present.len()
            )));
        }
        if let Some(s) = samples.iter().find(|s| s.class_id() >= model.num_classes()) {
            return Err(Error::Validation {
                item: s.sample_id().to_string(),
                reason: format!("class {} outside 0..{}", s.class_id(), model.num_classes()),
            });
        }
        let use_seg = model.has_seg_decoder() && model.lambda_loss() > 0.0;
        if use_seg {
            if let Some(s) = samples.iter().find(|s| s.highlight_bin().is_none()) {
                return Err(Error::Validation {
                    item: s.sample_id().to_string(),
                    reason: "sample has no mask but the segmentation loss is enabled".into(),
                });
            }
        }
        let (w, h) = model.config().input_size;
        let mut inputs = Vec::with_capacity(samples.len());
        let mut targets = Vec::new();
        for s in samples {
            inputs.push(model.input_tensor(s.frame())?);
            if use_seg {
                let m = resize_mask_nearest(s.highlight_bin().expect("checked above"), w, h);
                let v: Vec<f32> = m.values().iter().map(|b| *b as f32).collect();
                targets.push(Tensor::from_vec(v, (1, 1, h as usize, w as usize), &Device::Cpu)?);
            }
        }
        let params = ParamsAdamW {
            lr: model.config().lr,
            weight_decay: 0.0,
            ..Default::default()
        };
        let opt = AdamW::new(trainable_vars(model.net().varmap()), params)?;
        let rng = ChaCha8Rng::seed_from_u64(model.config().seed);
        Ok(Self {
            labels: samples.iter().map(|s| s.class_id() as u32).collect(),
            targets: use_seg.then_some(targets),
            model,
            opt,
            inputs,
            rng,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &UserModel {
        &self.model
    }

    fn loss(&self, indices: &[usize], train: bool) -> Result<Tensor> {
        if indices.is_empty() || indices.iter().any(|i| *i >= self.inputs.len()) {
            return Err(Error::Argument(format!("bad batch indices {indices:?}")));
        }
        let xs: Vec<&Tensor> = indices.iter().map(|i| &self.inputs[*i]).collect();
        let x = Tensor::cat(&xs, 0)?;
        let labels: Vec<u32> = indices.iter().map(|i| self.labels[*i]).collect();
        let labels = Tensor::from_vec(labels, indices.len(), &Device::Cpu)?;
        let (logits, seg) = self.model.forward(&x, train, self.targets.is_some())?;
        let y = match &self.targets {
            Some(t) => Some(Tensor::cat(&indices.iter().map(|i| &t[*i]).collect::<Vec<_>>(), 0)?),
            None => None,
        };
        let seg_pair = match (&seg, &y) {
            (Some(s), Some(y)) => Some((s, y)),
            _ => None,
        };
        Ok(joint_loss_tensor(&logits, &labels, seg_pair, self.model.lambda_loss())?)
    }

    /// Joint loss of the current weights on `indices`, without updating.
    pub fn loss_on(&self, indices: &[usize]) -> Result<f32> {
        Ok(self.loss(indices, false)?.to_scalar::<f32>()?)
    }

    /// One optimizer step; returns the pre-step loss.
    pub fn step(&mut self, indices: &[usize]) -> Result<f32> {
        let loss = self.loss(indices, true)?;
        self.opt.backward_step(&loss)?;
        Ok(loss.to_scalar::<f32>()?)
    }

    pub fn run_epoch(&mut self) -> Result<f32> {
        let mut order: Vec<usize> = (0..self.inputs.len()).collect();
        order.shuffle(&mut self.rng);
        let batch = self.model.config().batch_size;
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch) {
            total += self.step(chunk)?;
            batches += 1;
        }
        self.epoch += 1;
        Ok(total / batches as f32)
    }

    /// Runs the configured epochs; `progress` gets (epoch, mean loss).
    pub fn train(mut self, samples: &[TeachingSample], mut progress: impl FnMut(usize, f32)) -> Result<UserModel> {
        let mut last = f32::NAN;
        while self.epoch < self.model.config().epochs {
            last = self.run_epoch()?;
            if !last.is_finite() {
                return Err(Error::State(format!("training diverged at epoch {}", self.epoch)));
            }
            progress(self.epoch - 1, last);
        }
        let eval = evaluate_user_model(&self.model, samples)?;
        let mut model = self.model;
        model.set_metrics(UserModelMetrics {
            train_accuracy: eval.accuracy,
            train_miou: eval.segmentation.map(|r| r.miou),
            final_loss: last as f64,
            epochs: model.config().epochs,
        });
        Ok(model)
    }
}

fn class_counts(n: usize, samples: &[TeachingSample]) -> Vec<usize> {
    let mut counts = vec![0; n];
    for s in samples {
        if let Some(c) = counts.get_mut(s.class_id()) {
            *c += 1;
        }
    }
    counts
}

/// Trains with generated labels `class-0`, `class-1`, ... for every class id
/// seen in `samples`.
pub fn train_user_model(samples: &[TeachingSample], config: &UserTrainConfig, lambda: f64) -> Result<UserModel> {
    let n = samples.iter().map(|s| s.class_id() + 1).max().unwrap_or(0);
    let classes = (0..n).map(|i| ClassDef::new(i, format!("class-{i}"))).collect();
    train_user_model_with_classes(classes, samples, config, lambda, |_, _| {})
}

pub fn train_user_model_with_classes(
    classes: Vec<ClassDef>,
    samples: &[TeachingSample],
    config: &UserTrainConfig,
    lambda: f64,
    progress: impl FnMut(usize, f32),
) -> Result<UserModel> {
    let distinct: BTreeSet<usize> = samples.iter().map(|s| s.class_id()).collect();
    if distinct.len() < 2 {
        return Err(Error::Dataset(format!(
            "training needs at least 2 classes with samples, found {}",
            distinct.len()
        )));
    }
    let mut model = UserModel::new(classes, config.clone(), lambda)?;
    model.set_class_counts(&class_counts(model.num_classes(), samples));
    UserTrainer::new(model, samples)?.train(samples, progress)
}

/// Predicts every sample. The segmentation report uses the decoder output
/// against each sample's binary mask, and is present only when the model
/// has a decoder and every sample has a mask.
pub fn evaluate_user_model(model: &UserModel, samples: &[TeachingSample]) -> Result<UserEval> {
    if samples.is_empty() {
        return Err(Error::Argument("evaluation needs at least one sample".into()));
    }
    let mut preds = Vec::with_capacity(samples.len());
    let mut pairs = Vec::new();
    for s in samples {
        let p = model.predict(s.frame(), model.lambda_blend())?;
        preds.push(p.predicted_class);
        if let (Some(out), Some(gt)) = (p.seg_output, s.highlight_bin()) {
            pairs.push((out, gt.clone()));
        }
    }
    let labels: Vec<usize> = samples.iter().map(|s| s.class_id()).collect();
    let accuracy = classification_accuracy(&preds, &labels)?;
    let segmentation = if pairs.len() == samples.len() {
        let ids = samples.iter().map(|s| s.sample_id().to_string()).collect();
        let mut r = miou(&pairs, DEFAULT_THRESHOLD)?.with_image_ids(ids);
        r.classification_accuracy = Some(accuracy);
        Some(r.describe(
            format!("{}+{}", model.encoder_id(), model.config().decoder),
            format!("{} teaching samples", samples.len()),
            model.config().seed,
        ))
    } else {
        None
    };
    Ok(UserEval {
        accuracy,
        predictions: preds,
        segmentation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{ImageFrame, SoftMask};
    use crate::nn::BackboneId;

    fn config() -> UserTrainConfig {
        UserTrainConfig {
            backbone: BackboneId::TinyCnn,
            pretrained_encoder: false,
            input_size: (16, 16),
            epochs: 2,
            lr: 1e-3,
            ..Default::default()
        }
    }

    fn sample(i: usize, class: usize, masked: bool) -> TeachingSample {
        let color = if class == 0 { [200, 30, 30] } else { [30, 30, 200] };
        let f = ImageFrame::filled(16, 16, color, format!("s{i}")).unwrap();
        let m = masked.then(|| SoftMask::filled(16, 16, 0.8).unwrap());
        TeachingSample::new(format!("s{i}"), class, f, m, "sess").unwrap()
    }

    #[test]
    fn single_class_is_a_dataset_error() {
        let s = vec![sample(0, 0, true), sample(1, 0, true)];
        assert!(matches!(train_user_model(&s, &config(), 1.0), Err(Error::Dataset(_))));
    }

    #[test]
    fn missing_mask_is_named() {
        let s = vec![sample(0, 0, true), sample(1, 1, false)];
        match train_user_model(&s, &config(), 1.0) {
            Err(Error::Validation { item, .. }) => assert_eq!(item, "s1"),
            other => panic!("unexpected {:?}", other.err()),
        }
    }

    #[test]
    fn classifier_only_without_masks() {
        let s = vec![sample(0, 0, false), sample(1, 1, false)];
        let cfg = UserTrainConfig {
            seg_decoder: false,
            ..config()
        };
        let m = train_user_model(&s, &cfg, 0.0).unwrap();
        assert!(!m.has_seg_decoder());
        assert!(m.metrics().unwrap().train_miou.is_none());
        assert_eq!(m.classes()[1].sample_count, 1);
    }
}
