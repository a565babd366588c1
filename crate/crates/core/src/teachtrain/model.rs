use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor, D};
use candle_nn::{Linear, Module};
use serde::{Deserialize, Serialize};

use super::cam::{blend_saliency, cam_from_features};
use super::loss::{argmax, softmax};
use crate::error::{Error, Result};
use crate::imaging::{codec, resize_frame_bilinear, resize_soft_bilinear, ImageFrame, SoftMask};
use crate::nn::{frame_tensor, BackboneId, DecoderId, SegNet};

pub const DEFAULT_LAMBDA_LOSS: f64 = 1.0;
pub const DEFAULT_LAMBDA_BLEND: f64 = 0.718;

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CLASSES_FILE: &str = "classes.json";
pub const CONFIG_FILE: &str = "train_config.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDef {
    #[serde(rename = "id")]
    pub class_id: usize,
    pub label: String,
    #[serde(default)]
    pub sample_count: usize,
}

impl ClassDef {
    pub fn new(class_id: usize, label: impl Into<String>) -> Self {
        Self {
            class_id,
            label: label.into(),
            sample_count: 0,
        }
    }
}

/// Ids must run 0, 1, 2, ... and labels must be distinct.
pub fn validate_classes(classes: &[ClassDef]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, c) in classes.iter().enumerate() {
        if c.class_id != i {
            return Err(Error::Validation {
                item: format!("class {:?}", c.label),
                reason: format!("id {} where {i} was expected", c.class_id),
            });
        }
        if !seen.insert(c.label.as_str()) {
            return Err(Error::Conflict(format!("duplicate class label {:?}", c.label)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Constant learning rate.
    pub lr: f64,
    pub optimizer: String,
    /// Start the encoder from `encoder_weights` when set.
    pub pretrained_encoder: bool,
    pub encoder_weights: Option<PathBuf>,
    pub seed: u64,
    pub backbone: BackboneId,
    /// Attach a segmentation decoder next to the classification head.
    pub seg_decoder: bool,
    pub decoder: DecoderId,
    /// Network input (width, height).
    pub input_size: (u32, u32),
}

impl Default for UserTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 4,
            lr: 1e-4,
            optimizer: "adam".into(),
            pretrained_encoder: true,
            encoder_weights: None,
            seed: 0,
            backbone: BackboneId::EfficientNetB0,
            seg_decoder: true,
            decoder: DecoderId::Unet,
            input_size: (640, 480),
        }
    }
}

impl UserTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.optimizer != "adam" {
            return Err(Error::Config(format!("unsupported optimizer {:?}", self.optimizer)));
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::Config("input_size must be positive".into()));
        }
        Ok(())
    }
}

/// Training outcome stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserModelMetrics {
    pub train_accuracy: f64,
    pub train_miou: Option<f64>,
    pub final_loss: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub confidences: Vec<f64>,
    pub predicted_class: usize,
    pub seg_output: Option<SoftMask>,
    pub saliency: SoftMask,
    pub cam: SoftMask,
}

#[derive(Serialize, Deserialize)]
struct StoredConfig {
    #[serde(flatten)]
    config: UserTrainConfig,
    lambda_loss: f64,
    lambda_blend: f64,
}

/// The user-taught classifier: encoder, GAP + linear head and, optionally,
/// a segmentation decoder on the same encoder pyramid.
pub struct UserModel {
    classes: Vec<ClassDef>,
    config: UserTrainConfig,
    net: SegNet,
    head: Linear,
    lambda_loss: f64,
    lambda_blend: f64,
    metrics: Option<UserModelMetrics>,
}

impl UserModel {
    /// An untrained model over `classes`, initialized from `config.seed`.
    pub fn new(classes: Vec<ClassDef>, config: UserTrainConfig, lambda_loss: f64) -> Result<Self> {
        config.validate()?;
        if classes.len() < 2 {
            return Err(Error::Dataset(format!("need at least 2 classes, got {}", classes.len())));
        }
        validate_classes(&classes)?;
        if !(lambda_loss >= 0.0) {
            return Err(Error::Argument(format!("lambda must be >= 0, got {lambda_loss}")));
        }
        let n = classes.len();
        let decoder = config.seg_decoder.then_some(config.decoder);
        let (net, head) = SegNet::with_head(config.backbone, decoder, 3, config.seed, |vb, enc| {
            let c = *enc.channels().last().expect("encoder has levels");
            candle_nn::linear(c, n, vb)
        })?;
        if config.pretrained_encoder {
            match &config.encoder_weights {
                Some(p) => {
                    let k = net.load_prefix(p, "encoder.")?;
                    log::info!("loaded {k} encoder tensors from {}", p.display());
                }
                None => log::warn!("no pretrained encoder weights configured; starting from seeded initialization"),
            }
        }
        Ok(Self {
            classes,
            config,
            net,
            head,
            lambda_loss,
            lambda_blend: DEFAULT_LAMBDA_BLEND,
            metrics: None,
        })
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn config(&self) -> &UserTrainConfig {
        &self.config
    }

    pub fn encoder_id(&self) -> &'static str {
        self.config.backbone.as_str()
    }

    pub fn has_seg_decoder(&self) -> bool {
        self.net.has_decoder()
    }

    pub fn lambda_loss(&self) -> f64 {
        self.lambda_loss
    }

    pub fn lambda_blend(&self) -> f64 {
        self.lambda_blend
    }

    pub fn set_lambda_blend(&mut self, lambda: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Argument(format!("blend weight {lambda} outside [0, 1]")));
        }
        self.lambda_blend = lambda;
        Ok(())
    }

    pub fn metrics(&self) -> Option<&UserModelMetrics> {
        self.metrics.as_ref()
    }

    pub(crate) fn set_metrics(&mut self, metrics: UserModelMetrics) {
        self.metrics = Some(metrics);
    }

    pub(crate) fn net(&self) -> &SegNet {
        &self.net
    }

    pub(crate) fn set_class_counts(&mut self, counts: &[usize]) {
        for (c, n) in self.classes.iter_mut().zip(counts) {
            c.sample_count = *n;
        }
    }

    /// (1, 3, H, W) network input for a frame.
    pub(crate) fn input_tensor(&self, frame: &ImageFrame) -> Result<Tensor> {
        let (w, h) = self.config.input_size;
        Ok(frame_tensor(&resize_frame_bilinear(frame, w, h))?)
    }

    /// Class logits (N, C) and, with a decoder, seg logits (N, 1, H, W).
    pub(crate) fn forward(&self, x: &Tensor, train: bool, with_seg: bool) -> Result<(Tensor, Option<Tensor>)> {
        let feats = self.net.features(x, train)?;
        let logits = self.classify(&feats)?;
        let seg = if with_seg && self.has_seg_decoder() {
            let (_, _, h, w) = x.dims4()?;
            Some(self.net.decode(&feats, (h, w), train)?)
        } else {
            None
        };
        Ok((logits, seg))
    }

    fn classify(&self, feats: &[Tensor]) -> Result<Tensor> {
        let last = feats.last().ok_or_else(|| Error::Capability("encoder produced no features".into()))?;
        let pooled = last.mean(D::Minus1)?.mean(D::Minus1)?;
        Ok(self.head.forward(&pooled)?)
    }

    fn check_class(&self, class_id: usize) -> Result<()> {
        if class_id >= self.classes.len() {
            return Err(Error::Argument(format!(
                "class {class_id} outside 0..{}",
                self.classes.len()
            )));
        }
        Ok(())
    }

    /// Final-stage encoder features (C, h, w) for a frame.
    pub fn final_features(&self, frame: &ImageFrame) -> Result<Tensor> {
        let feats = self.net.features(&self.input_tensor(frame)?, false)?;
        let last = feats.last().ok_or_else(|| Error::Capability("encoder produced no features".into()))?;
        Ok(last.squeeze(0)?)
    }

    /// Classifier weights of one class, one per final-stage channel.
    pub fn class_weights(&self, class_id: usize) -> Result<Tensor> {
        self.check_class(class_id)?;
        Ok(self.head.weight().get(class_id)?)
    }

    pub fn class_logits(&self, frame: &ImageFrame) -> Result<Vec<f64>> {
        let (logits, _) = self.forward(&self.input_tensor(frame)?, false, false)?;
        Ok(logits.squeeze(0)?.to_dtype(DType::F64)?.to_vec1()?)
    }

    pub fn compute_cam(&self, frame: &ImageFrame, class_id: usize) -> Result<SoftMask> {
        self.check_class(class_id)?;
        cam_from_features(
            &self.final_features(frame)?,
            &self.class_weights(class_id)?,
            frame.width(),
            frame.height(),
        )
    }

    /// Confidences, decoder output and the blended saliency of the predicted class.
    pub fn predict(&self, frame: &ImageFrame, lambda_blend: f64) -> Result<PredictionResult> {
        self.predict_for_class(frame, lambda_blend, None)
    }

    /// Like [`UserModel::predict`], with saliency shown for `saliency_class`
    /// instead of the predicted class when given.
    pub fn predict_for_class(
        &self,
        frame: &ImageFrame,
        lambda_blend: f64,
        saliency_class: Option<usize>,
    ) -> Result<PredictionResult> {
        if let Some(c) = saliency_class {
            self.check_class(c)?;
        }
        let x = self.input_tensor(frame)?;
        let feats = self.net.features(&x, false)?;
        let logits: Vec<f64> = self.classify(&feats)?.squeeze(0)?.to_dtype(DType::F64)?.to_vec1()?;
        let confidences = softmax(&logits);
        let predicted_class = argmax(&confidences);
        let shown = saliency_class.unwrap_or(predicted_class);
        let last = feats.last().expect("classify checked levels").squeeze(0)?;
        let cam = cam_from_features(&last, &self.class_weights(shown)?, frame.width(), frame.height())?;
        let seg_output = if self.has_seg_decoder() {
            let (_, _, h, w) = x.dims4()?;
            let probs = candle_nn::ops::sigmoid(&self.net.decode(&feats, (h, w), false)?)?;
            let values = probs.flatten_all()?.to_vec1::<f32>()?.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
            let small = SoftMask::new(w as u32, h as u32, values)?;
            Some(resize_soft_bilinear(&small, frame.width(), frame.height()))
        } else {
            None
        };
        let saliency = match &seg_output {
            Some(out) => blend_saliency(out, &cam, lambda_blend)?,
            None => {
                if !(0.0..=1.0).contains(&lambda_blend) {
                    return Err(Error::Argument(format!("blend weight {lambda_blend} outside [0, 1]")));
                }
                cam.clone()
            }
        };
        Ok(PredictionResult {
            confidences,
            predicted_class,
            seg_output,
            saliency,
            cam,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        codec::write_atomic(&dir.join(CLASSES_FILE), serde_json::to_string_pretty(&self.classes)?.as_bytes())?;
        let stored = StoredConfig {
            config: self.config.clone(),
            lambda_loss: self.lambda_loss,
            lambda_blend: self.lambda_blend,
        };
        codec::write_atomic(&dir.join(CONFIG_FILE), serde_json::to_string_pretty(&stored)?.as_bytes())?;
        codec::write_atomic(&dir.join(METRICS_FILE), serde_json::to_string_pretty(&self.metrics)?.as_bytes())?;
        let tmp = dir.join(format!("{WEIGHTS_FILE}.tmp"));
        self.net.save(&tmp)?;
        std::fs::rename(&tmp, dir.join(WEIGHTS_FILE)).map_err(|e| Error::io(dir.join(WEIGHTS_FILE), e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let classes: Vec<ClassDef> = serde_json::from_slice(&codec::read_file(&dir.join(CLASSES_FILE))?)?;
        let stored: StoredConfig = serde_json::from_slice(&codec::read_file(&dir.join(CONFIG_FILE))?)?;
        let metrics: Option<UserModelMetrics> = serde_json::from_slice(&codec::read_file(&dir.join(METRICS_FILE))?)?;
        let mut config = stored.config;
        // weights come from the saved file, not from a pretrained source
        config.pretrained_encoder = false;
        let mut model = Self::new(classes, config, stored.lambda_loss)?;
        model.set_lambda_blend(stored.lambda_blend)?;
        model.metrics = metrics;
        let weights = dir.join(WEIGHTS_FILE);
        if !weights.is_file() {
            return Err(Error::NotFound(format!("weights file {}", weights.display())));
        }
        model.net.load(&weights)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> UserTrainConfig {
        UserTrainConfig {
            backbone: BackboneId::TinyCnn,
            pretrained_encoder: false,
            input_size: (32, 32),
            ..Default::default()
        }
    }

    fn classes(n: usize) -> Vec<ClassDef> {
        (0..n).map(|i| ClassDef::new(i, format!("c{i}"))).collect()
    }

    #[test]
    fn class_validation() {
        assert!(matches!(
            UserModel::new(classes(1), tiny_config(), 1.0),
            Err(Error::Dataset(_))
        ));
        let mut c = classes(2);
        c[1].label = "c0".into();
        assert!(matches!(UserModel::new(c, tiny_config(), 1.0), Err(Error::Conflict(_))));
        let mut c = classes(2);
        c[1].class_id = 5;
        assert!(UserModel::new(c, tiny_config(), 1.0).is_err());
    }

    #[test]
    fn prediction_invariants() {
        let m = UserModel::new(classes(3), tiny_config(), 1.0).unwrap();
        let f = ImageFrame::filled(40, 30, [100, 50, 200], "f").unwrap();
        let p = m.predict(&f, 0.718).unwrap();
        assert!((p.confidences.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(p.cam.dims(), (40, 30));
        assert_eq!(p.seg_output.as_ref().unwrap().dims(), (40, 30));
        let q = m.predict(&f, 0.1).unwrap();
        assert_eq!(p.predicted_class, q.predicted_class);
        assert!(m.compute_cam(&f, 3).is_err());
        assert!(m.predict_for_class(&f, 0.5, Some(7)).is_err());
    }

    #[test]
    fn classifier_only_saliency_is_cam() {
        let cfg = UserTrainConfig {
            seg_decoder: false,
            ..tiny_config()
        };
        let m = UserModel::new(classes(2), cfg, 0.0).unwrap();
        let f = ImageFrame::filled(16, 16, [1, 2, 3], "f").unwrap();
        let p = m.predict(&f, 0.718).unwrap();
        assert!(p.seg_output.is_none());
        assert_eq!(p.saliency, p.cam);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = UserModel::new(classes(2), tiny_config(), 1.0).unwrap();
        m.set_lambda_blend(0.3).unwrap();
        m.save(dir.path()).unwrap();
        for f in [WEIGHTS_FILE, CLASSES_FILE, CONFIG_FILE, METRICS_FILE] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let back = UserModel::load(dir.path()).unwrap();
        assert_eq!(back.lambda_blend(), 0.3);
        assert_eq!(back.classes(), m.classes());
        let f = ImageFrame::filled(32, 32, [9, 80, 7], "f").unwrap();
        assert_eq!(m.predict(&f, 0.5).unwrap(), back.predict(&f, 0.5).unwrap());
    }
}
