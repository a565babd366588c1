use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    codec, resize_frame_bilinear, resize_mask_nearest, resize_soft_bilinear, BinaryMask, ImageFrame, SoftMask,
};
use crate::nn::{ModelSpec, SegNet};

/// Channels fed to the highlighter: RGB plus the hand mask.
pub const INPUT_CHANNELS: usize = 4;

pub const WEIGHTS_FILE: &str = "model.bin";
pub const META_FILE: &str = "model.json";

/// A frame and hand mask packed as four planes (R, G, B, hand), channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl ModelInput {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.width as usize * self.height as usize;
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn to_tensor(&self) -> candle_core::Result<Tensor> {
        Tensor::from_slice(
            &self.data,
            (1, INPUT_CHANNELS, self.height as usize, self.width as usize),
            &Device::Cpu,
        )
    }
}

/// RGB scaled to [0, 1] (value / 255) in channels 0-2, the hand mask as
/// {0.0, 1.0} in channel 3.
pub fn prepare_input(frame: &ImageFrame, hand: &BinaryMask) -> Result<ModelInput> {
    frame.check_same_dims(hand.width(), hand.height())?;
    let n = frame.width() as usize * frame.height() as usize;
    let mut data = vec![0f32; INPUT_CHANNELS * n];
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * n + i] = px[c] as f32 / 255.0;
        }
    }
    for (i, v) in hand.values().iter().enumerate() {
        data[3 * n + i] = *v as f32;
    }
    Ok(ModelInput {
        width: frame.width(),
        height: frame.height(),
        data,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta {
    backbone: crate::nn::BackboneId,
    decoder: crate::nn::DecoderId,
    input_channels: usize,
    input_width: u32,
    input_height: u32,
    trained_miou: Option<f64>,
}

/// The gesture-guided object segmentor: (frame, hand mask) -> soft highlight.
pub struct HighlighterModel {
    spec: ModelSpec,
    input_size: (u32, u32),
    trained_miou: Option<f64>,
    net: Option<SegNet>,
}

impl HighlighterModel {
    /// A freshly initialized (untrained) model.
    pub fn new(spec: ModelSpec, input_size: (u32, u32), seed: u64) -> Result<Self> {
        let net = SegNet::new(spec.backbone, Some(spec.decoder), INPUT_CHANNELS, seed)?;
        Ok(Self {
            spec,
            input_size,
            trained_miou: None,
            net: Some(net),
        })
    }

    /// A model description without weights; inference fails until
    /// [`HighlighterModel::load_weights`] succeeds.
    pub fn unloaded(spec: ModelSpec, input_size: (u32, u32)) -> Self {
        Self {
            spec,
            input_size,
            trained_miou: None,
            net: None,
        }
    }

    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        let mut net = SegNet::new(self.spec.backbone, Some(self.spec.decoder), INPUT_CHANNELS, 0)?;
        if !path.is_file() {
            return Err(Error::NotFound(format!("weights file {}", path.display())));
        }
        net.load(path)?;
        self.net = Some(net);
        Ok(())
    }

    /// Overwrites the encoder with weights stored under `encoder.` in a
    /// safetensors file.
    pub fn load_encoder(&self, path: &Path) -> Result<usize> {
        let net = self.net.as_ref().ok_or_else(|| Error::State("model has no weights".into()))?;
        Ok(net.load_prefix(path, "encoder.")?)
    }

    /// Loads `model.json` and `model.bin` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_slice(&codec::read_file(&dir.join(META_FILE))?)?;
        if meta.input_channels != INPUT_CHANNELS {
            return Err(Error::Validation {
                item: dir.join(META_FILE).display().to_string(),
                reason: format!("input_channels must be {INPUT_CHANNELS}, found {}", meta.input_channels),
            });
        }
        let mut model = Self::unloaded(
            ModelSpec::new(meta.backbone, meta.decoder),
            (meta.input_width, meta.input_height),
        );
        model.trained_miou = meta.trained_miou;
        model.load_weights(&dir.join(WEIGHTS_FILE))?;
        Ok(model)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ModelMeta {
            backbone: self.spec.backbone,
            decoder: self.spec.decoder,
            input_channels: INPUT_CHANNELS,
            input_width: self.input_size.0,
            input_height: self.input_size.1,
            trained_miou: self.trained_miou,
        };
        codec::write_atomic(&dir.join(META_FILE), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        let tmp = dir.join(format!("{WEIGHTS_FILE}.tmp"));
        self.net()?.save(&tmp)?;
        std::fs::rename(&tmp, dir.join(WEIGHTS_FILE)).map_err(|e| Error::io(dir.join(WEIGHTS_FILE), e))
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn backbone_id(&self) -> &'static str {
        self.spec.backbone.as_str()
    }

    pub fn decoder_id(&self) -> &'static str {
        self.spec.decoder.as_str()
    }

    pub fn input_channels(&self) -> usize {
        INPUT_CHANNELS
    }

    pub fn input_size(&self) -> (u32, u32) {
        self.input_size
    }

    pub fn trained_miou(&self) -> Option<f64> {
        self.trained_miou
    }

    pub fn set_trained_miou(&mut self, miou: f64) {
        self.trained_miou = Some(miou);
    }

    pub fn is_loaded(&self) -> bool {
        self.net.is_some()
    }

    pub fn describe(&self) -> String {
        format!("{}@{}x{}", self.spec, self.input_size.0, self.input_size.1)
    }

    pub(crate) fn net(&self) -> Result<&SegNet> {
        self.net
            .as_ref()
            .ok_or_else(|| Error::State(format!("highlighter {} has no weights loaded", self.spec)))
    }

    /// Zeroes the final 1x1 conv so every logit is 0.
    pub fn zero_output_layer(&self) -> Result<()> {
        let net = self.net()?;
        net.zero_var("decoder.head.weight")?;
        net.zero_var("decoder.head.bias")?;
        Ok(())
    }

    /// Logits for an (N, 4, H, W) batch at network resolution.
    pub(crate) fn logits(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let net = self.net()?;
        let (_, _, h, w) = x.dims4()?;
        let feats = net.features(x, train)?;
        Ok(net.decode(&feats, (h, w), train)?)
    }

    /// Network-resolution input tensor for one frame.
    pub(crate) fn input_tensor(&self, frame: &ImageFrame, hand: &BinaryMask) -> Result<Tensor> {
        frame.check_same_dims(hand.width(), hand.height())?;
        let (w, h) = self.input_size;
        let input = prepare_input(&resize_frame_bilinear(frame, w, h), &resize_mask_nearest(hand, w, h))?;
        Ok(input.to_tensor()?)
    }

    /// Per-pixel object probability at the frame's resolution.
    pub fn predict_highlight(&self, frame: &ImageFrame, hand: &BinaryMask) -> Result<SoftMask> {
        self.net()?;
        let x = self.input_tensor(frame, hand)?;
        let probs = self.probabilities(&x)?;
        Ok(probs
            .into_iter()
            .next()
            .map(|m| resize_soft_bilinear(&m, frame.width(), frame.height()))
            .expect("one frame in, one mask out"))
    }

    /// Sigmoid outputs at network resolution for an (N, 4, H, W) batch.
    pub(crate) fn probabilities(&self, x: &Tensor) -> Result<Vec<SoftMask>> {
        let (n, _, h, w) = x.dims4()?;
        let probs = candle_nn::ops::sigmoid(&self.logits(x, false)?)?.to_dtype(DType::F32)?;
        let flat = probs.flatten_all()?.to_vec1::<f32>()?;
        let per = h * w;
        (0..n)
            .map(|i| {
                let values = flat[i * per..(i + 1) * per].iter().map(|v| v.clamp(0.0, 1.0)).collect();
                SoftMask::new(w as u32, h as u32, values)
            })
            .collect()
    }
}
