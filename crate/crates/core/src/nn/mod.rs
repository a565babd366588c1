//! Network building blocks on top of candle: encoders that produce a feature
//! pyramid, decoders that turn a pyramid into one-channel logits, and the
//! catalog that names them.

mod decoders;
mod efficientnet;
mod init;
pub mod loss;
mod resnet;
mod segnet;
mod tiny;

use std::fmt;
use std::str::FromStr;

use candle_core::Tensor;
use candle_nn::VarBuilder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use decoders::build_decoder;
pub use efficientnet::EfficientNet;
pub use init::{reinitialize, trainable_vars};
pub use resnet::ResNet18;
pub use segnet::SegNet;
pub use tiny::TinyCnn;

/// ImageNet channel statistics used by the ImageNet-style backbones.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

/// A convolutional encoder that returns features from shallow to deep.
pub trait Encoder: Send + Sync {
    fn forward_t(&self, x: &Tensor, train: bool) -> candle_core::Result<Vec<Tensor>>;

    /// Channels of each pyramid level.
    fn channels(&self) -> &[usize];

    /// Downsampling factor of each pyramid level relative to the input.
    fn strides(&self) -> &[usize];

    /// Width unit the decoders scale their channel counts from.
    fn decoder_base(&self) -> usize;
}

/// Maps an encoder pyramid to single-channel logits at `out_hw`.
pub trait Decoder: Send + Sync {
    fn forward_t(&self, features: &[Tensor], out_hw: (usize, usize), train: bool) -> candle_core::Result<Tensor>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum BackboneId {
    #[serde(rename = "tiny-cnn")]
    TinyCnn,
    #[serde(rename = "efficientnet-b0")]
    EfficientNetB0,
    #[serde(rename = "efficientnet-b3")]
    EfficientNetB3,
}

impl BackboneId {
    pub const ALL: [BackboneId; 3] = [BackboneId::TinyCnn, BackboneId::EfficientNetB0, BackboneId::EfficientNetB3];

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneId::TinyCnn => "tiny-cnn",
            BackboneId::EfficientNetB0 => "efficientnet-b0",
            BackboneId::EfficientNetB3 => "efficientnet-b3",
        }
    }

    /// Per-channel RGB normalization the backbone expects, if any.
    pub fn rgb_normalization(self) -> Option<([f32; 3], [f32; 3])> {
        match self {
            BackboneId::TinyCnn => None,
            BackboneId::EfficientNetB0 | BackboneId::EfficientNetB3 => Some((IMAGENET_MEAN, IMAGENET_STD)),
        }
    }

    pub fn build(self, in_channels: usize, vb: VarBuilder) -> candle_core::Result<Box<dyn Encoder>> {
        Ok(match self {
            BackboneId::TinyCnn => Box::new(TinyCnn::new(in_channels, vb)?),
            BackboneId::EfficientNetB0 => Box::new(EfficientNet::b0(in_channels, vb)?),
            BackboneId::EfficientNetB3 => Box::new(EfficientNet::b3(in_channels, vb)?),
        })
    }
}

impl fmt::Display for BackboneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BackboneId::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Catalog {
                id: s.to_string(),
                registered: BackboneId::ALL.iter().map(|b| b.as_str().to_string()).collect(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum DecoderId {
    #[serde(rename = "unet")]
    Unet,
    #[serde(rename = "unetpp")]
    UnetPlusPlus,
    #[serde(rename = "deeplabv3")]
    DeepLabV3,
    #[serde(rename = "deeplabv3plus")]
    DeepLabV3Plus,
}

impl DecoderId {
    pub const ALL: [DecoderId; 4] = [
        DecoderId::Unet,
        DecoderId::UnetPlusPlus,
        DecoderId::DeepLabV3,
        DecoderId::DeepLabV3Plus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecoderId::Unet => "unet",
            DecoderId::UnetPlusPlus => "unetpp",
            DecoderId::DeepLabV3 => "deeplabv3",
            DecoderId::DeepLabV3Plus => "deeplabv3plus",
        }
    }
}

impl fmt::Display for DecoderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DecoderId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecoderId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Catalog {
                id: s.to_string(),
                registered: DecoderId::ALL.iter().map(|d| d.as_str().to_string()).collect(),
            })
    }
}

/// A backbone + decoder pairing from the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: BackboneId,
    pub decoder: DecoderId,
}

impl ModelSpec {
    pub fn new(backbone: BackboneId, decoder: DecoderId) -> Self {
        Self { backbone, decoder }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.backbone, self.decoder)
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// Parses `backbone+decoder`.
    fn from_str(s: &str) -> Result<Self> {
        let (b, d) = s
            .split_once('+')
            .ok_or_else(|| Error::Argument(format!("model spec {s:?} is not of the form backbone+decoder")))?;
        Ok(Self::new(b.parse()?, d.parse()?))
    }
}

/// Applies a convolution, first zero-padding the bottom or right edge of a
/// strided input so both axes leave the same remainder under the stride.
/// candle derives the backward pass's output padding from the height alone,
/// which breaks gradients when the axes differ. The added zeros fall where
/// the conv already reads padding, so the output is unchanged.
pub(crate) fn conv_forward(conv: &candle_nn::Conv2d, x: &Tensor) -> candle_core::Result<Tensor> {
    use candle_core::Module;
    let cfg = conv.config();
    if cfg.stride == 1 {
        return conv.forward(x);
    }
    let (_, _, h, w) = x.dims4()?;
    let reach = cfg.dilation * (conv.weight().dim(2)? - 1) + 1;
    let rem = |n: usize| (n + 2 * cfg.padding).saturating_sub(reach) % cfg.stride;
    let (rh, rw) = (rem(h), rem(w));
    let x = if rh < rw {
        x.pad_with_zeros(2, 0, rw - rh)?
    } else if rw < rh {
        x.pad_with_zeros(3, 0, rh - rw)?
    } else {
        x.clone()
    };
    conv.forward(&x)
}

/// RGB frame as a (1, 3, H, W) tensor scaled to [0, 1].
pub fn frame_tensor(frame: &crate::imaging::ImageFrame) -> candle_core::Result<Tensor> {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let mut data = vec![0f32; 3 * w * h];
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px[c] as f32 / 255.0;
        }
    }
    Tensor::from_vec(data, (1, 3, h, w), &candle_core::Device::Cpu)
}

/// Subtracts mean and divides by std on the first three channels of an NCHW tensor.
pub(crate) fn normalize_rgb(x: &Tensor, mean: [f32; 3], std: [f32; 3]) -> candle_core::Result<Tensor> {
    let c = x.dim(1)?;
    let mut m = vec![0f32; c];
    let mut s = vec![1f32; c];
    m[..3].copy_from_slice(&mean);
    s[..3].copy_from_slice(&std);
    let m = Tensor::from_vec(m, (1, c, 1, 1), x.device())?;
    let s = Tensor::from_vec(s, (1, c, 1, 1), x.device())?;
    x.broadcast_sub(&m)?.broadcast_div(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_parses_and_rejects() {
        assert_eq!("tiny-cnn".parse::<BackboneId>().unwrap(), BackboneId::TinyCnn);
        assert_eq!("unetpp".parse::<DecoderId>().unwrap(), DecoderId::UnetPlusPlus);
        let spec: ModelSpec = "efficientnet-b0+deeplabv3plus".parse().unwrap();
        assert_eq!(spec.to_string(), "efficientnet-b0+deeplabv3plus");
        match "resnet-50".parse::<BackboneId>() {
            Err(Error::Catalog { registered, .. }) => assert_eq!(registered.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!("fcn".parse::<DecoderId>().is_err());
    }
}
