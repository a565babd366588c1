use candle_core::{Module, ModuleT, Tensor};
use candle_nn::{batch_norm, conv2d_no_bias, BatchNorm, Conv2d, Conv2dConfig, VarBuilder};

use super::Encoder;

const CHANNELS: [usize; 4] = [64, 128, 256, 512];
const STRIDES: [usize; 4] = [4, 8, 16, 32];

fn conv(in_c: usize, out_c: usize, k: usize, stride: usize, vb: VarBuilder) -> candle_core::Result<Conv2d> {
    conv2d_no_bias(
        in_c,
        out_c,
        k,
        Conv2dConfig {
            padding: k / 2,
            stride,
            ..Default::default()
        },
        vb,
    )
}

struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    downsample: Option<(Conv2d, BatchNorm)>,
}

impl BasicBlock {
    fn new(in_c: usize, out_c: usize, stride: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let downsample = if stride != 1 || in_c != out_c {
            Some((
                conv(in_c, out_c, 1, stride, vb.pp("downsample.0"))?,
                batch_norm(out_c, 1e-5, vb.pp("downsample.1"))?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: conv(in_c, out_c, 3, stride, vb.pp("conv1"))?,
            bn1: batch_norm(out_c, 1e-5, vb.pp("bn1"))?,
            conv2: conv(out_c, out_c, 3, 1, vb.pp("conv2"))?,
            bn2: batch_norm(out_c, 1e-5, vb.pp("bn2"))?,
            downsample,
        })
    }

    fn forward_t(&self, x: &Tensor, train: bool) -> candle_core::Result<Tensor> {
        let h = self.bn1.forward_t(&self.conv1.forward(x)?, train)?.relu()?;
        let h = self.bn2.forward_t(&self.conv2.forward(&h)?, train)?;
        let skip = match &self.downsample {
            Some((c, b)) => b.forward_t(&c.forward(x)?, train)?,
            None => x.clone(),
        };
        (h + skip)?.relu()
    }
}

/// ResNet-18 trunk (7x7 stem, four stages of two basic blocks).
pub struct ResNet18 {
    stem: Conv2d,
    bn_stem: BatchNorm,
    layers: Vec<[BasicBlock; 2]>,
}

impl ResNet18 {
    pub fn new(in_channels: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let stem = conv(in_channels, 64, 7, 2, vb.pp("conv1"))?;
        let bn_stem = batch_norm(64, 1e-5, vb.pp("bn1"))?;
        let mut layers = Vec::with_capacity(4);
        let mut prev = 64;
        for (i, &c) in CHANNELS.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            let vb = vb.pp(format!("layer{}", i + 1));
            layers.push([
                BasicBlock::new(prev, c, stride, vb.pp("0"))?,
                BasicBlock::new(c, c, 1, vb.pp("1"))?,
            ]);
            prev = c;
        }
        Ok(Self { stem, bn_stem, layers })
    }
}

impl Encoder for ResNet18 {
    fn forward_t(&self, x: &Tensor, train: bool) -> candle_core::Result<Vec<Tensor>> {
        let h = self.bn_stem.forward_t(&self.stem.forward(x)?, train)?.relu()?;
        let mut h = h.pad_with_same(2, 1, 1)?.pad_with_same(3, 1, 1)?.max_pool2d_with_stride(3, 2)?;
        let mut out = Vec::with_capacity(4);
        for [a, b] in &self.layers {
            h = b.forward_t(&a.forward_t(&h, train)?, train)?;
            out.push(h.clone());
        }
        Ok(out)
    }

    fn channels(&self) -> &[usize] {
        &CHANNELS
    }

    fn strides(&self) -> &[usize] {
        &STRIDES
    }

    fn decoder_base(&self) -> usize {
        32
    }
}
