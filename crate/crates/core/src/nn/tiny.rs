use candle_core::{Module, Tensor};
use candle_nn::{conv2d, Conv2d, Conv2dConfig, VarBuilder};

use super::Encoder;

const CHANNELS: [usize; 4] = [8, 16, 32, 32];
const STRIDES: [usize; 4] = [1, 2, 4, 8];

/// A small four-stage encoder (two 3x3 conv + ReLU per stage, max-pool
/// between stages). Cheap enough to train on a CPU in seconds.
pub struct TinyCnn {
    stages: Vec<[Conv2d; 2]>,
}

impl TinyCnn {
    pub fn new(in_channels: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let cfg = Conv2dConfig {
            padding: 1,
            ..Default::default()
        };
        let mut stages = Vec::with_capacity(CHANNELS.len());
        let mut prev = in_channels;
        for (i, &c) in CHANNELS.iter().enumerate() {
            let vb = vb.pp(format!("stage{i}"));
            stages.push([conv2d(prev, c, 3, cfg, vb.pp("conv0"))?, conv2d(c, c, 3, cfg, vb.pp("conv1"))?]);
            prev = c;
        }
        Ok(Self { stages })
    }
}

impl Encoder for TinyCnn {
    fn forward_t(&self, x: &Tensor, _train: bool) -> candle_core::Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut h = x.clone();
        for (i, [a, b]) in self.stages.iter().enumerate() {
            if i > 0 {
                h = h.max_pool2d(2)?;
            }
            h = b.forward(&a.forward(&h)?.relu()?)?.relu()?;
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
        8
    }
}
