//! EfficientNet encoder (compound-scaled MBConv stages with squeeze-excitation).

use candle_core::{Module, ModuleT, Tensor};
use candle_nn::{batch_norm, conv2d, conv2d_no_bias, BatchNorm, BatchNormConfig, Conv2d, Conv2dConfig, VarBuilder};

use super::{conv_forward, Encoder};

/// (expand ratio, kernel, stride, in channels, out channels, repeats) at width/depth 1.0.
const BASE_STAGES: [(usize, usize, usize, usize, usize, usize); 7] = [
    (1, 3, 1, 32, 16, 1),
    (6, 3, 2, 16, 24, 2),
    (6, 5, 2, 24, 40, 2),
    (6, 3, 2, 40, 80, 3),
    (6, 5, 1, 80, 112, 3),
    (6, 5, 2, 112, 192, 4),
    (6, 3, 1, 192, 320, 1),
];

/// Stage indices whose outputs form the pyramid (strides 4, 8, 16, 32); the
/// stem output supplies stride 2.
const PYRAMID_STAGES: [usize; 4] = [1, 2, 4, 6];
const STRIDES: [usize; 5] = [2, 4, 8, 16, 32];

fn round_filters(c: usize, width: f64) -> usize {
    let divisor = 8.0;
    let scaled = c as f64 * width;
    let mut rounded = ((scaled + divisor / 2.0) / divisor).floor() * divisor;
    rounded = rounded.max(divisor);
    if rounded < 0.9 * scaled {
        rounded += divisor;
    }
    rounded as usize
}

fn round_repeats(r: usize, depth: f64) -> usize {
    (r as f64 * depth).ceil() as usize
}

fn bn(c: usize, vb: VarBuilder) -> candle_core::Result<BatchNorm> {
    batch_norm(
        c,
        BatchNormConfig {
            eps: 1e-3,
            remove_mean: true,
            affine: true,
            momentum: 0.01,
        },
        vb,
    )
}

struct SqueezeExcite {
    reduce: Conv2d,
    expand: Conv2d,
}

impl SqueezeExcite {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let s = x.mean_keepdim(3)?.mean_keepdim(2)?;
        let s = self.expand.forward(&self.reduce.forward(&s)?.silu()?)?;
        x.broadcast_mul(&candle_nn::ops::sigmoid(&s)?)
    }
}

struct MbConv {
    expand: Option<(Conv2d, BatchNorm)>,
    depthwise: Conv2d,
    bn_dw: BatchNorm,
    se: SqueezeExcite,
    project: Conv2d,
    bn_proj: BatchNorm,
    residual: bool,
}

impl MbConv {
    fn new(
        expand_ratio: usize,
        kernel: usize,
        stride: usize,
        in_c: usize,
        out_c: usize,
        vb: VarBuilder,
    ) -> candle_core::Result<Self> {
        let mid = in_c * expand_ratio;
        let expand = if expand_ratio != 1 {
            Some((
                conv2d_no_bias(in_c, mid, 1, Default::default(), vb.pp("expand_conv"))?,
                bn(mid, vb.pp("bn0"))?,
            ))
        } else {
            None
        };
        let dw_cfg = Conv2dConfig {
            padding: kernel / 2,
            stride,
            groups: mid,
            ..Default::default()
        };
        let squeezed = (in_c / 4).max(1);
        Ok(Self {
            expand,
            depthwise: conv2d_no_bias(mid, mid, kernel, dw_cfg, vb.pp("depthwise_conv"))?,
            bn_dw: bn(mid, vb.pp("bn1"))?,
            se: SqueezeExcite {
                reduce: conv2d(mid, squeezed, 1, Default::default(), vb.pp("se_reduce"))?,
                expand: conv2d(squeezed, mid, 1, Default::default(), vb.pp("se_expand"))?,
            },
            project: conv2d_no_bias(mid, out_c, 1, Default::default(), vb.pp("project_conv"))?,
            bn_proj: bn(out_c, vb.pp("bn2"))?,
            residual: stride == 1 && in_c == out_c,
        })
    }

    fn forward_t(&self, x: &Tensor, train: bool) -> candle_core::Result<Tensor> {
        let mut h = x.clone();
        if let Some((conv, norm)) = &self.expand {
            h = norm.forward_t(&conv.forward(&h)?, train)?.silu()?;
        }
        h = self.bn_dw.forward_t(&conv_forward(&self.depthwise, &h)?, train)?.silu()?;
        h = self.se.forward(&h)?;
        h = self.bn_proj.forward_t(&self.project.forward(&h)?, train)?;
        if self.residual {
            h = (h + x)?;
        }
        Ok(h)
    }
}

pub struct EfficientNet {
    stem: Conv2d,
    bn_stem: BatchNorm,
    stages: Vec<Vec<MbConv>>,
    channels: Vec<usize>,
}

impl EfficientNet {
    pub fn b0(in_channels: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        Self::new(in_channels, 1.0, 1.0, vb)
    }

    pub fn b3(in_channels: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        Self::new(in_channels, 1.2, 1.4, vb)
    }

    fn new(in_channels: usize, width: f64, depth: f64, vb: VarBuilder) -> candle_core::Result<Self> {
        let stem_c = round_filters(32, width);
        let stem = conv2d_no_bias(
            in_channels,
            stem_c,
            3,
            Conv2dConfig {
                padding: 1,
                stride: 2,
                ..Default::default()
            },
            vb.pp("stem_conv"),
        )?;
        let bn_stem = bn(stem_c, vb.pp("bn_stem"))?;
        let mut stages = Vec::with_capacity(BASE_STAGES.len());
        let mut stage_out = Vec::with_capacity(BASE_STAGES.len());
        for (si, &(t, k, s, cin, cout, r)) in BASE_STAGES.iter().enumerate() {
            let cin = round_filters(cin, width);
            let cout = round_filters(cout, width);
            let mut blocks = Vec::new();
            for bi in 0..round_repeats(r, depth) {
                let (block_in, stride) = if bi == 0 { (cin, s) } else { (cout, 1) };
                blocks.push(MbConv::new(t, k, stride, block_in, cout, vb.pp(format!("blocks.{si}.{bi}")))?);
            }
            stages.push(blocks);
            stage_out.push(cout);
        }
        let mut channels = vec![round_filters(16, width)];
        channels.extend(PYRAMID_STAGES.iter().map(|&i| stage_out[i]));
        Ok(Self {
            stem,
            bn_stem,
            stages,
            channels,
        })
    }
}

impl Encoder for EfficientNet {
    fn forward_t(&self, x: &Tensor, train: bool) -> candle_core::Result<Vec<Tensor>> {
        let mut h = self.bn_stem.forward_t(&conv_forward(&self.stem, x)?, train)?.silu()?;
        let mut out = Vec::with_capacity(STRIDES.len());
        for (si, blocks) in self.stages.iter().enumerate() {
            for b in blocks {
                h = b.forward_t(&h, train)?;
            }
            if si == 0 || PYRAMID_STAGES.contains(&si) {
                out.push(h.clone());
            }
        }
        Ok(out)
    }

    fn channels(&self) -> &[usize] {
        &self.channels
    }

    fn strides(&self) -> &[usize] {
        &STRIDES
    }

    fn decoder_base(&self) -> usize {
        16
    }
}
