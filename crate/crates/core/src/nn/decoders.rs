use candle_core::{Module, Tensor};
use candle_nn::{conv2d, Conv2d, Conv2dConfig, VarBuilder};

use super::{Decoder, DecoderId, Encoder};

fn conv3(in_c: usize, out_c: usize, vb: VarBuilder) -> candle_core::Result<Conv2d> {
    conv2d(
        in_c,
        out_c,
        3,
        Conv2dConfig {
            padding: 1,
            ..Default::default()
        },
        vb,
    )
}

fn conv1(in_c: usize, out_c: usize, vb: VarBuilder) -> candle_core::Result<Conv2d> {
    conv2d(in_c, out_c, 1, Default::default(), vb)
}

fn hw(t: &Tensor) -> candle_core::Result<(usize, usize)> {
    let (_, _, h, w) = t.dims4()?;
    Ok((h, w))
}

fn nearest_indices(n_in: usize, n_out: usize, t: &Tensor) -> candle_core::Result<Tensor> {
    let idx: Vec<u32> = (0..n_out).map(|o| ((o * n_in) / n_out).min(n_in - 1) as u32).collect();
    Tensor::from_vec(idx, n_out, t.device())
}

/// Nearest-neighbour resize through `index_select`, which has a backward pass
/// for any scale factor.
fn resize_nearest_to(t: &Tensor, (h, w): (usize, usize)) -> candle_core::Result<Tensor> {
    let (h_in, w_in) = hw(t)?;
    if (h_in, w_in) == (h, w) {
        return Ok(t.clone());
    }
    t.index_select(&nearest_indices(h_in, h, t)?, 2)?
        .index_select(&nearest_indices(w_in, w, t)?, 3)
}

/// Row-stochastic (n_out, n_in) matrix of half-pixel linear interpolation
/// weights with edge clamping.
fn interpolation_matrix(n_in: usize, n_out: usize, t: &Tensor) -> candle_core::Result<Tensor> {
    let mut m = vec![0f32; n_out * n_in];
    let scale = n_in as f64 / n_out as f64;
    for o in 0..n_out {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let f = (src - i0 as f64) as f32;
        m[o * n_in + i0] += 1.0 - f;
        m[o * n_in + i1] += f;
    }
    Tensor::from_vec(m, (n_out, n_in), t.device())?.to_dtype(t.dtype())
}

/// Bilinear resize as two matrix products, so it has a backward pass
/// (candle's `upsample_bilinear2d` does not).
fn resize_bilinear_to(t: &Tensor, (h, w): (usize, usize)) -> candle_core::Result<Tensor> {
    let (h_in, w_in) = hw(t)?;
    if (h_in, w_in) == (h, w) {
        return Ok(t.clone());
    }
    let rows = interpolation_matrix(h_in, h, t)?;
    let cols = interpolation_matrix(w_in, w, t)?.t()?;
    rows.broadcast_matmul(&t.broadcast_matmul(&cols)?)
}

/// Two 3x3 conv + ReLU layers.
struct ConvBlock {
    a: Conv2d,
    b: Conv2d,
}

impl ConvBlock {
    fn new(in_c: usize, out_c: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        Ok(Self {
            a: conv3(in_c, out_c, vb.pp("conv0"))?,
            b: conv3(out_c, out_c, vb.pp("conv1"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        self.b.forward(&self.a.forward(x)?.relu()?)?.relu()
    }
}

fn decoder_width(base: usize, level: usize) -> usize {
    (base << level).min(256)
}

/// Builds the decoder named by `id` for the given encoder's pyramid.
pub fn build_decoder(id: DecoderId, encoder: &dyn Encoder, vb: VarBuilder) -> candle_core::Result<Box<dyn Decoder>> {
    Ok(match id {
        DecoderId::Unet => Box::new(UnetDecoder::new(encoder, vb)?),
        DecoderId::UnetPlusPlus => Box::new(UnetPlusPlusDecoder::new(encoder, vb)?),
        DecoderId::DeepLabV3 => Box::new(DeepLabDecoder::new(encoder, false, vb)?),
        DecoderId::DeepLabV3Plus => Box::new(DeepLabDecoder::new(encoder, true, vb)?),
    })
}

/// Final refinement applied when the shallowest pyramid level is coarser
/// than the input.
struct OutputStage {
    refine: Option<ConvBlock>,
    head: Conv2d,
}

impl OutputStage {
    fn new(in_c: usize, base: usize, needs_refine: bool, vb: VarBuilder) -> candle_core::Result<Self> {
        let (refine, head_in) = if needs_refine {
            (Some(ConvBlock::new(in_c, base, vb.pp("final"))?), base)
        } else {
            (None, in_c)
        };
        Ok(Self {
            refine,
            head: conv1(head_in, 1, vb.pp("head"))?,
        })
    }

    fn forward(&self, x: &Tensor, out_hw: (usize, usize)) -> candle_core::Result<Tensor> {
        let mut h = x.clone();
        if let Some(r) = &self.refine {
            h = r.forward(&resize_nearest_to(&h, out_hw)?)?;
        }
        resize_bilinear_to(&self.head.forward(&h)?, out_hw)
    }
}

pub struct UnetDecoder {
    blocks: Vec<ConvBlock>,
    output: OutputStage,
}

impl UnetDecoder {
    fn new(encoder: &dyn Encoder, vb: VarBuilder) -> candle_core::Result<Self> {
        let ch = encoder.channels();
        let base = encoder.decoder_base();
        let levels = ch.len();
        // blocks[i] fuses the upsampled deeper output into level i.
        let mut blocks = Vec::with_capacity(levels - 1);
        let mut deeper = ch[levels - 1];
        let mut widths = vec![0; levels - 1];
        for i in (0..levels - 1).rev() {
            widths[i] = decoder_width(base, i);
            blocks.push((i, ConvBlock::new(deeper + ch[i], widths[i], vb.pp(format!("block{i}")))?));
            deeper = widths[i];
        }
        blocks.sort_by_key(|(i, _)| *i);
        let output = OutputStage::new(widths[0], base, encoder.strides()[0] > 1, vb)?;
        Ok(Self {
            blocks: blocks.into_iter().map(|(_, b)| b).collect(),
            output,
        })
    }
}

impl Decoder for UnetDecoder {
    fn forward_t(&self, features: &[Tensor], out_hw: (usize, usize), _train: bool) -> candle_core::Result<Tensor> {
        let mut x = features[features.len() - 1].clone();
        for i in (0..features.len() - 1).rev() {
            let skip = &features[i];
            let up = resize_nearest_to(&x, hw(skip)?)?;
            x = self.blocks[i].forward(&Tensor::cat(&[&up, skip], 1)?)?;
        }
        self.output.forward(&x, out_hw)
    }
}

/// Nested-skip decoder: node (i, j) fuses every earlier node at level i with
/// the upsampled node (i+1, j-1).
pub struct UnetPlusPlusDecoder {
    // nodes[j-1][i] is node (i, j)
    nodes: Vec<Vec<ConvBlock>>,
    output: OutputStage,
}

impl UnetPlusPlusDecoder {
    fn new(encoder: &dyn Encoder, vb: VarBuilder) -> candle_core::Result<Self> {
        let ch = encoder.channels();
        let base = encoder.decoder_base();
        let levels = ch.len();
        let node_c = |i: usize, j: usize| if j == 0 { ch[i] } else { decoder_width(base, i) };
        let mut nodes = Vec::with_capacity(levels - 1);
        for j in 1..levels {
            let mut row = Vec::with_capacity(levels - j);
            for i in 0..levels - j {
                let in_c: usize = (0..j).map(|k| node_c(i, k)).sum::<usize>() + node_c(i + 1, j - 1);
                row.push(ConvBlock::new(in_c, decoder_width(base, i), vb.pp(format!("node{i}_{j}")))?);
            }
            nodes.push(row);
        }
        let output = OutputStage::new(decoder_width(base, 0), base, encoder.strides()[0] > 1, vb)?;
        Ok(Self { nodes, output })
    }
}

impl Decoder for UnetPlusPlusDecoder {
    fn forward_t(&self, features: &[Tensor], out_hw: (usize, usize), _train: bool) -> candle_core::Result<Tensor> {
        let levels = features.len();
        // grid[i][j] holds node (i, j)
        let mut grid: Vec<Vec<Tensor>> = features.iter().map(|f| vec![f.clone()]).collect();
        for j in 1..levels {
            for i in 0..levels - j {
                let target = hw(&features[i])?;
                let up = resize_nearest_to(&grid[i + 1][j - 1], target)?;
                let mut parts: Vec<&Tensor> = grid[i][..j].iter().collect();
                parts.push(&up);
                let node = self.nodes[j - 1][i].forward(&Tensor::cat(&parts, 1)?)?;
                grid[i].push(node);
            }
        }
        self.output.forward(&grid[0][levels - 1], out_hw)
    }
}

/// Atrous spatial pyramid pooling.
struct Aspp {
    branch1x1: Conv2d,
    atrous: Vec<Conv2d>,
    pool: Conv2d,
    project: Conv2d,
}

impl Aspp {
    fn new(in_c: usize, out_c: usize, vb: VarBuilder) -> candle_core::Result<Self> {
        let atrous = [6, 12, 18]
            .iter()
            .map(|&d| {
                conv2d(
                    in_c,
                    out_c,
                    3,
                    Conv2dConfig {
                        padding: d,
                        dilation: d,
                        ..Default::default()
                    },
                    vb.pp(format!("atrous{d}")),
                )
            })
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(Self {
            branch1x1: conv1(in_c, out_c, vb.pp("branch1x1"))?,
            atrous,
            pool: conv1(in_c, out_c, vb.pp("pool"))?,
            project: conv1(out_c * 5, out_c, vb.pp("project"))?,
        })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let size = hw(x)?;
        let mut branches = vec![self.branch1x1.forward(x)?.relu()?];
        for a in &self.atrous {
            branches.push(a.forward(x)?.relu()?);
        }
        let pooled = self.pool.forward(&x.mean_keepdim(3)?.mean_keepdim(2)?)?.relu()?;
        branches.push(resize_nearest_to(&pooled, size)?);
        self.project.forward(&Tensor::cat(&branches, 1)?)?.relu()
    }
}

pub struct DeepLabDecoder {
    aspp: Aspp,
    /// Present for the encoder-decoder (plus) variant.
    low_level: Option<(usize, Conv2d, ConvBlock)>,
    refine: Conv2d,
    head: Conv2d,
}

impl DeepLabDecoder {
    fn new(encoder: &dyn Encoder, plus: bool, vb: VarBuilder) -> candle_core::Result<Self> {
        let ch = encoder.channels();
        let base = encoder.decoder_base();
        let width = (base * 16).min(256);
        let aspp = Aspp::new(ch[ch.len() - 1], width, vb.pp("aspp"))?;
        let low_level = if plus {
            let strides = encoder.strides();
            let level = strides.iter().position(|&s| s >= 4).unwrap_or(0);
            let reduced = (base * 6).min(48);
            Some((
                level,
                conv1(ch[level], reduced, vb.pp("low_reduce"))?,
                ConvBlock::new(width + reduced, width, vb.pp("fuse"))?,
            ))
        } else {
            None
        };
        Ok(Self {
            aspp,
            low_level,
            refine: conv3(width, width, vb.pp("refine"))?,
            head: conv1(width, 1, vb.pp("head"))?,
        })
    }
}

impl Decoder for DeepLabDecoder {
    fn forward_t(&self, features: &[Tensor], out_hw: (usize, usize), _train: bool) -> candle_core::Result<Tensor> {
        let mut x = self.aspp.forward(&features[features.len() - 1])?;
        x = self.refine.forward(&x)?.relu()?;
        if let Some((level, reduce, fuse)) = &self.low_level {
            let low = reduce.forward(&features[*level])?.relu()?;
            let up = resize_bilinear_to(&x, hw(&low)?)?;
            x = fuse.forward(&Tensor::cat(&[&up, &low], 1)?)?;
        }
        resize_bilinear_to(&self.head.forward(&x)?, out_hw)
    }
}
