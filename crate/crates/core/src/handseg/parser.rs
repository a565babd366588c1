use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Module, Tensor};
use candle_nn::{conv2d, Conv2d, VarBuilder, VarMap};

use super::labels::{lip_label_names, BodyPartLabelMap, LIP_LABELS};
use super::HumanParser;
use crate::error::{Error, Result};
use crate::imaging::{codec, resize_frame_bilinear, resize_plane_nearest, ImageFrame};
use crate::nn::{normalize_rgb, Encoder, ResNet18, IMAGENET_MEAN, IMAGENET_STD};

/// Native (width, height) the parser runs at unless configured otherwise.
pub const PARSER_DEFAULT_INPUT: (u32, u32) = (256, 256);

/// ResNet-18 trunk with a two-scale classifier: stride-32 features are
/// upsampled onto the stride-8 features before a 1x1 conv over the 20 labels.
struct ParserNet {
    trunk: ResNet18,
    head: Conv2d,
}

impl ParserNet {
    fn new(vb: VarBuilder) -> candle_core::Result<Self> {
        let trunk = ResNet18::new(3, vb.pp("backbone"))?;
        let c = trunk.channels();
        let head = conv2d(c[1] + c[3], LIP_LABELS.len(), 1, Default::default(), vb.pp("classifier"))?;
        Ok(Self { trunk, head })
    }

    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let feats = self.trunk.forward_t(x, false)?;
        let (_, _, h, w) = feats[1].dims4()?;
        let deep = feats[3].upsample_bilinear2d(h, w, false)?;
        let logits = self.head.forward(&Tensor::cat(&[&feats[1], &deep], 1)?)?;
        let (_, _, ih, iw) = x.dims4()?;
        logits.upsample_bilinear2d(ih, iw, false)
    }
}

/// Human parser backed by a weights file in safetensors format.
///
/// Input is resized to the native resolution, and the label map is resized
/// back to the frame with nearest-neighbour so labels stay discrete.
pub struct PretrainedParser {
    net: ParserNet,
    names: BTreeMap<u8, String>,
    input_size: (u32, u32),
}

impl PretrainedParser {
    pub fn load(path: &Path, input_size: (u32, u32)) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Initialization(format!("parser weights {} not found", path.display())));
        }
        let bytes = codec::read_file(path)?;
        let vb = VarBuilder::from_buffered_safetensors(bytes, DType::F32, &Device::Cpu)
            .map_err(|e| Error::Initialization(format!("{}: {e}", path.display())))?;
        let net = ParserNet::new(vb).map_err(|e| Error::Initialization(format!("{}: {e}", path.display())))?;
        Ok(Self {
            net,
            names: lip_label_names(),
            input_size,
        })
    }
}

/// Writes seeded, untrained parser weights to `path`; useful for exercising
/// the parser backend without a trained checkpoint.
pub fn write_initialized_parser_weights(path: &Path, seed: u64) -> Result<()> {
    let vm = VarMap::new();
    let vb = VarBuilder::from_varmap(&vm, DType::F32, &Device::Cpu);
    ParserNet::new(vb)?;
    crate::nn::reinitialize(&vm, seed)?;
    vm.save(path)?;
    Ok(())
}

impl HumanParser for PretrainedParser {
    fn label_names(&self) -> &BTreeMap<u8, String> {
        &self.names
    }

    fn parse(&self, frame: &ImageFrame) -> Result<BodyPartLabelMap> {
        let (nw, nh) = self.input_size;
        let inference = |e: candle_core::Error| Error::Inference {
            source_id: frame.source_id().to_string(),
            reason: e.to_string(),
        };
        let resized = resize_frame_bilinear(frame, nw, nh);
        let x = crate::nn::frame_tensor(&resized).map_err(inference)?;
        let x = normalize_rgb(&x, IMAGENET_MEAN, IMAGENET_STD).map_err(inference)?;
        let labels = self
            .net
            .forward(&x)
            .and_then(|l| l.argmax(1))
            .and_then(|l| l.flatten_all())
            .and_then(|l| l.to_vec1::<u32>())
            .map_err(inference)?;
        let labels: Vec<u8> = labels.into_iter().map(|l| l as u8).collect();
        let labels = resize_plane_nearest(&labels, nw, nh, frame.width(), frame.height());
        BodyPartLabelMap::new(frame.width(), frame.height(), labels, self.names.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handseg::{HandSegmentor, HandSegmentorConfig};

    #[test]
    fn loads_weights_and_preserves_frame_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("parser.safetensors");
        write_initialized_parser_weights(&path, 3).unwrap();
        let mut cfg = HandSegmentorConfig::pretrained(&path);
        cfg.input_size = Some((64, 64));
        let seg = HandSegmentor::new(cfg).unwrap();
        let f = ImageFrame::filled(40, 30, [128, 90, 60], "f").unwrap();
        let map = seg.parse_human(&f).unwrap();
        assert_eq!(map.dims(), (40, 30));
        assert!(map.labels().iter().all(|l| (*l as usize) < LIP_LABELS.len()));
        assert_eq!(seg.hand_mask(&f).unwrap().dims(), (40, 30));
    }

    #[test]
    fn corrupt_weights_fail_initialization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("parser.safetensors");
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(
            PretrainedParser::load(&path, (64, 64)),
            Err(Error::Initialization(_))
        ));
    }
}
