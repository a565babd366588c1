use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::{VarBuilder, VarMap};

use super::{build_decoder, normalize_rgb, reinitialize, BackboneId, Decoder, DecoderId, Encoder};

/// An encoder with an optional segmentation decoder, owning its variables.
pub struct SegNet {
    varmap: VarMap,
    backbone: BackboneId,
    encoder: Box<dyn Encoder>,
    decoder: Option<Box<dyn Decoder>>,
    in_channels: usize,
}

impl SegNet {
    /// Builds the network and initializes every variable from `seed`.
    pub fn new(
        backbone: BackboneId,
        decoder: Option<DecoderId>,
        in_channels: usize,
        seed: u64,
    ) -> candle_core::Result<Self> {
        Ok(Self::with_head(backbone, decoder, in_channels, seed, |_, _| Ok(()))?.0)
    }

    /// Like [`SegNet::new`], additionally registering a task head on the same
    /// variable map before the seeded initialization runs.
    pub fn with_head<H>(
        backbone: BackboneId,
        decoder: Option<DecoderId>,
        in_channels: usize,
        seed: u64,
        head: impl FnOnce(VarBuilder, &dyn Encoder) -> candle_core::Result<H>,
    ) -> candle_core::Result<(Self, H)> {
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &Device::Cpu);
        let encoder = backbone.build(in_channels, vb.pp("encoder"))?;
        let decoder = match decoder {
            Some(d) => Some(build_decoder(d, encoder.as_ref(), vb.pp("decoder"))?),
            None => None,
        };
        let head = head(vb.pp("head"), encoder.as_ref())?;
        reinitialize(&varmap, seed)?;
        Ok((
            Self {
                varmap,
                backbone,
                encoder,
                decoder,
                in_channels,
            },
            head,
        ))
    }

    pub fn varmap(&self) -> &VarMap {
        &self.varmap
    }

    pub fn encoder(&self) -> &dyn Encoder {
        self.encoder.as_ref()
    }

    pub fn has_decoder(&self) -> bool {
        self.decoder.is_some()
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Encoder pyramid for an (N, C, H, W) input in [0, 1].
    pub fn features(&self, x: &Tensor, train: bool) -> candle_core::Result<Vec<Tensor>> {
        let x = match self.backbone.rgb_normalization() {
            Some((mean, std)) => normalize_rgb(x, mean, std)?,
            None => x.clone(),
        };
        self.encoder.forward_t(&x, train)
    }

    /// Segmentation logits at the input resolution, (N, 1, H, W).
    pub fn decode(&self, features: &[Tensor], out_hw: (usize, usize), train: bool) -> candle_core::Result<Tensor> {
        match &self.decoder {
            Some(d) => d.forward_t(features, out_hw, train),
            None => candle_core::bail!("network has no segmentation decoder"),
        }
    }

    pub fn save(&self, path: &Path) -> candle_core::Result<()> {
        self.varmap.save(path)
    }

    pub fn load(&mut self, path: &Path) -> candle_core::Result<()> {
        self.varmap.load(path)
    }

    /// Copies every variable whose name starts with `prefix` from a
    /// safetensors file, leaving the rest untouched. Returns how many were set.
    pub fn load_prefix(&self, path: &Path, prefix: &str) -> candle_core::Result<usize> {
        let tensors = candle_core::safetensors::load(path, &Device::Cpu)?;
        let data = self.varmap.data().lock().expect("varmap lock poisoned");
        let mut n = 0;
        for (name, var) in data.iter().filter(|(k, _)| k.starts_with(prefix)) {
            if let Some(t) = tensors.get(name) {
                var.set(t)?;
                n += 1;
            }
        }
        if n == 0 {
            candle_core::bail!("{} holds no variables under {prefix:?}", path.display());
        }
        Ok(n)
    }

    /// Sets one named variable to zeros.
    pub fn zero_var(&self, name: &str) -> candle_core::Result<()> {
        let data = self.varmap.data().lock().expect("varmap lock poisoned");
        let var = data
            .get(name)
            .ok_or_else(|| candle_core::Error::Msg(format!("no variable named {name}")))?;
        var.set(&var.zeros_like()?)
    }
}
