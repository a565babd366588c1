use candle_core::{DType, Tensor};

use crate::error::{Error, Result};
use crate::imaging::SoftMask;

/// Class activation map from final-stage features `(C, h, w)` and one row of
/// classifier weights `(C,)`: the weighted channel sum, min-max normalized
/// (a constant map becomes all zeros), then bilinearly resized to
/// `out_width` x `out_height`.
pub fn cam_from_features(features: &Tensor, weights: &Tensor, out_width: u32, out_height: u32) -> Result<SoftMask> {
    let (c, h, w) = features.dims3()?;
    if weights.dims() != [c] {
        return Err(Error::shape(format!("({c},) class weights"), format!("{:?}", weights.dims())));
    }
    let f = features.to_dtype(DType::F64)?.reshape((c, h * w))?;
    let wt = weights.to_dtype(DType::F64)?.reshape((1, c))?;
    let raw = wt.matmul(&f)?.reshape((1, 1, h, w))?;
    let lo = raw.min_all()?.to_scalar::<f64>()?;
    let hi = raw.max_all()?.to_scalar::<f64>()?;
    let normalized = if hi > lo {
        ((raw - lo)? / (hi - lo))?
    } else {
        raw.zeros_like()?
    };
    let up = normalized.upsample_bilinear2d(out_height as usize, out_width as usize, false)?;
    let values = up
        .flatten_all()?
        .to_vec1::<f64>()?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0) as f32)
        .collect();
    SoftMask::new(out_width, out_height, values)
}

/// `lambda * model_out + (1 - lambda) * cam`, pixelwise.
pub fn blend_saliency(model_out: &SoftMask, cam: &SoftMask, lambda: f64) -> Result<SoftMask> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Argument(format!("blend weight {lambda} outside [0, 1]")));
    }
    if model_out.dims() != cam.dims() {
        return Err(Error::shape(format!("{:?}", model_out.dims()), format!("{:?}", cam.dims())));
    }
    let values = model_out
        .values()
        .iter()
        .zip(cam.values())
        .map(|(o, c)| (lambda * *o as f64 + (1.0 - lambda) * *c as f64) as f32)
        .collect();
    let (w, h) = model_out.dims();
    SoftMask::new(w, h, values)
}
