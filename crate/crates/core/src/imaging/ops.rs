use super::frame::ImageFrame;
use super::mask::{check_pair, BinaryMask, SoftMask};
use crate::error::{Error, Result};

/// Alpha-blends `color` over `frame` with per-pixel opacity
/// `alpha_scale * mask`, rounding half up.
pub fn overlay_highlight(frame: &ImageFrame, mask: &SoftMask, color: [u8; 3], alpha_scale: f32) -> Result<ImageFrame> {
    check_pair(frame.dims(), mask.dims())?;
    if !(0.0..=1.0).contains(&alpha_scale) {
        return Err(Error::Argument(format!("alpha_scale {alpha_scale} outside [0, 1]")));
    }
    let mut out = Vec::with_capacity(frame.pixels().len());
    for (px, m) in frame.pixels().chunks_exact(3).zip(mask.values()) {
        let a = (alpha_scale * m) as f64;
        for c in 0..3 {
            let v = (1.0 - a) * px[c] as f64 + a * color[c] as f64;
            out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    ImageFrame::new(frame.width(), frame.height(), out, frame.source_id())
}

/// Bilinear resampling of a single-channel plane with half-pixel centers
/// (`align_corners = false` convention), clamping at the borders.
pub fn resize_plane_bilinear(values: &[f32], width: u32, height: u32, new_width: u32, new_height: u32) -> Vec<f32> {
    if (width, height) == (new_width, new_height) {
        return values.to_vec();
    }
    let xs = axis_weights(width, new_width);
    let ys = axis_weights(height, new_height);
    let w = width as usize;
    let mut out = Vec::with_capacity(new_width as usize * new_height as usize);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = values[y0 * w + x0] * (1.0 - tx) + values[y0 * w + x1] * tx;
            let bottom = values[y1 * w + x0] * (1.0 - tx) + values[y1 * w + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn axis_weights(input: u32, output: u32) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input as usize - 1);
            let i1 = (i0 + 1).min(input as usize - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

fn nearest_index(d: u32, input: u32, output: u32) -> usize {
    ((d as u64 * input as u64) / output as u64).min(input as u64 - 1) as usize
}

/// Nearest-neighbour resampling of any row-major plane.
pub fn resize_plane_nearest<T: Copy>(values: &[T], width: u32, height: u32, new_width: u32, new_height: u32) -> Vec<T> {
    let mut out = Vec::with_capacity(new_width as usize * new_height as usize);
    for y in 0..new_height {
        let sy = nearest_index(y, height, new_height);
        for x in 0..new_width {
            let sx = nearest_index(x, width, new_width);
            out.push(values[sy * width as usize + sx]);
        }
    }
    out
}

pub fn resize_soft_bilinear(mask: &SoftMask, new_width: u32, new_height: u32) -> SoftMask {
    let values = resize_plane_bilinear(mask.values(), mask.width(), mask.height(), new_width, new_height)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    SoftMask::new(new_width, new_height, values).expect("bilinear resize stays in range")
}

pub fn resize_mask_nearest(mask: &BinaryMask, new_width: u32, new_height: u32) -> BinaryMask {
    let values = resize_plane_nearest(mask.values(), mask.width(), mask.height(), new_width, new_height);
    BinaryMask::new(new_width, new_height, values).expect("nearest resize preserves values")
}

pub fn resize_frame_bilinear(frame: &ImageFrame, new_width: u32, new_height: u32) -> ImageFrame {
    if frame.dims() == (new_width, new_height) {
        return frame.clone();
    }
    let n = frame.width() as usize * frame.height() as usize;
    let mut channels = [vec![0f32; n], vec![0f32; n], vec![0f32; n]];
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        for c in 0..3 {
            channels[c][i] = px[c] as f32;
        }
    }
    let resized: Vec<Vec<f32>> = channels
        .iter()
        .map(|ch| resize_plane_bilinear(ch, frame.width(), frame.height(), new_width, new_height))
        .collect();
    let m = new_width as usize * new_height as usize;
    let mut pixels = Vec::with_capacity(m * 3);
    for i in 0..m {
        for ch in &resized {
            pixels.push(ch[i].round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageFrame::new(new_width, new_height, pixels, frame.source_id()).expect("resize keeps buffer consistent")
}
