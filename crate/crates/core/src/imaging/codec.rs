//! PNG/JPEG encoding for frames and masks.
//!
//! Binary masks are single-channel PNGs with values {0, 255}; soft masks are
//! single-channel 8-bit PNGs holding `round(value * 255)`.

use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{GrayImage, ImageFormat, RgbImage};

use super::frame::ImageFrame;
use super::mask::{quantize_byte, BinaryMask, SoftMask};
use crate::error::{Error, Result};

/// Quality used for frames sent over the wire.
pub const WIRE_JPEG_QUALITY: u8 = 80;

pub fn encode_frame_png(frame: &ImageFrame) -> Result<Vec<u8>> {
    let img = RgbImage::from_raw(frame.width(), frame.height(), frame.pixels().to_vec())
        .expect("frame buffer length is validated on construction");
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_frame_jpeg(frame: &ImageFrame, quality: u8) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut enc = JpegEncoder::new_with_quality(&mut buf, quality);
    enc.encode(frame.pixels(), frame.width(), frame.height(), image::ExtendedColorType::Rgb8)?;
    Ok(buf)
}

/// Decodes any supported image format into an RGB frame.
pub fn decode_frame(bytes: &[u8], source_id: impl Into<String>) -> Result<ImageFrame> {
    let img = image::load_from_memory(bytes)?.to_rgb8();
    let (w, h) = img.dimensions();
    ImageFrame::new(w, h, img.into_raw(), source_id)
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let raw = mask.values().iter().map(|v| v * 255).collect();
    encode_gray(mask.width(), mask.height(), raw)
}

/// Decodes a single-channel mask; pixels >= 128 are set.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask> {
    let img = image::load_from_memory(bytes)?.to_luma8();
    let (w, h) = img.dimensions();
    BinaryMask::new(w, h, img.into_raw().into_iter().map(|v| (v >= 128) as u8).collect())
}

pub fn encode_soft_png(mask: &SoftMask) -> Result<Vec<u8>> {
    let raw = mask.values().iter().map(|v| quantize_byte(*v)).collect();
    encode_gray(mask.width(), mask.height(), raw)
}

pub fn decode_soft_png(bytes: &[u8]) -> Result<SoftMask> {
    let img = image::load_from_memory(bytes)?.to_luma8();
    let (w, h) = img.dimensions();
    SoftMask::new(w, h, img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
}

fn encode_gray(width: u32, height: u32, raw: Vec<u8>) -> Result<Vec<u8>> {
    let img = GrayImage::from_raw(width, height, raw).expect("mask buffer length is validated on construction");
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_frame(path: &Path, source_id: impl Into<String>) -> Result<ImageFrame> {
    decode_frame(&read_file(path)?, source_id)
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    decode_mask_png(&read_file(path)?)
}
