//! Pixel-grid data model shared by every other module: frames, hard and soft
//! masks, polygon annotations, and the pixel operations between them.

pub mod codec;
mod frame;
mod mask;
mod ops;
mod polygon;

pub use frame::{ImageFrame, CAPTURE_HEIGHT, CAPTURE_WIDTH};
pub use mask::{binarize, BinaryMask, SoftMask, DEFAULT_THRESHOLD};
pub use ops::{
    overlay_highlight, resize_frame_bilinear, resize_mask_nearest, resize_plane_bilinear, resize_plane_nearest,
    resize_soft_bilinear,
};
pub use polygon::{rasterize_polygons, PolygonAnnotation};
