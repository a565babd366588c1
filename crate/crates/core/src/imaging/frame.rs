use crate::error::{Error, Result};

/// Canonical capture width in pixels.
pub const CAPTURE_WIDTH: u32 = 640;
/// Canonical capture height in pixels.
pub const CAPTURE_HEIGHT: u32 = 480;

/// An 8-bit RGB camera frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFrame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    source_id: String,
}

impl ImageFrame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, source_id: impl Into<String>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::shape(
                format!("{expected} bytes for {width}x{height} RGB"),
                format!("{} bytes", pixels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
            source_id: source_id.into(),
        })
    }

    /// A frame filled with a single color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3], source_id: impl Into<String>) -> Result<Self> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, pixels, source_id)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn is_capture_size(&self) -> bool {
        self.width == CAPTURE_WIDTH && self.height == CAPTURE_HEIGHT
    }

    pub(crate) fn check_same_dims(&self, width: u32, height: u32) -> Result<()> {
        if (self.width, self.height) != (width, height) {
            return Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{width}x{height}"),
            ));
        }
        Ok(())
    }
}
