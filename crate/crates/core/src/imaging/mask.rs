use crate::error::{Error, Result};

/// Default binarization threshold.
pub const DEFAULT_THRESHOLD: f32 = 0.5;

/// A hard {0,1} mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, values: Vec<u8>) -> Result<Self> {
        check_len(width, height, values.len())?;
        if let Some(v) = values.iter().find(|v| **v > 1) {
            return Err(Error::Argument(format!("binary mask value {v} is not 0 or 1")));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0; width as usize * height as usize],
        }
    }

    pub fn ones(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![1; width as usize * height as usize],
        }
    }

    /// Builds a mask by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y) as u8);
            }
        }
        Self { width, height, values }
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

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.values[y as usize * self.width as usize + x as usize] == 1
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.values[y as usize * self.width as usize + x as usize] = on as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|v| **v == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|v| *v == 0)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_pair(self.dims(), other.dims())?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a | b)
            .collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            values,
        })
    }

    pub fn to_soft(&self) -> SoftMask {
        SoftMask {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| *v as f32).collect(),
        }
    }
}

/// A real-valued mask with every value in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl SoftMask {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        check_len(width, height, values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("soft mask value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
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

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Snaps every value to the nearest multiple of 1/255, the precision of
    /// the 8-bit PNG encoding.
    pub fn quantized(&self) -> SoftMask {
        SoftMask {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|v| quantize_byte(*v) as f32 / 255.0)
                .collect(),
        }
    }
}

pub(crate) fn quantize_byte(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Hard mask with 1 wherever `soft >= threshold`.
pub fn binarize(soft: &SoftMask, threshold: f32) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "binarization threshold {threshold} outside [0, 1]"
        )));
    }
    Ok(BinaryMask {
        width: soft.width,
        height: soft.height,
        values: soft.values.iter().map(|v| (*v >= threshold) as u8).collect(),
    })
}

fn check_len(width: u32, height: u32, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Argument(format!(
            "mask dimensions must be positive, got {width}x{height}"
        )));
    }
    let expected = width as usize * height as usize;
    if len != expected {
        return Err(Error::shape(format!("{expected} values"), format!("{len} values")));
    }
    Ok(())
}

pub(crate) fn check_pair(a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(Error::shape(
            format!("{}x{}", a.0, a.1),
            format!("{}x{}", b.0, b.1),
        ));
    }
    Ok(())
}
