//! Dense per-pixel maps: `f32` images for depth/thickness and `u8` images
//! for instance masks. Row-major, row 0 at the top.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {0}x{1}")]
    EmptyImage(usize, usize),
    #[error("pixel count {got} does not match {width}x{height}")]
    DataSizeMismatch {
        width: usize,
        height: usize,
        got: usize,
    },
}

/// Grayscale float image. Depth maps use NaN for missing pixels; thickness
/// maps use 0 for "no thickness".
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FloatMap {
    pub fn new(width: usize, height: usize, fill: f32) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        Ok(Self {
            width,
            height,
            data: vec![fill; width * height],
        })
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        if data.len() != width * height {
            return Err(ImageError::DataSizeMismatch {
                width,
                height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f32) {
        self.data[v * self.width + u] = value;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, v: usize) -> &[f32] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, f32> {
        self.data.chunks_mut(self.width)
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer + 0.5). Coordinates are clamped to the image; NaN neighbors
    /// propagate.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> f32 {
        let x = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Per-pixel instance ids; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl MaskMap {
    pub fn new(width: usize, height: usize) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        Ok(Self {
            width,
            height,
            data: vec![0; width * height],
        })
    }

    pub fn from_data(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage(width, height));
        }
        if data.len() != width * height {
            return Err(ImageError::DataSizeMismatch {
                width,
                height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, id: u8) {
        self.data[v * self.width + u] = id;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, u8> {
        self.data.chunks_mut(self.width)
    }

    /// Distinct nonzero ids present, ascending.
    pub fn instance_ids(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &id in &self.data {
            seen[id as usize] = true;
        }
        (1..=255u8).filter(|&id| seen[id as usize]).collect()
    }
}
