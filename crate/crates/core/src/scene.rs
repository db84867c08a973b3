use crate::error::{Error, Result};

/// A normalised grayscale scene, row-major, every pixel in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl SceneImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::SizeMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidParameter(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds a scene by clamping arbitrary values into `[0, 1]`.
    pub fn from_clamped(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let pixels = values
            .iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// From 8-bit samples, scaled by 1/255.
    pub fn from_u8(width: usize, height: usize, samples: &[u8]) -> Result<Self> {
        let pixels = samples.iter().map(|&s| f64::from(s) / 255.0).collect();
        Self::new(width, height, pixels)
    }

    /// Quantises to 8-bit samples (round to nearest).
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Copies out the `size`×`size` tile whose top-left corner is `(x0, y0)`.
    pub fn tile(&self, x0: usize, y0: usize, size: usize) -> Result<Self> {
        if x0 + size > self.width || y0 + size > self.height {
            return Err(Error::InvalidParameter(format!(
                "tile at ({x0}, {y0}) of size {size} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(size * size);
        for row in y0..y0 + size {
            let start = row * self.width + x0;
            pixels.extend_from_slice(&self.pixels[start..start + size]);
        }
        Ok(Self {
            width: size,
            height: size,
            pixels,
        })
    }

    /// Writes `tile` back at `(x0, y0)`.
    pub fn paste(&mut self, tile: &SceneImage, x0: usize, y0: usize) -> Result<()> {
        if x0 + tile.width > self.width || y0 + tile.height > self.height {
            return Err(Error::InvalidParameter("tile does not fit".into()));
        }
        for row in 0..tile.height {
            let dst = (y0 + row) * self.width + x0;
            let src = row * tile.width;
            self.pixels[dst..dst + tile.width].copy_from_slice(&tile.pixels[src..src + tile.width]);
        }
        Ok(())
    }

    /// Centre crop to the largest square whose side is a power of two.
    pub fn center_crop_pow2(&self) -> Self {
        let side = largest_pow2_at_most(self.width.min(self.height));
        let x0 = (self.width - side) / 2;
        let y0 = (self.height - side) / 2;
        self.tile(x0, y0, side).expect("crop lies inside the image")
    }
}

pub(crate) fn largest_pow2_at_most(v: usize) -> usize {
    if v == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - v.leading_zeros())
    }
}

/// Splits a pixel count that is a power of two into `(width, height)`,
/// square when possible, otherwise twice as wide as tall.
pub fn dims_for_order(order: usize) -> (usize, usize) {
    let bits = order.trailing_zeros();
    let h = 1usize << (bits / 2);
    (order / h, h)
}
