use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub const MIN_SIDE: usize = 64;

/// Row-major grayscale raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    meters_per_px: f64,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, meters_per_px: f64) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidInput(format!(
                "image is {width}x{height}; both sides must be at least {MIN_SIDE}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "pixel buffer has {} values, expected {}",
                pixels.len(),
                width * height
            )));
        }
        if !(meters_per_px.is_finite() && meters_per_px > 0.0) {
            return Err(Error::InvalidInput(format!(
                "meters_per_px must be positive, got {meters_per_px}"
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::InvalidInput(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            meters_per_px,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        meters_per_px: f64,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(c, r).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, pixels, meters_per_px)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn meters_per_px(&self) -> f64 {
        self.meters_per_px
    }

    #[inline]
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    /// Pixel (col, row) to center-origin meters.
    #[inline]
    pub fn to_meters(&self, col: f64, row: f64) -> Point {
        Point::new(
            (col - (self.width as f64 - 1.0) * 0.5) * self.meters_per_px,
            (row - (self.height as f64 - 1.0) * 0.5) * self.meters_per_px,
        )
    }

    /// Center-origin meters to fractional pixel (col, row).
    #[inline]
    pub fn to_pixel(&self, p: &Point) -> (f64, f64) {
        (
            p.x / self.meters_per_px + (self.width as f64 - 1.0) * 0.5,
            p.y / self.meters_per_px + (self.height as f64 - 1.0) * 0.5,
        )
    }

    /// Half extents in meters measured between the outermost pixel centers.
    pub fn half_extent(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) * 0.5 * self.meters_per_px,
            (self.height as f64 - 1.0) * 0.5 * self.meters_per_px,
        )
    }

    pub fn contains(&self, p: &Point) -> bool {
        let (hx, hy) = self.half_extent();
        p.x.abs() <= hx && p.y.abs() <= hy
    }

    /// Bilinear sample at fractional pixel coordinates; `None` outside.
    pub fn sample(&self, col: f64, row: f64) -> Option<f32> {
        if !(col >= 0.0 && row >= 0.0) {
            return None;
        }
        let (w, h) = (self.width as f64, self.height as f64);
        if col > w - 1.0 || row > h - 1.0 {
            return None;
        }
        let c0 = (col.floor() as usize).min(self.width - 1);
        let r0 = (row.floor() as usize).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let fc = (col - c0 as f64) as f32;
        let fr = (row - r0 as f64) as f32;
        let top = self.get(c0, r0) * (1.0 - fc) + self.get(c1, r0) * fc;
        let bot = self.get(c0, r1) * (1.0 - fc) + self.get(c1, r1) * fc;
        Some(top * (1.0 - fr) + bot * fr)
    }

    /// Loads an 8- or 16-bit grayscale PGM or PNG.
    pub fn load(path: &Path, meters_per_px: f64) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let luma = img.into_luma16();
        let (w, h) = luma.dimensions();
        let pixels = luma.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        Self::new(w as usize, h as usize, pixels, meters_per_px)
    }

    /// Writes an 8-bit grayscale image; the format follows the extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_fn(self.width as u32, self.height as u32, |c, r| {
                Luma([(self.get(c as usize, r as usize) * 255.0).round() as u8])
            });
        buf.save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

/// Per-pixel gradient magnitude and orientation (`atan2(dy, dx)` in the
/// y-down pixel frame), computed with central differences and clamped borders.
#[derive(Debug, Clone)]
pub(crate) struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f32>,
    pub orientation: Vec<f32>,
}

impl GradientField {
    pub fn new(width: usize, height: usize, data: &[f32]) -> Self {
        let mut magnitude = vec![0.0f32; width * height];
        let mut orientation = vec![0.0f32; width * height];
        for r in 0..height {
            let ru = r.saturating_sub(1);
            let rd = (r + 1).min(height - 1);
            for c in 0..width {
                let cl = c.saturating_sub(1);
                let cr = (c + 1).min(width - 1);
                let dx = data[r * width + cr] - data[r * width + cl];
                let dy = data[rd * width + c] - data[ru * width + c];
                magnitude[r * width + c] = (dx * dx + dy * dy).sqrt();
                orientation[r * width + c] = dy.atan2(dx);
            }
        }
        Self {
            width,
            height,
            magnitude,
            orientation,
        }
    }

    pub fn of(img: &ImageGrid) -> Self {
        Self::new(img.width, img.height, &img.pixels)
    }
}
