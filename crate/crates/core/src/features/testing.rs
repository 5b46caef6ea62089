//! Test-only image helpers.

use super::image::ImageGrid;
use crate::geometry::{Point, RigidTransform};
use crate::harness::texture::ProceduralTexture;

pub fn texture(size: usize, seed: u64) -> ImageGrid {
    let tex = ProceduralTexture::new(seed);
    let c = (size as f64 - 1.0) * 0.5;
    ImageGrid::from_fn(size, size, 1.0, |col, row| tex.eval(col as f64 - c, row as f64 - c)).unwrap()
}

/// Exact 90° rotation mapping center-origin `(x, y)` to `(-y, x)`.
pub fn rotate90(img: &ImageGrid) -> ImageGrid {
    let (w, h) = (img.width(), img.height());
    ImageGrid::from_fn(h, w, img.meters_per_px(), |col, row| {
        // Destination (col, row) = R90 * source; invert to find the source pixel.
        let src_col = row;
        let src_row = h - 1 - col;
        img.get(src_col, src_row)
    })
    .unwrap()
}

/// Bilinear rotation about the image center by `rho`; uncovered pixels get
/// the image mean.
pub fn rotate_about_center(img: &ImageGrid, rho: f64) -> ImageGrid {
    let inv = RigidTransform::new(0.0, 0.0, rho).inverse();
    let mean = img.pixels().iter().sum::<f32>() / img.pixels().len() as f32;
    ImageGrid::from_fn(img.width(), img.height(), img.meters_per_px(), |col, row| {
        let p = img.to_meters(col as f64, row as f64);
        let q = inv.apply(&Point::new(p.x, p.y));
        let (c, r) = img.to_pixel(&q);
        img.sample(c, r).unwrap_or(mean)
    })
    .unwrap()
}
