//! SIFT-style 4x4x8 gradient-orientation descriptors over a circular support.

use std::f32::consts::TAU as TAU32;

use rayon::prelude::*;

use super::image::{GradientField, ImageGrid};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point};

pub const DESCRIPTOR_LEN: usize = 128;
const SPATIAL_BINS: usize = 4;
const ORI_BINS: usize = 8;
const ORI_HIST_BINS: usize = 36;
const CLAMP: f32 = 0.2;

/// Local feature geometry in center-origin meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFrame {
    pub x: f64,
    pub y: f64,
    /// Support-region radius proxy in meters.
    pub sigma: f64,
    /// Orientation in `[0, 2π)`, measured as `atan2(dy, dx)` in the y-down frame.
    pub theta: f64,
}

impl FeatureFrame {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Clone, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl std::fmt::Debug for Descriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Descriptor(|d|={:.4})", self.norm())
    }
}

impl Descriptor {
    pub fn zeros() -> Self {
        Self([0.0; DESCRIPTOR_LEN])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Zero descriptors come from patches without gradient energy.
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Euclidean distance; per-element differences in f32, sum in f64.
    #[inline]
    pub fn distance(&self, other: &Descriptor) -> f64 {
        let mut acc = 0.0f64;
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            let d = (a - b) as f64;
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Squared distance in f32 with lane-parallel accumulation. Differs
    /// from `distance()²` by at most a few ulps of the magnitude; used only
    /// to reject candidates before the exact computation.
    #[inline]
    pub(crate) fn approx_distance_sq(&self, other: &Descriptor) -> f32 {
        let mut lanes = [0.0f32; 8];
        for (ca, cb) in self.0.chunks_exact(8).zip(other.0.chunks_exact(8)) {
            for i in 0..8 {
                let d = ca[i] - cb[i];
                lanes[i] += d * d;
            }
        }
        lanes.iter().sum()
    }

    pub fn cosine(&self, other: &Descriptor) -> f64 {
        let dot: f64 = self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let n = self.norm() * other.norm();
        if n > 0.0 {
            dot / n
        } else {
            0.0
        }
    }
}

/// Frames with their descriptors, index-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    pub frames: Vec<FeatureFrame>,
    pub descriptors: Vec<Descriptor>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, frame: FeatureFrame, desc: Descriptor) {
        self.frames.push(frame);
        self.descriptors.push(desc);
    }
}

/// A circular support region in pixel units.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Support {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Support {
    fn of(img_w: usize, img_h: usize, mpp: f64, frame: &FeatureFrame) -> Self {
        Support {
            cx: frame.x / mpp + (img_w as f64 - 1.0) * 0.5,
            cy: frame.y / mpp + (img_h as f64 - 1.0) * 0.5,
            radius: frame.sigma / mpp,
        }
    }

    pub fn inside(&self, w: usize, h: usize) -> bool {
        const EPS: f64 = 1e-9;
        self.radius > 0.0
            && self.cx - self.radius >= -EPS
            && self.cy - self.radius >= -EPS
            && self.cx + self.radius <= w as f64 - 1.0 + EPS
            && self.cy + self.radius <= h as f64 - 1.0 + EPS
    }

    /// Visits every pixel within the disc as `(index, dx, dy)`.
    #[inline]
    fn for_each(&self, grad: &GradientField, mut f: impl FnMut(usize, f64, f64)) {
        let r2 = self.radius * self.radius;
        let r0 = (self.cy - self.radius).ceil().max(0.0) as usize;
        let r1 = ((self.cy + self.radius).floor() as usize).min(grad.height - 1);
        let c0 = (self.cx - self.radius).ceil().max(0.0) as usize;
        let c1 = ((self.cx + self.radius).floor() as usize).min(grad.width - 1);
        for row in r0..=r1 {
            let dy = row as f64 - self.cy;
            for col in c0..=c1 {
                let dx = col as f64 - self.cx;
                if dx * dx + dy * dy <= r2 {
                    f(row * grad.width + col, dx, dy);
                }
            }
        }
    }
}

/// Gaussian-weighted 36-bin orientation histogram peak with parabolic
/// refinement. `None` when the support carries no gradient energy.
pub(crate) fn dominant_orientation(grad: &GradientField, s: &Support) -> Option<f64> {
    let mut hist = [0.0f64; ORI_HIST_BINS];
    let sigma = 0.5 * s.radius;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let bin_w = TAU32 / ORI_HIST_BINS as f32;
    let mut total = 0.0;
    s.for_each(grad, |idx, dx, dy| {
        let m = grad.magnitude[idx];
        if m <= 0.0 {
            return;
        }
        let w = m as f64 * (-(dx * dx + dy * dy) * inv).exp();
        let b = grad.orientation[idx].rem_euclid(TAU32) / bin_w;
        let b0 = b.floor();
        let f = (b - b0) as f64;
        let i0 = (b0 as usize) % ORI_HIST_BINS;
        hist[i0] += w * (1.0 - f);
        hist[(i0 + 1) % ORI_HIST_BINS] += w * f;
        total += w;
    });
    if total <= 0.0 {
        return None;
    }
    for _ in 0..2 {
        let prev = hist;
        for i in 0..ORI_HIST_BINS {
            let l = prev[(i + ORI_HIST_BINS - 1) % ORI_HIST_BINS];
            let r = prev[(i + 1) % ORI_HIST_BINS];
            hist[i] = 0.25 * l + 0.5 * prev[i] + 0.25 * r;
        }
    }
    let (peak, _) = hist
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let l = hist[(peak + ORI_HIST_BINS - 1) % ORI_HIST_BINS];
    let c = hist[peak];
    let r = hist[(peak + 1) % ORI_HIST_BINS];
    let denom = l - 2.0 * c + r;
    let offset = if denom.abs() > 1e-300 {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some(wrap_angle(
        (peak as f64 + offset) * std::f64::consts::TAU / ORI_HIST_BINS as f64,
    ))
}

/// 4x4 spatial cells of 8 orientation bins, trilinearly binned in the frame
/// rotated by `theta`, L2-normalized, clamped at 0.2 and renormalized.
pub(crate) fn describe(grad: &GradientField, s: &Support, theta: f64) -> Descriptor {
    let mut hist = [0.0f64; DESCRIPTOR_LEN];
    let (sin_t, cos_t) = theta.sin_cos();
    let cell = s.radius * 2.0 / SPATIAL_BINS as f64;
    let inv_cell = 1.0 / cell;
    let inv_w = 1.0 / (2.0 * s.radius * s.radius);
    let ori_scale = ORI_BINS as f64 / std::f64::consts::TAU;
    let center = SPATIAL_BINS as f64 * 0.5 - 0.5;
    s.for_each(grad, |idx, dx, dy| {
        let m = grad.magnitude[idx];
        if m <= 0.0 {
            return;
        }
        // Rotate the offset by -theta into the descriptor frame.
        let u = cos_t * dx + sin_t * dy;
        let v = -sin_t * dx + cos_t * dy;
        let bu = u * inv_cell + center;
        let bv = v * inv_cell + center;
        let w = m as f64 * (-(u * u + v * v) * inv_w).exp();
        let rel = wrap_angle(grad.orientation[idx] as f64 - theta) * ori_scale;
        let bo0 = rel.floor();
        let fo = rel - bo0;
        let bo0 = bo0 as usize % ORI_BINS;
        let bu0 = bu.floor();
        let bv0 = bv.floor();
        let fu = bu - bu0;
        let fv = bv - bv0;
        let (bu0, bv0) = (bu0 as i64, bv0 as i64);
        for (iv, wv) in [(bv0, 1.0 - fv), (bv0 + 1, fv)] {
            if !(0..SPATIAL_BINS as i64).contains(&iv) {
                continue;
            }
            for (iu, wu) in [(bu0, 1.0 - fu), (bu0 + 1, fu)] {
                if !(0..SPATIAL_BINS as i64).contains(&iu) {
                    continue;
                }
                let base = (iv as usize * SPATIAL_BINS + iu as usize) * ORI_BINS;
                let ws = w * wv * wu;
                hist[base + bo0] += ws * (1.0 - fo);
                hist[base + (bo0 + 1) % ORI_BINS] += ws * fo;
            }
        }
    });
    normalize_clamped(&hist)
}

fn normalize_clamped(hist: &[f64; DESCRIPTOR_LEN]) -> Descriptor {
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return Descriptor::zeros();
    }
    let mut tmp = [0.0f64; DESCRIPTOR_LEN];
    for (t, h) in tmp.iter_mut().zip(hist) {
        *t = (h / norm).min(CLAMP as f64);
    }
    let norm2 = tmp.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = Descriptor::zeros();
    for (o, t) in out.0.iter_mut().zip(tmp) {
        *o = (t / norm2) as f32;
    }
    out
}

/// Descriptor at `frame` with orientation fixed to `forced_theta`.
///
/// Returns a zero vector when the patch has no gradient energy.
pub fn compute_descriptor_at(
    img: &ImageGrid,
    frame: &FeatureFrame,
    forced_theta: f64,
) -> Result<Descriptor> {
    let grad = GradientField::of(img);
    descriptor_with_gradients(img, &grad, frame, forced_theta)
}

pub(crate) fn descriptor_with_gradients(
    img: &ImageGrid,
    grad: &GradientField,
    frame: &FeatureFrame,
    theta: f64,
) -> Result<Descriptor> {
    let s = Support::of(img.width(), img.height(), img.meters_per_px(), frame);
    if !s.inside(img.width(), img.height()) {
        return Err(Error::SupportOutsideImage);
    }
    Ok(describe(grad, &s, wrap_angle(theta)))
}

/// Regular grid positions (pixel coordinates) for dense sampling. The grid is
/// centered so that it maps onto itself under 90° rotations of square images.
pub fn dense_grid_positions(width: usize, height: usize, step_px: f64, radius_px: f64) -> Vec<(f64, f64)> {
    let axis = |len: usize| -> Vec<f64> {
        let span = len as f64 - 1.0 - 2.0 * radius_px;
        if span < 0.0 || step_px <= 0.0 {
            return Vec::new();
        }
        let n = (span / step_px + 1e-9).floor() as usize + 1;
        let slack = span - (n - 1) as f64 * step_px;
        let first = radius_px + 0.5 * slack;
        (0..n).map(|i| first + i as f64 * step_px).collect()
    };
    let xs = axis(width);
    let ys = axis(height);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// Densely sampled frames (`sigma = support / 2`, dominant orientation) and
/// their descriptors. Patches without gradient energy are excluded.
pub fn dense_sample(img: &ImageGrid, step: f64, support: f64) -> Result<FeatureSet> {
    let mpp = img.meters_per_px();
    if !(step >= 1.0) || !(support >= 8.0 * mpp) {
        return Err(Error::InvalidInput(format!(
            "dense sampling needs step >= 1 and support >= 8 px (step {step}, support {support})"
        )));
    }
    let radius_px = support * 0.5 / mpp;
    let positions = dense_grid_positions(img.width(), img.height(), step / mpp, radius_px);
    if positions.is_empty() {
        log::warn!(
            "image {}x{} is smaller than the {support} m support; no dense features",
            img.width(),
            img.height()
        );
        return Ok(FeatureSet::default());
    }
    let grad = GradientField::of(img);
    let described: Vec<Option<(FeatureFrame, Descriptor)>> = positions
        .par_iter()
        .map(|&(c, r)| {
            let p = img.to_meters(c, r);
            let s = Support {
                cx: c,
                cy: r,
                radius: radius_px,
            };
            let theta = dominant_orientation(&grad, &s)?;
            let desc = describe(&grad, &s, theta);
            if desc.is_zero() {
                return None;
            }
            Some((
                FeatureFrame {
                    x: p.x,
                    y: p.y,
                    sigma: support * 0.5,
                    theta,
                },
                desc,
            ))
        })
        .collect();
    let mut out = FeatureSet::default();
    let total = described.len();
    for (f, d) in described.into_iter().flatten() {
        out.push(f, d);
    }
    if out.len() < total {
        log::debug!("dense sampling excluded {} flat patches", total - out.len());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::testing::{rotate90, texture};

    #[test]
    fn grid_count_matches_arithmetic() {
        // Pixel centers span width - 1 meters; one support radius of margin per side.
        let n = dense_grid_positions(5000, 5000, 40.0, 120.0).len();
        assert_eq!(n, 119 * 119);
        assert_eq!(n, 14161);
        let n = dense_grid_positions(512, 300, 8.0, 24.0).len();
        let per = |len: usize| ((len as f64 - 1.0 - 48.0) / 8.0).floor() as usize + 1;
        assert_eq!(n, per(512) * per(300));
        assert!(dense_grid_positions(40, 40, 8.0, 24.0).is_empty());
    }

    #[test]
    fn constant_image_has_no_features() {
        let img = ImageGrid::new(128, 128, vec![0.4; 128 * 128], 1.0).unwrap();
        let f = dense_sample(&img, 8.0, 48.0).unwrap();
        assert!(f.is_empty());
        let frame = FeatureFrame {
            x: 0.0,
            y: 0.0,
            sigma: 20.0,
            theta: 0.0,
        };
        let d = compute_descriptor_at(&img, &frame, 0.3).unwrap();
        assert!(d.is_zero());
    }

    #[test]
    fn small_image_yields_empty_set() {
        let img = texture(64, 3);
        let f = dense_sample(&img, 8.0, 100.0).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn descriptor_properties() {
        let img = texture(128, 5);
        let f = dense_sample(&img, 16.0, 48.0).unwrap();
        assert!(!f.is_empty());
        for d in &f.descriptors {
            assert!(d.0.iter().all(|&v| v >= 0.0 && v <= 1.0));
            assert!((d.norm() - 1.0).abs() < 1e-5);
        }
        for fr in &f.frames {
            assert!((0.0..std::f64::consts::TAU).contains(&fr.theta));
            assert_eq!(fr.sigma, 24.0);
        }
    }

    #[test]
    fn forced_dominant_orientation_equals_dense() {
        let img = texture(128, 9);
        let f = dense_sample(&img, 16.0, 48.0).unwrap();
        for (fr, d) in f.frames.iter().zip(&f.descriptors).take(10) {
            let again = compute_descriptor_at(&img, fr, fr.theta).unwrap();
            assert_eq!(&again, d);
        }
    }

    #[test]
    fn support_outside_is_error() {
        let img = texture(64, 1);
        let frame = FeatureFrame {
            x: 25.0,
            y: 0.0,
            sigma: 10.0,
            theta: 0.0,
        };
        assert!(matches!(
            compute_descriptor_at(&img, &frame, 0.0),
            Err(Error::SupportOutsideImage)
        ));
    }

    #[test]
    fn dense_descriptors_are_rotation_equivariant() {
        let img = texture(160, 11);
        let rot = rotate90(&img);
        let a = dense_sample(&img, 16.0, 48.0).unwrap();
        let b = dense_sample(&rot, 16.0, 48.0).unwrap();
        // rotate90 maps (x, y) -> (-y, x), i.e. R(+90°) in the y-down frame.
        let mut checked = 0;
        let mut good = 0;
        for (fa, da) in a.frames.iter().zip(&a.descriptors) {
            let want = (-fa.y, fa.x);
            if let Some(j) = b
                .frames
                .iter()
                .position(|fb| (fb.x - want.0).abs() < 1e-6 && (fb.y - want.1).abs() < 1e-6)
            {
                checked += 1;
                if da.cosine(&b.descriptors[j]) > 0.9 {
                    good += 1;
                }
            }
        }
        assert_eq!(checked, a.len());
        assert!(good as f64 >= 0.95 * checked as f64, "{good}/{checked}");
    }

    #[test]
    fn forced_orientation_tracks_rotation() {
        let img = texture(160, 4);
        let rho = 0.7;
        let rotated = crate::features::testing::rotate_about_center(&img, rho);
        let grad_a = GradientField::of(&img);
        let grad_b = GradientField::of(&rotated);
        let mut good = 0;
        let mut total = 0;
        for &(x, y) in &[(0.0, 0.0), (10.0, -8.0), (-12.0, 5.0), (6.0, 14.0), (-9.0, -11.0)] {
            let fa = FeatureFrame { x, y, sigma: 24.0, theta: 0.0 };
            let pb = crate::geometry::RigidTransform::new(0.0, 0.0, rho).apply(&fa.position());
            let fb = FeatureFrame { x: pb.x, y: pb.y, ..fa };
            let theta = 1.1;
            let da = descriptor_with_gradients(&img, &grad_a, &fa, theta).unwrap();
            let db = descriptor_with_gradients(&rotated, &grad_b, &fb, theta + rho).unwrap();
            total += 1;
            if da.cosine(&db) > 0.9 {
                good += 1;
            }
        }
        assert_eq!(good, total);
    }
}
