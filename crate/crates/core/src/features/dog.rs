//! Difference-of-Gaussians keypoint detector.

use super::descriptor::{dominant_orientation, FeatureFrame, Support};
use super::image::{GradientField, ImageGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DogConfig {
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    /// Blur already present in the input image.
    pub input_sigma: f64,
    /// Threshold on the interpolated |DoG| response (intensities in [0, 1]).
    pub contrast_threshold: f64,
    /// Principal-curvature ratio limit.
    pub edge_ratio: f64,
    pub border: usize,
}

impl Default for DogConfig {
    fn default() -> Self {
        Self {
            scales_per_octave: 3,
            base_sigma: 1.6,
            input_sigma: 0.5,
            contrast_threshold: 0.015,
            edge_ratio: 10.0,
            border: 5,
        }
    }
}

#[derive(Debug, Clone)]
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, c: usize, r: usize) -> f32 {
        self.data[r * self.w + c]
    }

    fn blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f32> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
            .collect();
        let sum: f32 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= sum);
        let (w, h) = (self.w as isize, self.h as isize);
        let mut tmp = vec![0.0f32; self.data.len()];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let cc = (c + k as isize - radius).clamp(0, w - 1);
                    acc += kv * self.data[(r * w + cc) as usize];
                }
                tmp[(r * w + c) as usize] = acc;
            }
        }
        let mut out = vec![0.0f32; self.data.len()];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let rr = (r + k as isize - radius).clamp(0, h - 1);
                    acc += kv * tmp[(rr * w + c) as usize];
                }
                out[(r * w + c) as usize] = acc;
            }
        }
        Plane {
            w: self.w,
            h: self.h,
            data: out,
        }
    }

    fn decimate(&self) -> Plane {
        let w = self.w / 2;
        let h = self.h / 2;
        let mut data = Vec::with_capacity(w * h);
        for r in 0..h {
            for c in 0..w {
                data.push(self.at(2 * c, 2 * r));
            }
        }
        Plane { w, h, data }
    }

    fn sub(&self, other: &Plane) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Scale-space extrema of a DoG pyramid with subpixel/subscale refinement,
/// low-contrast and edge rejection, and a single dominant orientation each.
pub fn detect_dog_keypoints(img: &ImageGrid) -> Vec<FeatureFrame> {
    detect_dog_keypoints_with(img, &DogConfig::default())
}

pub fn detect_dog_keypoints_with(img: &ImageGrid, cfg: &DogConfig) -> Vec<FeatureFrame> {
    let s = cfg.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let base = Plane {
        w: img.width(),
        h: img.height(),
        data: img.pixels().to_vec(),
    };
    let init = (cfg.base_sigma.powi(2) - cfg.input_sigma.powi(2)).max(0.0).sqrt();
    let mut octave_base = base.blur(init);
    let mut out = Vec::new();
    let mut octave = 0;
    let min_side = 2 * cfg.border + 8;
    while octave_base.w >= min_side && octave_base.h >= min_side {
        let mut gauss = vec![octave_base.clone()];
        for i in 1..s + 3 {
            let prev = cfg.base_sigma * k.powi(i as i32 - 1);
            let inc = prev * (k * k - 1.0).sqrt();
            gauss.push(gauss[i - 1].blur(inc));
        }
        let dogs: Vec<Plane> = gauss.windows(2).map(|g| g[1].sub(&g[0])).collect();
        let grads: Vec<Option<GradientField>> = (0..gauss.len()).map(|_| None).collect();
        let mut grads = grads;
        let scale = 2f64.powi(octave);
        for level in 1..=s {
            for (c, r) in extrema(&dogs, level, cfg) {
                let Some(kp) = refine(&dogs, c, r, level, cfg) else {
                    continue;
                };
                let sigma_oct = cfg.base_sigma * k.powf(kp.level);
                let gl = (kp.level.round() as usize).clamp(0, gauss.len() - 1);
                let grad = grads[gl].get_or_insert_with(|| {
                    GradientField::new(gauss[gl].w, gauss[gl].h, &gauss[gl].data)
                });
                let support = Support {
                    cx: kp.c,
                    cy: kp.r,
                    radius: 3.0 * sigma_oct,
                };
                let Some(theta) = dominant_orientation(grad, &support) else {
                    continue;
                };
                let p = img.to_meters(kp.c * scale, kp.r * scale);
                out.push(FeatureFrame {
                    x: p.x,
                    y: p.y,
                    sigma: sigma_oct * scale * img.meters_per_px(),
                    theta,
                });
            }
        }
        octave_base = gauss[s].decimate();
        octave += 1;
    }
    out
}

fn extrema(dogs: &[Plane], level: usize, cfg: &DogConfig) -> Vec<(usize, usize)> {
    let d = &dogs[level];
    let pre = 0.5 * cfg.contrast_threshold as f32;
    let mut out = Vec::new();
    for r in cfg.border..d.h - cfg.border {
        for c in cfg.border..d.w - cfg.border {
            let v = d.at(c, r);
            if v.abs() <= pre {
                continue;
            }
            let mut is_max = true;
            let mut is_min = true;
            'scan: for plane in &dogs[level - 1..=level + 1] {
                for rr in r - 1..=r + 1 {
                    for cc in c - 1..=c + 1 {
                        if std::ptr::eq(plane, d) && rr == r && cc == c {
                            continue;
                        }
                        let n = plane.at(cc, rr);
                        if n >= v {
                            is_max = false;
                        }
                        if n <= v {
                            is_min = false;
                        }
                        if !is_max && !is_min {
                            break 'scan;
                        }
                    }
                }
            }
            if is_max || is_min {
                out.push((c, r));
            }
        }
    }
    out
}

struct Refined {
    c: f64,
    r: f64,
    level: f64,
}

fn refine(dogs: &[Plane], mut c: usize, mut r: usize, mut level: usize, cfg: &DogConfig) -> Option<Refined> {
    let s = cfg.scales_per_octave;
    let w = dogs[0].w;
    let h = dogs[0].h;
    for _ in 0..5 {
        let d = |l: usize, cc: usize, rr: usize| dogs[l].at(cc, rr) as f64;
        let v = d(level, c, r);
        let dx = 0.5 * (d(level, c + 1, r) - d(level, c - 1, r));
        let dy = 0.5 * (d(level, c, r + 1) - d(level, c, r - 1));
        let ds = 0.5 * (d(level + 1, c, r) - d(level - 1, c, r));
        let dxx = d(level, c + 1, r) + d(level, c - 1, r) - 2.0 * v;
        let dyy = d(level, c, r + 1) + d(level, c, r - 1) - 2.0 * v;
        let dss = d(level + 1, c, r) + d(level - 1, c, r) - 2.0 * v;
        let dxy = 0.25 * (d(level, c + 1, r + 1) - d(level, c - 1, r + 1) - d(level, c + 1, r - 1)
            + d(level, c - 1, r - 1));
        let dxs = 0.25 * (d(level + 1, c + 1, r) - d(level + 1, c - 1, r) - d(level - 1, c + 1, r)
            + d(level - 1, c - 1, r));
        let dys = 0.25 * (d(level + 1, c, r + 1) - d(level + 1, c, r - 1) - d(level - 1, c, r + 1)
            + d(level - 1, c, r - 1));
        let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let grad = nalgebra::Vector3::new(dx, dy, ds);
        let offset = -(hess.try_inverse()? * grad);
        if offset.iter().all(|o| o.abs() < 0.5) {
            let contrast = v + 0.5 * grad.dot(&offset);
            if contrast.abs() < cfg.contrast_threshold {
                return None;
            }
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let er = cfg.edge_ratio;
            if det <= 0.0 || tr * tr * er >= (er + 1.0).powi(2) * det {
                return None;
            }
            return Some(Refined {
                c: c as f64 + offset.x,
                r: r as f64 + offset.y,
                level: level as f64 + offset.z,
            });
        }
        let nc = c as f64 + offset.x.round();
        let nr = r as f64 + offset.y.round();
        let nl = level as f64 + offset.z.round();
        if nl < 1.0
            || nl > s as f64
            || nc < cfg.border as f64
            || nr < cfg.border as f64
            || nc >= (w - cfg.border) as f64
            || nr >= (h - cfg.border) as f64
        {
            return None;
        }
        c = nc as usize;
        r = nr as usize;
        level = nl as usize;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::testing::{rotate90, texture};

    #[test]
    fn blank_image_has_no_keypoints() {
        let img = ImageGrid::new(128, 128, vec![0.3; 128 * 128], 1.0).unwrap();
        assert!(detect_dog_keypoints(&img).is_empty());
    }

    #[test]
    fn single_blob_single_keypoint() {
        let n = 128;
        let c = (n as f64 - 1.0) / 2.0;
        let img = ImageGrid::from_fn(n, n, 1.0, |x, y| {
            let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
            (0.05 + 0.9 * (-d2 / (2.0 * 64.0)).exp()) as f32
        })
        .unwrap();
        let kps = detect_dog_keypoints(&img);
        let near: Vec<_> = kps
            .iter()
            .filter(|k| (k.x * k.x + k.y * k.y).sqrt() <= 2.0)
            .collect();
        assert_eq!(near.len(), 1, "{kps:?}");
        assert_eq!(kps.len(), 1, "{kps:?}");
        let s = near[0].sigma;
        assert!(s > 8.0 / 1.5 && s < 8.0 * 1.5, "scale {s}");
    }

    #[test]
    fn count_stable_under_rotation() {
        let img = texture(256, 21);
        let a = detect_dog_keypoints(&img).len() as f64;
        let b = detect_dog_keypoints(&rotate90(&img)).len() as f64;
        assert!(a > 50.0, "too few keypoints: {a}");
        assert!((a - b).abs() <= 0.2 * a, "{a} vs {b}");
    }
}
