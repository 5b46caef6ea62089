//! Rendered synthetic groups: a procedural reference map and historical
//! images cut from it under planted transforms and corruption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::texture::ProceduralTexture;
use crate::error::{Error, Result};
use crate::eval::GroundTruthCorrespondences;
use crate::features::ImageGrid;
use crate::geometry::{Point, RigidTransform};

/// Per-image corruption of historical images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    /// Share of the image area replaced by unrelated content.
    pub occlusion: f64,
    /// Largest absolute brightness offset; each image draws one uniformly.
    pub brightness: f64,
    pub noise_sigma: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            occlusion: 0.0,
            brightness: 0.0,
            noise_sigma: 0.0,
        }
    }
}

/// Replaces part of the reference under one image's footprint with a
/// shifted copy of the ground, so it votes coherently for a wrong placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDecoy {
    pub image: usize,
    /// Share of the footprint (inside the reference) that is replaced.
    pub fraction: f64,
    /// Shift of the copied ground, meters.
    pub offset: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    /// Side length of all images in pixels.
    pub size: usize,
    /// Ground sampling distance shared by the reference and all images.
    pub meters_per_px: f64,
    pub texture_seed: u64,
    /// Planted transforms, historical image k → reference.
    pub transforms: Vec<RigidTransform>,
    /// Scale drift per image: image k shows the ground at `T_k(s_k p)`.
    /// Empty means no drift.
    pub scale_drift: Vec<f64>,
    pub corruption: Corruption,
    pub decoy: Option<ReferenceDecoy>,
    /// Ground-truth points per axis on each historical image.
    pub gt_grid: usize,
    pub seed: u64,
}

impl SyntheticScenario {
    pub fn new(size: usize, transforms: Vec<RigidTransform>, seed: u64) -> Self {
        Self {
            size,
            meters_per_px: 1.0,
            texture_seed: seed,
            transforms,
            scale_drift: Vec::new(),
            corruption: Corruption::default(),
            decoy: None,
            gt_grid: 6,
            seed,
        }
    }

    /// Random group: rotations uniform in `[-max_rot_deg, max_rot_deg]`,
    /// translations uniform in `[-max_shift, max_shift]` per axis.
    pub fn random(size: usize, n: usize, max_rot_deg: f64, max_shift: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let transforms = (0..n)
            .map(|_| {
                RigidTransform::from_degrees(
                    rng.random_range(-max_shift..=max_shift),
                    rng.random_range(-max_shift..=max_shift),
                    rng.random_range(-max_rot_deg..=max_rot_deg),
                )
            })
            .collect();
        Self::new(size, transforms, seed)
    }

    pub fn drift(&self, k: usize) -> f64 {
        self.scale_drift.get(k).copied().unwrap_or(1.0)
    }

    /// Ground point shown at `p` (meters) of historical image k.
    pub fn true_map(&self, k: usize, p: &Point) -> Point {
        self.transforms[k].apply(&Point::from(p.coords * self.drift(k)))
    }

    fn validate(&self) -> Result<()> {
        if self.size < crate::features::MIN_SIDE {
            return Err(Error::InvalidInput(format!("image size {} too small", self.size)));
        }
        if !(self.meters_per_px > 0.0 && self.meters_per_px.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid ground sampling {}", self.meters_per_px)));
        }
        if let Some(s) = self.scale_drift.iter().find(|s| !(0.7..=1.3).contains(*s)) {
            return Err(Error::InvalidInput(format!("scale drift {s} outside [0.7, 1.3]")));
        }
        let c = &self.corruption;
        if !(0.0..=1.0).contains(&c.occlusion) || c.brightness < 0.0 || c.noise_sigma < 0.0 {
            return Err(Error::InvalidInput(format!("invalid corruption {c:?}")));
        }
        if let Some(d) = &self.decoy {
            if d.image >= self.transforms.len() || !(0.0..=1.0).contains(&d.fraction) {
                return Err(Error::InvalidInput(format!("invalid decoy {d:?}")));
            }
        }
        Ok(())
    }
}

/// Rendered scenario output.
#[derive(Debug, Clone)]
pub struct ScenarioImages {
    pub reference: ImageGrid,
    pub historical: Vec<ImageGrid>,
    pub ground_truth: Vec<GroundTruthCorrespondences>,
}

/// Random disks covering roughly `fraction` of the pixels selected by
/// `eligible`. Returns a per-pixel mask.
fn disk_mask(size: usize, fraction: f64, eligible: &[bool], rng: &mut ChaCha8Rng) -> Vec<bool> {
    let total = eligible.iter().filter(|&&e| e).count();
    let target = (fraction * total as f64).round() as usize;
    let mut mask = vec![false; size * size];
    let candidates: Vec<usize> = (0..size * size).filter(|&i| eligible[i]).collect();
    let mut covered = 0;
    let r_max = size as f64 / 6.0;
    let mut guard = 0;
    while covered < target && guard < 100_000 {
        guard += 1;
        let centre = candidates[rng.random_range(0..candidates.len())];
        let (cx, cy) = ((centre % size) as f64, (centre / size) as f64);
        let r = rng.random_range(0.3 * r_max..r_max);
        let (x0, x1) = ((cx - r).max(0.0) as usize, ((cx + r) as usize).min(size - 1));
        let (y0, y1) = ((cy - r).max(0.0) as usize, ((cy + r) as usize).min(size - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * size + x;
                if eligible[i] && !mask[i] && ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) <= r * r {
                    mask[i] = true;
                    covered += 1;
                    if covered >= target {
                        return mask;
                    }
                }
            }
        }
    }
    mask
}

/// Renders a `size`² view of the procedural ground: pixel center `p`
/// (center-origin meters) shows the ground at `map(p)`. Performs no
/// scenario validation, so it can build cases outside the scenario limits.
pub fn render_view(texture_seed: u64, size: usize, meters_per_px: f64, map: impl Fn(&Point) -> Point + Sync) -> Result<ImageGrid> {
    let ground = ProceduralTexture::new(texture_seed);
    let half = (size as f64 - 1.0) / 2.0 * meters_per_px;
    let px = (0..size * size)
        .map(|i| {
            let p = Point::new((i % size) as f64 * meters_per_px - half, (i / size) as f64 * meters_per_px - half);
            let q = map(&p);
            ground.eval(q.x / meters_per_px, q.y / meters_per_px)
        })
        .collect();
    ImageGrid::new(size, size, px, meters_per_px)
}

/// Renders the reference and every historical image and samples ground
/// truth. Deterministic in the scenario's seeds.
pub fn generate_scenario(spec: &SyntheticScenario) -> Result<ScenarioImages> {
    spec.validate()?;
    let size = spec.size;
    let ground = ProceduralTexture::new(spec.texture_seed);
    let changed = ProceduralTexture::new(spec.texture_seed.wrapping_add(0xdecade));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mpp = spec.meters_per_px;
    let half = (size as f64 - 1.0) / 2.0 * mpp;
    let to_m = |i: usize| i as f64 * mpp - half;
    let inside = |p: &Point| p.x.abs() <= half && p.y.abs() <= half;
    // The texture is defined in reference pixels.
    let tex = |t: &ProceduralTexture, x: f64, y: f64| t.eval(x / mpp, y / mpp);

    // Overlap check before any rendering.
    for k in 0..spec.transforms.len() {
        let step = (size / 64).max(1);
        let (mut hit, mut all) = (0usize, 0usize);
        for r in (0..size).step_by(step) {
            for c in (0..size).step_by(step) {
                all += 1;
                if inside(&spec.true_map(k, &Point::new(to_m(c), to_m(r)))) {
                    hit += 1;
                }
            }
        }
        let overlap = hit as f64 / all as f64;
        if overlap < 0.25 {
            return Err(Error::InfeasibleScenario(format!(
                "image {k} overlaps the reference by {:.0}% (< 25%)",
                100.0 * overlap
            )));
        }
    }

    let mut ref_px: Vec<f32> = (0..size * size).map(|i| tex(&ground, to_m(i % size), to_m(i / size))).collect();
    if let Some(d) = spec.decoy {
        // Reference pixels seen by image d.image.
        let inv = spec.transforms[d.image].inverse();
        let s = spec.drift(d.image);
        let eligible: Vec<bool> = (0..size * size)
            .map(|i| {
                let q = inv.apply(&Point::new(to_m(i % size), to_m(i / size)));
                inside(&Point::from(q.coords / s))
            })
            .collect();
        let mask = disk_mask(size, d.fraction, &eligible, &mut rng);
        for (i, px) in ref_px.iter_mut().enumerate() {
            if mask[i] {
                *px = tex(&ground, to_m(i % size) + d.offset.0, to_m(i / size) + d.offset.1);
            }
        }
    }
    let reference = ImageGrid::new(size, size, ref_px, mpp)?;

    let all = vec![true; size * size];
    let mut historical = Vec::with_capacity(spec.transforms.len());
    let mut ground_truth = Vec::with_capacity(spec.transforms.len());
    let c = spec.corruption;
    for k in 0..spec.transforms.len() {
        let occl = if c.occlusion > 0.0 {
            disk_mask(size, c.occlusion, &all, &mut rng)
        } else {
            vec![false; size * size]
        };
        let delta = if c.brightness > 0.0 {
            rng.random_range(-c.brightness..c.brightness) as f32
        } else {
            0.0
        };
        let noise = Normal::new(0.0, c.noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut px = Vec::with_capacity(size * size);
        for i in 0..size * size {
            let p = Point::new(to_m(i % size), to_m(i / size));
            let q = spec.true_map(k, &p);
            let base = if occl[i] { tex(&changed, q.x, q.y) } else { tex(&ground, q.x, q.y) };
            let n = if c.noise_sigma > 0.0 { noise.sample(&mut rng) as f32 } else { 0.0 };
            px.push((base + delta + n).clamp(0.0, 1.0));
        }
        historical.push(ImageGrid::new(size, size, px, mpp)?);

        let g = spec.gt_grid.max(1);
        let mut pairs = Vec::new();
        for gy in 0..g {
            for gx in 0..g {
                let f = |i: usize| if g == 1 { 0.0 } else { -0.8 * half + 1.6 * half * i as f64 / (g - 1) as f64 };
                let p = Point::new(f(gx), f(gy));
                let q = spec.true_map(k, &p);
                if inside(&q) {
                    pairs.push((p, q));
                }
            }
        }
        ground_truth.push(GroundTruthCorrespondences::new(pairs)?);
    }
    Ok(ScenarioImages {
        reference,
        historical,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_reference_copies() {
        let sc = SyntheticScenario::new(96, vec![RigidTransform::IDENTITY; 2], 7);
        let imgs = generate_scenario(&sc).unwrap();
        for h in &imgs.historical {
            assert_eq!(h.pixels(), imgs.reference.pixels());
        }
        for (p, q) in imgs.ground_truth[0].pairs() {
            assert_eq!(p, q);
        }
        assert_eq!(imgs.ground_truth[0].len(), 36);
    }

    #[test]
    fn shifted_view_is_a_crop() {
        let sc = SyntheticScenario::new(96, vec![RigidTransform::new(10.0, -3.0, 0.0)], 8);
        let imgs = generate_scenario(&sc).unwrap();
        let h = &imgs.historical[0];
        for r in 3..93 {
            for c in 0..86 {
                assert_eq!(h.get(c, r), imgs.reference.get(c + 10, r - 3));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut sc = SyntheticScenario::random(96, 3, 180.0, 20.0, 9);
        sc.corruption = Corruption {
            occlusion: 0.3,
            brightness: 0.1,
            noise_sigma: 0.05,
        };
        sc.decoy = Some(ReferenceDecoy {
            image: 1,
            fraction: 0.5,
            offset: (30.0, 0.0),
        });
        let a = generate_scenario(&sc).unwrap();
        let b = generate_scenario(&sc).unwrap();
        assert_eq!(a.reference.pixels(), b.reference.pixels());
        for (x, y) in a.historical.iter().zip(&b.historical) {
            assert_eq!(x.pixels(), y.pixels());
        }
        sc.seed += 1;
        let c = generate_scenario(&sc).unwrap();
        assert_ne!(a.historical[0].pixels(), c.historical[0].pixels());
    }

    #[test]
    fn occlusion_changes_the_requested_share() {
        let mut sc = SyntheticScenario::new(128, vec![RigidTransform::IDENTITY], 10);
        sc.corruption.occlusion = 0.3;
        let imgs = generate_scenario(&sc).unwrap();
        let changed = imgs.historical[0]
            .pixels()
            .iter()
            .zip(imgs.reference.pixels())
            .filter(|(a, b)| a != b)
            .count() as f64;
        let share = changed / (128.0 * 128.0);
        assert!((0.25..=0.31).contains(&share), "{share}");
    }

    #[test]
    fn infeasible_and_invalid_specs() {
        let far = SyntheticScenario::new(96, vec![RigidTransform::new(80.0, 0.0, 0.0)], 1);
        assert!(matches!(generate_scenario(&far), Err(Error::InfeasibleScenario(_))));
        let mut drift = SyntheticScenario::new(96, vec![RigidTransform::IDENTITY], 1);
        drift.scale_drift = vec![1.6];
        assert!(matches!(generate_scenario(&drift), Err(Error::InvalidInput(_))));
    }
}
