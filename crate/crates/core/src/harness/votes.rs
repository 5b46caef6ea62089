//! Vote-level synthetic groups: feature matches generated directly from
//! planted transforms, without rendering images.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::features::{FeatureFrame, Match, MatchSet};
use crate::geometry::{wrap_angle, Point, RigidTransform};
use crate::groupwise::ImageGroup;
use crate::hough::HoughParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedVotes {
    /// Image k → reference.
    pub transforms: Vec<RigidTransform>,
    /// Correct matches per relation.
    pub inliers: usize,
    /// Uniform random votes inside the extent per relation.
    pub outliers: usize,
    /// Images whose direct relation gets no correct matches.
    pub broken_direct: Vec<usize>,
    /// Half-width of the square where world points are drawn, meters.
    pub spread: f64,
    pub position_noise: f64,
    pub orientation_noise: f64,
    pub seed: u64,
}

impl PlantedVotes {
    pub fn new(transforms: Vec<RigidTransform>, seed: u64) -> Self {
        Self {
            transforms,
            inliers: 300,
            outliers: 600,
            broken_direct: Vec::new(),
            spread: 400.0,
            position_noise: 0.0,
            orientation_noise: 0.0,
            seed,
        }
    }

    /// Direct match sets (image k ↔ reference) and pair match sets (k < l).
    pub fn matches(&self, params: &HoughParams) -> (Vec<MatchSet>, BTreeMap<(usize, usize), MatchSet>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.transforms.len();
        let inv: Vec<RigidTransform> = self.transforms.iter().map(RigidTransform::inverse).collect();
        let pos_noise = Normal::new(0.0, self.position_noise.max(0.0)).unwrap();
        let rot_noise = Normal::new(0.0, self.orientation_noise.max(0.0)).unwrap();
        let mut counter = 0usize;
        let frame = |rng: &mut ChaCha8Rng, p: Point, theta: f64| FeatureFrame {
            x: p.x + pos_noise.sample(rng),
            y: p.y + pos_noise.sample(rng),
            sigma: 10.0,
            theta: wrap_angle(theta + rot_noise.sample(rng)),
        };
        let mut relation = |rng: &mut ChaCha8Rng, a: Option<usize>, b: Option<usize>, inliers: usize| -> MatchSet {
            let mut out = Vec::with_capacity(inliers + self.outliers);
            for _ in 0..inliers {
                let world = Point::new(rng.random_range(-self.spread..self.spread), rng.random_range(-self.spread..self.spread));
                let phi = rng.random_range(0.0..TAU);
                let local = |img: Option<usize>| match img {
                    Some(k) => (inv[k].apply(&world), phi - self.transforms[k].gamma()),
                    None => (world, phi),
                };
                let (pa, ta) = local(a);
                let (pb, tb) = local(b);
                let fa = frame(rng, pa, ta);
                let fb = frame(rng, pb, tb);
                out.push(mk(&mut counter, fa, fb, rng.random_range(0.5..1.0)));
            }
            let e = params.extent;
            for _ in 0..self.outliers {
                let t = RigidTransform::new(rng.random_range(-e..e), rng.random_range(-e..e), rng.random_range(0.0..TAU));
                let pa = Point::new(rng.random_range(-self.spread..self.spread), rng.random_range(-self.spread..self.spread));
                let ta = rng.random_range(0.0..TAU);
                let fa = FeatureFrame { x: pa.x, y: pa.y, sigma: 10.0, theta: ta };
                let pb = t.apply(&pa);
                let fb = FeatureFrame { x: pb.x, y: pb.y, sigma: 10.0, theta: wrap_angle(ta + t.gamma()) };
                out.push(mk(&mut counter, fa, fb, rng.random_range(0.5..1.0)));
            }
            MatchSet::from_matches(out)
        };
        let direct = (0..n)
            .map(|k| {
                let inl = if self.broken_direct.contains(&k) { 0 } else { self.inliers };
                relation(&mut rng, Some(k), None, inl)
            })
            .collect();
        let mut pairs = BTreeMap::new();
        for k in 0..n {
            for l in k + 1..n {
                pairs.insert((k, l), relation(&mut rng, Some(k), Some(l), self.inliers));
            }
        }
        (direct, pairs)
    }

    /// Builds the group of voting spaces. Zoning is disabled, since the
    /// generated frames carry no image layout.
    pub fn build_group(&self, params: &HoughParams) -> Result<ImageGroup> {
        let (direct, pairs) = self.matches(params);
        ImageGroup::from_matches(&direct, &pairs, 0.0, params)
    }
}

fn mk(counter: &mut usize, fa: FeatureFrame, fb: FeatureFrame, similarity: f64) -> Match {
    *counter += 1;
    Match {
        index_a: *counter,
        index_b: *counter,
        frame_a: fa,
        frame_b: fb,
        similarity,
    }
}
