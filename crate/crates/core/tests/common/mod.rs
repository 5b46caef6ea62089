//! Oracles and scenario builders shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use groupreg::geometry::{compose_via_reference, RigidTransform};
use groupreg::groupwise::ImageGroup;
use groupreg::harness::scenario::{Corruption, ReferenceDecoy, SyntheticScenario};
use groupreg::harness::PipelineConfig;
use groupreg::hough::{HoughParams, HoughSpace};

/// Dense materialization of a space: raw accumulator on a padded grid,
/// brute-force 2-D convolution, bilinear and rotation interpolation.
pub struct DenseSpace {
    lo: i32,
    n: usize,
    pub smoothed: Vec<Vec<f64>>,
    pub raw_mass: Vec<f64>,
    params: HoughParams,
}

impl DenseSpace {
    /// `half` bounds the stored bin indices, `|ix|, |iy| <= half`.
    pub fn build(h: &HoughSpace, half: i32) -> Self {
        let params = *h.params();
        let k = params.kernel();
        let r = k.radius();
        let lo = -half - r - 1;
        let n = (2 * half + 1 + 2 * (r + 1)) as usize;
        let mut raw = vec![vec![0.0; n * n]; params.rot_bins];
        for (ix, iy, ig, m) in h.records() {
            raw[ig][((iy - lo) as usize) * n + (ix - lo) as usize] += m;
        }
        let mut smoothed = vec![vec![0.0; n * n]; params.rot_bins];
        for ig in 0..params.rot_bins {
            for y in 0..n as i32 {
                for x in 0..n as i32 {
                    let mut acc = 0.0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (sx, sy) = (x - dx, y - dy);
                            if sx < 0 || sy < 0 || sx >= n as i32 || sy >= n as i32 {
                                continue;
                            }
                            acc += raw[ig][(sy as usize) * n + sx as usize] * k.at(dx) * k.at(dy);
                        }
                    }
                    smoothed[ig][(y as usize) * n + x as usize] = acc;
                }
            }
        }
        let raw_mass = raw.iter().map(|b| b.iter().sum()).collect();
        Self {
            lo,
            n,
            smoothed,
            raw_mass,
            params,
        }
    }

    pub fn cell(&self, ig: usize, ix: i32, iy: i32) -> f64 {
        let (x, y) = (ix - self.lo, iy - self.lo);
        if x < 0 || y < 0 || x >= self.n as i32 || y >= self.n as i32 {
            return 0.0;
        }
        self.smoothed[ig][(y as usize) * self.n + x as usize]
    }

    /// Bilinear read at translation `(x, y)` in meters.
    pub fn bilinear(&self, ig: usize, x: f64, y: f64) -> f64 {
        let (x, y) = (x / self.params.trans_bin, y / self.params.trans_bin);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as i32, y0 as i32);
        (1.0 - fx) * (1.0 - fy) * self.cell(ig, x0, y0)
            + fx * (1.0 - fy) * self.cell(ig, x0 + 1, y0)
            + (1.0 - fx) * fy * self.cell(ig, x0, y0 + 1)
            + fx * fy * self.cell(ig, x0 + 1, y0 + 1)
    }

    /// Lower bin, upper bin and upper weight of rotation `gamma`.
    pub fn split(&self, gamma: f64) -> (usize, usize, f64) {
        let b = self.params.rot_bins;
        let u = gamma.rem_euclid(TAU) / (TAU / b as f64);
        let lo = u.floor();
        let f = u - lo;
        let lo = lo as usize % b;
        (lo, (lo + 1) % b, f)
    }

    pub fn lookup(&self, t: &RigidTransform) -> f64 {
        if !self.params.in_extent(t.vx, t.vy) {
            return 0.0;
        }
        let (lo, hi, f) = self.split(t.gamma());
        (1.0 - f) * self.bilinear(lo, t.vx, t.vy) + f * self.bilinear(hi, t.vx, t.vy)
    }

    /// Per-bin maximum of the smoothed field, normalized.
    pub fn rotation_probs(&self) -> Vec<f64> {
        let maxes: Vec<f64> = self.smoothed.iter().map(|b| b.iter().cloned().fold(0.0, f64::max)).collect();
        let s: f64 = maxes.iter().sum();
        maxes.into_iter().map(|m| m / s).collect()
    }

    /// Renormalized slice at `gamma`, read at translation `(x, y)`.
    pub fn translation(&self, gamma: f64, x: f64, y: f64) -> f64 {
        if !self.params.in_extent(x, y) {
            return 0.0;
        }
        let (lo, hi, f) = self.split(gamma);
        let mass = (1.0 - f) * self.raw_mass[lo] + f * self.raw_mass[hi];
        ((1.0 - f) * self.bilinear(lo, x, y) + f * self.bilinear(hi, x, y)) / mass
    }
}

/// Grid nodes of one image: integer translations in `[-half, half]²` and
/// every rotation bin angle.
pub fn grid_nodes(half: i32, rot_bins: usize) -> Vec<RigidTransform> {
    let step = TAU / rot_bins as f64;
    let mut out = Vec::new();
    for ig in 0..rot_bins {
        for iy in -half..=half {
            for ix in -half..=half {
                out.push(RigidTransform::new(ix as f64, iy as f64, ig as f64 * step));
            }
        }
    }
    out
}

/// Full objective evaluated term by term, independently of the solver code.
pub fn objective(group: &ImageGroup, t: &[RigidTransform]) -> f64 {
    let n = t.len();
    let mut f: f64 = (0..n).map(|k| group.direct(k).lookup(&t[k])).sum();
    for k in 0..n {
        for l in 0..n {
            if k != l {
                f += group.pair(k, l).unwrap().lookup(&compose_via_reference(&t[k], &t[l]));
            }
        }
    }
    f
}

/// Brute-force maximum of the objective over `nodes³` for three images.
pub fn exhaustive_max_naive(group: &ImageGroup, nodes: &[RigidTransform]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for a in nodes {
        for b in nodes {
            for c in nodes {
                best = best.max(objective(group, &[*a, *b, *c]));
            }
        }
    }
    best
}

/// Exact maximum of the three-image objective over `nodes³` by branch and
/// bound. Every lookup is bounded by the space's smoothed maximum, which
/// also bounds its bilinear and rotation interpolations.
pub fn exhaustive_max_bnb(group: &ImageGroup, nodes: &[RigidTransform]) -> (f64, [RigidTransform; 3]) {
    assert_eq!(group.len(), 3);
    let peak = |h: &HoughSpace| h.argmax().map_or(0.0, |(_, v)| v);
    let pmax = |k: usize, l: usize| peak(group.pair(k, l).unwrap());
    let p = |k: usize, l: usize, a: &RigidTransform, b: &RigidTransform| group.pair(k, l).unwrap().lookup(&compose_via_reference(a, b));
    let direct: Vec<Vec<(f64, usize)>> = (0..3)
        .map(|k| {
            let mut v: Vec<(f64, usize)> = nodes.iter().enumerate().map(|(i, t)| (group.direct(k).lookup(t), i)).collect();
            v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            v
        })
        .collect();
    let dmax: Vec<f64> = direct.iter().map(|v| v[0].0).collect();
    let rest01 = pmax(0, 1) + pmax(1, 0);
    let rest2 = pmax(0, 2) + pmax(2, 0) + pmax(1, 2) + pmax(2, 1);

    let mut best = f64::NEG_INFINITY;
    let mut arg = [RigidTransform::IDENTITY; 3];
    for &(d0, i0) in &direct[0] {
        if d0 + dmax[1] + dmax[2] + rest01 + rest2 <= best {
            break;
        }
        let t0 = nodes[i0];
        for &(d1, i1) in &direct[1] {
            if d0 + d1 + dmax[2] + rest01 + rest2 <= best {
                break;
            }
            let t1 = nodes[i1];
            let part = d0 + d1 + p(0, 1, &t0, &t1) + p(1, 0, &t1, &t0);
            if part + dmax[2] + rest2 <= best {
                continue;
            }
            for &(d2, i2) in &direct[2] {
                if part + d2 + rest2 <= best {
                    break;
                }
                let t2 = nodes[i2];
                let f = part + d2 + p(0, 2, &t0, &t2) + p(2, 0, &t2, &t0) + p(1, 2, &t1, &t2) + p(2, 1, &t2, &t1);
                if f > best {
                    best = f;
                    arg = [t0, t1, t2];
                }
            }
        }
    }
    (best, arg)
}

/// Desk-scale pipeline settings used by the image-based criteria.
pub fn desk() -> PipelineConfig {
    PipelineConfig::desk()
}

/// N = 5, 512 px, 30% occlusion, rotations up to 180°, shifts up to 150 px.
pub fn planted_five(seed: u64) -> SyntheticScenario {
    let mut sc = SyntheticScenario::random(512, 5, 180.0, 150.0, seed);
    sc.corruption = Corruption {
        occlusion: 0.3,
        brightness: 0.05,
        noise_sigma: 0.02,
    };
    sc
}

/// Four images; the reference under image 3 is mostly replaced by shifted
/// ground, while image 3 stays clean against its siblings.
pub fn decoyed_four(seed: u64) -> SyntheticScenario {
    let t = vec![
        RigidTransform::from_degrees(-150.0, -160.0, 40.0),
        RigidTransform::from_degrees(-170.0, 150.0, 200.0),
        RigidTransform::from_degrees(-220.0, 0.0, 120.0),
        RigidTransform::from_degrees(200.0, 20.0, 60.0),
    ];
    let mut sc = SyntheticScenario::new(512, t, seed);
    sc.decoy = Some(ReferenceDecoy {
        image: 3,
        fraction: 0.8,
        offset: (90.0, 70.0),
    });
    sc
}

pub fn errors(est: &RigidTransform, truth: &RigidTransform) -> (f64, f64) {
    groupreg::eval::rigid_component_errors(est, truth)
}

/// Quantization of the small exhaustive-search spaces.
pub fn small_params() -> HoughParams {
    HoughParams {
        extent: 8.0,
        smoothing_sigma: 1.5,
        ..HoughParams::default()
    }
}

/// Three images planted on grid nodes, with composites inside the extent.
pub fn small_group(seed: u64) -> (ImageGroup, Vec<RigidTransform>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let step = TAU / 18.0;
    let t: Vec<RigidTransform> = (0..3)
        .map(|_| {
            RigidTransform::new(
                rng.random_range(-2..=2) as f64,
                rng.random_range(-2..=2) as f64,
                rng.random_range(0..18) as f64 * step,
            )
        })
        .collect();
    let mut pv = groupreg::harness::votes::PlantedVotes::new(t.clone(), seed);
    pv.spread = 100.0;
    pv.inliers = 200;
    pv.outliers = 400;
    pv.position_noise = 0.7;
    pv.orientation_noise = 0.05;
    (pv.build_group(&small_params()).unwrap(), t)
}
