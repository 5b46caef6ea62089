//! Final registration to the reference: path selection, matching gated by
//! the rigid prior, RANSAC homographies and their concatenation.

mod ransac;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{
    descriptor_with_gradients, detect_dog_keypoints_with, similarity_from_distance, Descriptor, DogConfig,
    FeatureFrame, GradientField, ImageGrid, Match,
};
use crate::geometry::{compose_via_reference, Homography, Point, RigidTransform};
use crate::graph::{greedy_paths, GraphPath, RelationGraph};
use crate::groupwise::{GroupSolution, ImageGroup, RelationMask};

pub use ransac::{dlt_homography, ransac_homography, RansacConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedMatchConfig {
    /// Largest distance, in meters, between a prior-mapped a-position and a
    /// candidate b-position.
    pub position_threshold: f64,
    /// Scale ratios must lie strictly inside `(1 / max, max)`.
    pub scale_ratio_max: f64,
    pub ransac_iters: usize,
    pub ransac_inlier_threshold: f64,
    pub ransac_min_inliers: usize,
    pub rng_seed: u64,
    /// Descriptor support radius in multiples of the keypoint scale.
    pub descriptor_radius: f64,
    pub dog: DogConfig,
}

impl Default for GuidedMatchConfig {
    fn default() -> Self {
        Self {
            position_threshold: 500.0,
            scale_ratio_max: 1.4,
            ransac_iters: 2000,
            ransac_inlier_threshold: 5.0,
            ransac_min_inliers: 12,
            rng_seed: 0,
            descriptor_radius: 6.0,
            dog: DogConfig::default(),
        }
    }
}

impl GuidedMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.position_threshold > 0.0) || !(self.scale_ratio_max > 1.0) || !(self.descriptor_radius > 0.0) {
            return Err(Error::InvalidInput(format!("invalid guided matching config {self:?}")));
        }
        Ok(())
    }

    fn ransac(&self, seed: u64) -> RansacConfig {
        RansacConfig {
            iterations: self.ransac_iters,
            inlier_threshold: self.ransac_inlier_threshold,
            min_inliers: self.ransac_min_inliers,
            seed,
        }
    }

    /// Both gates, as applied during matching.
    pub fn admits(&self, prior: &RigidTransform, a: &FeatureFrame, b: &FeatureFrame) -> bool {
        let d = (prior.apply(&a.position()) - b.position()).norm();
        let ratio = b.sigma / a.sigma;
        d < self.position_threshold && ratio < self.scale_ratio_max && ratio > 1.0 / self.scale_ratio_max
    }
}

/// Keypoints of one image plus its gradient field, reusable across edges.
pub struct PreparedImage<'a> {
    image: &'a ImageGrid,
    grad: GradientField,
    keypoints: Vec<FeatureFrame>,
}

impl<'a> PreparedImage<'a> {
    pub fn new(image: &'a ImageGrid, cfg: &GuidedMatchConfig) -> Self {
        Self {
            image,
            grad: GradientField::of(image),
            keypoints: detect_dog_keypoints_with(image, &cfg.dog),
        }
    }

    pub fn keypoints(&self) -> &[FeatureFrame] {
        &self.keypoints
    }

    /// Descriptors at a fixed orientation; keypoints whose support leaves
    /// the image or has no gradient energy are dropped.
    fn describe(&self, theta: f64, radius: f64) -> Vec<(usize, Descriptor)> {
        self.keypoints
            .par_iter()
            .enumerate()
            .filter_map(|(i, kp)| {
                let frame = FeatureFrame {
                    sigma: kp.sigma * radius,
                    ..*kp
                };
                match descriptor_with_gradients(self.image, &self.grad, &frame, theta) {
                    Ok(d) if !d.is_zero() => Some((i, d)),
                    _ => None,
                }
            })
            .collect()
    }
}

/// Tentative correspondences between `img_a` and `img_b` under `prior`
/// (a-coordinates to b-coordinates).
pub fn guided_match(img_a: &ImageGrid, img_b: &ImageGrid, prior: &RigidTransform, cfg: &GuidedMatchConfig) -> Result<Vec<Match>> {
    cfg.validate()?;
    Ok(guided_match_prepared(&PreparedImage::new(img_a, cfg), &PreparedImage::new(img_b, cfg), prior, cfg))
}

/// As [`guided_match`] on prepared images. Descriptors in b are upright;
/// those in a are taken at `-γ`, the direction of b's x axis seen from a.
pub fn guided_match_prepared(a: &PreparedImage, b: &PreparedImage, prior: &RigidTransform, cfg: &GuidedMatchConfig) -> Vec<Match> {
    let desc_b = b.describe(0.0, cfg.descriptor_radius);
    let desc_a = a.describe(-prior.gamma(), cfg.descriptor_radius);
    if desc_a.is_empty() || desc_b.is_empty() {
        return Vec::new();
    }
    let cell = cfg.position_threshold;
    let key = |p: &Point| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, (ib, _)) in desc_b.iter().enumerate() {
        grid.entry(key(&b.keypoints[*ib].position())).or_default().push(j);
    }
    desc_a
        .par_iter()
        .filter_map(|(ia, da)| {
            let fa = &a.keypoints[*ia];
            let (cx, cy) = key(&prior.apply(&fa.position()));
            let mut best: Option<(f64, usize)> = None;
            for gx in cx - 1..=cx + 1 {
                for gy in cy - 1..=cy + 1 {
                    for &j in grid.get(&(gx, gy)).into_iter().flatten() {
                        let (ib, db) = &desc_b[j];
                        if !cfg.admits(prior, fa, &b.keypoints[*ib]) {
                            continue;
                        }
                        let d = da.distance(db);
                        if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                            best = Some((d, j));
                        }
                    }
                }
            }
            best.map(|(d, j)| {
                let ib = desc_b[j].0;
                Match {
                    index_a: *ia,
                    index_b: ib,
                    frame_a: *fa,
                    frame_b: b.keypoints[ib],
                    similarity: similarity_from_distance(d),
                }
            })
        })
        .collect()
}

/// Positions of `matches` as `(a, b)` pairs.
pub fn correspondence_points(matches: &[Match]) -> Vec<(Point, Point)> {
    matches.iter().map(|m| (m.frame_a.position(), m.frame_b.position())).collect()
}

/// Greedy paths from every image to `reference`, keyed by image node.
pub fn find_paths_to_reference(graph: &RelationGraph, reference: usize) -> Result<BTreeMap<usize, GraphPath>> {
    let paths = greedy_paths(graph, reference)?;
    Ok(paths.into_iter().enumerate().filter(|(k, _)| *k != reference).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistrationStatus {
    /// Every edge on the path fell back to its rigid relation.
    Rigid,
    /// Every edge was refined to a homography.
    Homography,
    /// Some edges were refined and some fell back.
    Flagged,
}

impl RegistrationStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Rigid => "rigid",
            Self::Homography => "homography",
            Self::Flagged => "flagged",
        }
    }

    /// Any fallback on the path.
    pub fn is_flagged(&self) -> bool {
        *self != Self::Homography
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub image: usize,
    pub status: RegistrationStatus,
    /// Historical image to reference, center-origin meters.
    pub homography: Homography,
    /// Smallest RANSAC inlier count along the path, 0 if any edge fell back.
    pub inlier_count: usize,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone)]
struct EdgeResult {
    homography: Homography,
    inliers: Option<usize>,
}

fn edge_seed(seed: u64, a: usize, b: usize) -> u64 {
    let mut h = seed ^ ((a as u64) << 32 | b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^ (h >> 31)
}

/// Relation graph over images `0..n` and the reference node `n`, weighted
/// by the inverse likelihood of the solved relations. Relations with zero
/// likelihood get no edge.
pub fn solution_graph(group: &ImageGroup, mask: &RelationMask, solution: &GroupSolution) -> Result<RelationGraph> {
    let n = group.len();
    if solution.transforms.len() != n || mask.len() != n {
        return Err(Error::InvalidInput("solution, mask and group sizes differ".into()));
    }
    let t = &solution.transforms;
    let mut g = RelationGraph::new(n + 1);
    for k in 0..n {
        let p = group.direct(k).lookup(&t[k]);
        if p > 0.0 {
            g.add_edge(k, n, 1.0 / p)?;
        }
        for l in k + 1..n {
            if !mask.get(k, l) {
                continue;
            }
            let p = group.pair(k, l).ok_or(Error::MissingSpace(k, l))?.lookup(&compose_via_reference(&t[k], &t[l]));
            if p > 0.0 {
                g.add_edge(k, l, 1.0 / p)?;
            }
        }
    }
    Ok(g)
}

/// Refines every image's rigid solution into a homography to the
/// reference. Failed edges fall back to their rigid relation.
pub fn register_to_reference(
    historical: &[ImageGrid],
    reference: &ImageGrid,
    group: &ImageGroup,
    mask: &RelationMask,
    solution: &GroupSolution,
    cfg: &GuidedMatchConfig,
) -> Result<Vec<Registration>> {
    cfg.validate()?;
    let n = historical.len();
    if group.len() != n {
        return Err(Error::InvalidInput(format!("{n} images for a group of {}", group.len())));
    }
    let graph = solution_graph(group, mask, solution)?;
    let paths = find_paths_to_reference(&graph, n)?;
    let hops: BTreeSet<(usize, usize)> = paths.values().flat_map(|p| p.hops().collect::<Vec<_>>()).collect();
    let nodes: BTreeSet<usize> = hops.iter().flat_map(|&(a, b)| [a, b]).collect();
    let image = |k: usize| if k == n { reference } else { &historical[k] };
    let transform = |k: usize| if k == n { RigidTransform::IDENTITY } else { solution.transforms[k] };
    let prepared: BTreeMap<usize, PreparedImage> = nodes
        .par_iter()
        .map(|&k| (k, PreparedImage::new(image(k), cfg)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let edges: BTreeMap<(usize, usize), EdgeResult> = hops
        .par_iter()
        .map(|&(a, b)| {
            let prior = compose_via_reference(&transform(a), &transform(b));
            let matches = guided_match_prepared(&prepared[&a], &prepared[&b], &prior, cfg);
            let pts = correspondence_points(&matches);
            let res = match ransac_homography(&pts, &cfg.ransac(edge_seed(cfg.rng_seed, a, b))) {
                Ok((h, mask)) => EdgeResult {
                    homography: h,
                    inliers: Some(mask.iter().filter(|&&m| m).count()),
                },
                Err(e) => {
                    log::warn!("edge {a} -> {b}: {e}; keeping the rigid relation");
                    EdgeResult {
                        homography: prior.into(),
                        inliers: None,
                    }
                }
            };
            ((a, b), res)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    paths
        .iter()
        .map(|(&k, path)| {
            let hops: Vec<(usize, usize)> = path.hops().collect();
            let h = concatenate_path(&hops, |a, b| edges[&(a, b)].homography)?;
            let (mut refined, mut failed, mut min_inl) = (0, 0, usize::MAX);
            for hop in &hops {
                match edges[hop].inliers {
                    Some(c) => {
                        refined += 1;
                        min_inl = min_inl.min(c);
                    }
                    None => failed += 1,
                }
            }
            let status = match (refined, failed) {
                (_, 0) => RegistrationStatus::Homography,
                (0, _) => RegistrationStatus::Rigid,
                _ => RegistrationStatus::Flagged,
            };
            Ok(Registration {
                image: k,
                status,
                homography: h,
                inlier_count: if failed > 0 { 0 } else { min_inl },
                path: path.nodes.clone(),
            })
        })
        .collect()
}

/// Composes edge homographies along `hops` (image first): the result maps
/// the first node's coordinates into the last node's.
pub fn concatenate_path(hops: &[(usize, usize)], edge: impl Fn(usize, usize) -> Homography) -> Result<Homography> {
    hops.iter().try_fold(Homography::identity(), |h, &(a, b)| edge(a, b).after(&h))
}

/// Writes `image_id,status,h11..h33,inlier_count` rows. `ids[k]` names image k.
pub fn write_registrations<W: Write>(records: &[Registration], ids: &[String], mut w: W) -> Result<()> {
    writeln!(w, "image_id,status,h11,h12,h13,h21,h22,h23,h31,h32,h33,inlier_count")?;
    for r in records {
        let id = ids.get(r.image).ok_or_else(|| Error::InvalidInput(format!("no id for image {}", r.image)))?;
        let h: Vec<String> = r.homography.to_row_major().iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{id},{},{},{}", r.status.as_str(), h.join(","), r.inlier_count)?;
    }
    Ok(())
}

/// Reads rows written by [`write_registrations`] as `(image_id, status,
/// homography, inlier_count)`.
pub fn read_registrations<R: std::io::Read>(r: R) -> Result<Vec<(String, RegistrationStatus, Homography, usize)>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let bad = |m: String| Error::format("homographies", format!("row {}: {m}", i + 1));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 12 {
            return Err(bad("expected 12 fields".into()));
        }
        let status = match &rec[1] {
            "rigid" => RegistrationStatus::Rigid,
            "homography" => RegistrationStatus::Homography,
            "flagged" => RegistrationStatus::Flagged,
            s => return Err(bad(format!("unknown status `{s}`"))),
        };
        let mut h = [0.0; 9];
        for (j, v) in h.iter_mut().enumerate() {
            *v = rec[j + 2].parse().map_err(|_| bad(format!("bad number `{}`", &rec[j + 2])))?;
        }
        let inliers = rec[11].parse().map_err(|_| bad(format!("bad count `{}`", &rec[11])))?;
        out.push((rec[0].to_string(), status, Homography::from_row_major(&h)?, inliers));
    }
    Ok(out)
}
