//! Normalized DLT and RANSAC homography estimation.

use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Homography, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Reprojection distance in meters below which a pair is an inlier.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            inlier_threshold: 5.0,
            min_inliers: 12,
            seed: 0,
        }
    }
}

/// Similarity that moves the centroid to the origin and the mean distance
/// to √2.
fn normalizer(pts: &[Point]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(m: &Matrix3<f64>, p: &Point) -> (f64, f64) {
    let q = m * nalgebra::Vector3::new(p.x, p.y, 1.0);
    (q.x / q.z, q.y / q.z)
}

/// Direct linear transform with Hartley normalization over `pairs`
/// (`a → b`), at least 4 of them.
pub fn dlt_homography(pairs: &[(Point, Point)]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(Error::InvalidInput(format!("homography needs 4 correspondences, got {}", pairs.len())));
    }
    let a: Vec<Point> = pairs.iter().map(|p| p.0).collect();
    let b: Vec<Point> = pairs.iter().map(|p| p.1).collect();
    let (na, nb) = (normalizer(&a), normalizer(&b));
    // At least 9 rows so the SVD yields the full right singular basis.
    let rows = (2 * pairs.len()).max(9);
    let mut m = DMatrix::<f64>::zeros(rows, 9);
    for (i, (pa, pb)) in a.iter().zip(&b).enumerate() {
        let (x, y) = apply(&na, pa);
        let (u, v) = apply(&nb, pb);
        let r = 2 * i;
        m.row_mut(r).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
        m.row_mut(r + 1).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::RansacFailed("SVD did not converge".into()))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nine singular values");
    let h = vt.row(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let nb_inv = nb.try_inverse().ok_or(Error::SingularHomography { det: 0.0 })?;
    Homography::new(nb_inv * hn * na)
}

fn reprojection_error(h: &Homography, a: &Point, b: &Point) -> f64 {
    let q = h.apply(a);
    let d = (q - b).norm();
    if d.is_finite() {
        d
    } else {
        f64::INFINITY
    }
}

fn inlier_mask(h: &Homography, pairs: &[(Point, Point)], threshold: f64) -> Vec<bool> {
    pairs.iter().map(|(a, b)| reprojection_error(h, a, b) < threshold).collect()
}

/// Three of the four sample points on one line make the hypothesis
/// degenerate.
fn degenerate(pts: &[Point]) -> bool {
    let scale = pts.iter().map(|p| p.coords.norm()).fold(1.0, f64::max);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            for k in j + 1..pts.len() {
                let u = pts[j] - pts[i];
                let v = pts[k] - pts[i];
                if (u.x * v.y - u.y * v.x).abs() <= 1e-9 * scale * scale {
                    return true;
                }
            }
        }
    }
    false
}

/// RANSAC over 4-point DLT hypotheses; the winner is re-estimated on its
/// inliers until the inlier set is stable. The returned mask is evaluated
/// under the returned homography.
pub fn ransac_homography(pairs: &[(Point, Point)], cfg: &RansacConfig) -> Result<(Homography, Vec<bool>)> {
    if pairs.len() < 4 {
        return Err(Error::RansacFailed(format!("{} correspondences, need at least 4", pairs.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Homography)> = None;
    for _ in 0..cfg.iterations.max(1) {
        let idx = sample(&mut rng, pairs.len(), 4);
        let s: Vec<(Point, Point)> = idx.iter().map(|i| pairs[i]).collect();
        let sa: Vec<Point> = s.iter().map(|p| p.0).collect();
        let sb: Vec<Point> = s.iter().map(|p| p.1).collect();
        if degenerate(&sa) || degenerate(&sb) {
            continue;
        }
        let Ok(h) = dlt_homography(&s) else { continue };
        let count = inlier_mask(&h, pairs, cfg.inlier_threshold).iter().filter(|&&m| m).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, h));
        }
    }
    let Some((_, mut h)) = best else {
        return Err(Error::RansacFailed("no non-degenerate sample".into()));
    };
    let mut mask = inlier_mask(&h, pairs, cfg.inlier_threshold);
    for _ in 0..10 {
        let inl: Vec<(Point, Point)> = pairs.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
        if inl.len() < 4 {
            break;
        }
        let Ok(h2) = dlt_homography(&inl) else { break };
        let mask2 = inlier_mask(&h2, pairs, cfg.inlier_threshold);
        let (n1, n2) = (mask.iter().filter(|&&m| m).count(), mask2.iter().filter(|&&m| m).count());
        if n2 < n1 {
            break;
        }
        let stable = mask2 == mask;
        h = h2;
        mask = mask2;
        if stable {
            break;
        }
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count < cfg.min_inliers.max(4) {
        return Err(Error::RansacFailed(format!("{count} inliers, need {}", cfg.min_inliers)));
    }
    Ok((h, mask))
}
