//! Topology-matching baseline: pairwise distance-ratio matching and RANSAC,
//! a graph weighted by inverse inlier counts, and all-pairs shortest paths
//! to the reference.

use rayon::prelude::*;

use crate::error::Result;
use crate::features::{dense_sample, distance_ratio_match, FeatureSet, ImageGrid};
use crate::geometry::Homography;
use crate::guided::{correspondence_points, ransac_homography, RansacConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Distance-ratio threshold.
    pub tau: f64,
    /// Dense sampling step, meters.
    pub step: f64,
    /// Descriptor support diameter, meters.
    pub support: f64,
    pub ransac: RansacConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            tau: 1.0 / 1.3,
            step: 40.0,
            support: 360.0,
            ransac: RansacConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    /// Image k to reference; `None` when no path exists.
    pub homographies: Vec<Option<Homography>>,
    /// Node sequence from image k to the reference (node `n`).
    pub paths: Vec<Option<Vec<usize>>>,
    /// RANSAC inlier count per unordered pair `(a, b)`, `a < b`.
    pub inliers: Vec<((usize, usize), usize)>,
}

impl BaselineResult {
    pub fn failed(&self) -> Vec<usize> {
        (0..self.homographies.len()).filter(|&k| self.homographies[k].is_none()).collect()
    }
}

/// Registers every historical image to the reference through the most
/// confident chain of pairwise homographies. Images without a chain are
/// reported as failed rather than as an error.
pub fn topology_baseline(historical: &[ImageGrid], reference: &ImageGrid, cfg: &BaselineConfig) -> Result<BaselineResult> {
    let n = historical.len();
    let images: Vec<&ImageGrid> = historical.iter().chain(std::iter::once(reference)).collect();
    let feats: Vec<FeatureSet> = images
        .par_iter()
        .map(|img| dense_sample(img, cfg.step, cfg.support))
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b))).collect();
    let seed = |a: usize, b: usize| cfg.ransac.seed ^ ((a as u64) << 32 | b as u64);
    let fitted: Vec<((usize, usize), Option<(Homography, usize)>)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let m = distance_ratio_match(&feats[a], &feats[b], cfg.tau);
            let r = RansacConfig {
                seed: seed(a, b),
                ..cfg.ransac
            };
            let fit = ransac_homography(&correspondence_points(&m), &r)
                .ok()
                .map(|(h, mask)| (h, mask.iter().filter(|&&x| x).count()));
            ((a, b), fit)
        })
        .collect();

    let nodes = n + 1;
    let mut dist = vec![vec![f64::INFINITY; nodes]; nodes];
    let mut next = vec![vec![usize::MAX; nodes]; nodes];
    let mut edge: Vec<Vec<Option<Homography>>> = vec![vec![None; nodes]; nodes];
    for i in 0..nodes {
        dist[i][i] = 0.0;
        next[i][i] = i;
    }
    for &((a, b), ref fit) in &fitted {
        if let Some((h, count)) = fit {
            let Ok(inv) = h.inverse() else { continue };
            let w = 1.0 / *count as f64;
            dist[a][b] = w;
            dist[b][a] = w;
            next[a][b] = b;
            next[b][a] = a;
            edge[a][b] = Some(*h);
            edge[b][a] = Some(inv);
        }
    }
    for k in 0..nodes {
        for i in 0..nodes {
            for j in 0..nodes {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                    next[i][j] = next[i][k];
                }
            }
        }
    }
    let mut homographies = Vec::with_capacity(n);
    let mut paths = Vec::with_capacity(n);
    for k in 0..n {
        if !dist[k][n].is_finite() {
            homographies.push(None);
            paths.push(None);
            continue;
        }
        let mut path = vec![k];
        let mut h = Homography::identity();
        let mut ok = true;
        while *path.last().unwrap() != n {
            let u = *path.last().unwrap();
            let v = next[u][n];
            match edge[u][v].map(|e| e.after(&h)) {
                Some(Ok(c)) => h = c,
                _ => {
                    ok = false;
                    break;
                }
            }
            path.push(v);
        }
        homographies.push(ok.then_some(h));
        paths.push(ok.then_some(path));
    }
    let inliers = fitted.iter().filter_map(|(p, f)| f.map(|(_, c)| (*p, c))).collect();
    Ok(BaselineResult {
        homographies,
        paths,
        inliers,
    })
}
