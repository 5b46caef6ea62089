use std::collections::HashMap;
use std::f64::consts::TAU;

use super::plane::{Cell, Kernel, PlanePeak, SparsePlane};
use crate::error::{Error, Result};
use crate::features::{Match, MatchSet};
use crate::geometry::{rotate, wrap_angle, RigidTransform};

/// Quantization and smoothing constants of a voting space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughParams {
    /// Translation quantization interval in meters.
    pub trans_bin: f64,
    pub rot_bins: usize,
    /// Half-width of the translation domain per axis, in meters.
    pub extent: f64,
    /// Standard deviation of the translation smoothing kernel, in meters.
    pub smoothing_sigma: f64,
    /// Kernel truncation in units of `smoothing_sigma`.
    pub truncate: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            trans_bin: 1.0,
            rot_bins: 18,
            extent: 5000.0,
            smoothing_sigma: 5.0,
            truncate: 3.0,
        }
    }
}

impl HoughParams {
    pub fn rot_step(&self) -> f64 {
        TAU / self.rot_bins as f64
    }

    pub fn kernel(&self) -> Kernel {
        Kernel::gaussian(self.smoothing_sigma / self.trans_bin, self.truncate)
    }

    /// Largest in-extent translation bin index.
    pub fn max_index(&self) -> i32 {
        (self.extent / self.trans_bin + 1e-9).floor() as i32
    }

    pub fn in_extent(&self, vx: f64, vy: f64) -> bool {
        vx.abs() <= self.extent && vy.abs() <= self.extent
    }

    /// Lower rotation bin and interpolation weight of the upper one.
    #[inline]
    pub fn rot_split(&self, gamma: f64) -> (usize, usize, f64) {
        let u = wrap_angle(gamma) / self.rot_step();
        let lo = u.floor();
        let f = u - lo;
        let lo = (lo as usize) % self.rot_bins;
        (lo, (lo + 1) % self.rot_bins, f)
    }

    pub fn bin_angle(&self, ig: usize) -> f64 {
        ig as f64 * self.rot_step()
    }
}

/// Normalized sparse 3-D voting space over `(vx, vy, gamma)`.
///
/// Rotation bin `ig` represents angle `ig * 2π / rot_bins`; translation bin
/// `(ix, iy)` represents `(ix, iy) * trans_bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoughSpace {
    params: HoughParams,
    planes: Vec<SparsePlane>,
    kernel: Kernel,
    /// Vote mass accumulated before normalization.
    total_mass: f64,
}

/// Rigid transform voted for by a single match: rotation `θb - θa`,
/// translation `pb - R(γ) pa`. Applying it maps frame a's position onto
/// frame b's.
pub fn vote_from_match(m: &Match) -> RigidTransform {
    let gamma = m.frame_b.theta - m.frame_a.theta;
    let pa = nalgebra::Vector2::new(m.frame_a.x, m.frame_a.y);
    let v = nalgebra::Vector2::new(m.frame_b.x, m.frame_b.y) - rotate(&pa, gamma);
    RigidTransform::new(v.x, v.y, gamma)
}

/// Keeps only the highest-similarity match per (zone in a, zone in b) pair.
/// Input order decides ties, so pass matches sorted by similarity.
pub fn zone_filter(matches: &[Match], zoning_cell: f64) -> Vec<Match> {
    if zoning_cell <= 0.0 {
        return matches.to_vec();
    }
    let zone = |x: f64, y: f64| ((x / zoning_cell).floor() as i64, (y / zoning_cell).floor() as i64);
    let mut best: HashMap<(i64, i64, i64, i64), usize> = HashMap::new();
    for (i, m) in matches.iter().enumerate() {
        let za = zone(m.frame_a.x, m.frame_a.y);
        let zb = zone(m.frame_b.x, m.frame_b.y);
        best.entry((za.0, za.1, zb.0, zb.1))
            .and_modify(|j| {
                if m.similarity > matches[*j].similarity {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| matches[i]).collect()
}

/// Accumulates zoned votes into a normalized space.
pub fn build_hough_space(matches: &MatchSet, zoning_cell: f64, params: &HoughParams) -> Result<HoughSpace> {
    if matches.is_empty() {
        return Err(Error::InvalidInput("cannot build a Hough space from no matches".into()));
    }
    if params.rot_bins == 0 || !(params.trans_bin > 0.0) {
        return Err(Error::InvalidInput(format!("invalid Hough parameters {params:?}")));
    }
    let zoned = zone_filter(matches.as_slice(), zoning_cell);
    let mut per_bin: Vec<Vec<Cell>> = vec![Vec::new(); params.rot_bins];
    let mut total = 0.0;
    for m in &zoned {
        let t = vote_from_match(m);
        if !params.in_extent(t.vx, t.vy) {
            continue;
        }
        let ix = (t.vx / params.trans_bin).round() as i32;
        let iy = (t.vy / params.trans_bin).round() as i32;
        let (lo, hi, f) = params.rot_split(t.gamma());
        for (ig, w) in [(lo, 1.0 - f), (hi, f)] {
            let mass = m.similarity * w;
            if mass > 0.0 {
                per_bin[ig].push(Cell { ix, iy, mass });
                total += mass;
            }
        }
    }
    if total <= 0.0 {
        return Err(Error::EmptyEstimator);
    }
    let planes = per_bin
        .into_iter()
        .map(|cells| {
            SparsePlane::from_cells(cells.into_iter().map(|c| Cell {
                mass: c.mass / total,
                ..c
            }))
        })
        .collect();
    Ok(HoughSpace {
        params: *params,
        planes,
        kernel: params.kernel(),
        total_mass: total,
    })
}

impl HoughSpace {
    /// Assembles a space from already-normalized `(ix, iy, ig, mass)` records.
    pub fn from_records(
        params: HoughParams,
        total_mass: f64,
        records: impl IntoIterator<Item = (i32, i32, usize, f64)>,
    ) -> Result<Self> {
        let mut per_bin: Vec<Vec<Cell>> = vec![Vec::new(); params.rot_bins];
        let lim = params.max_index();
        for (ix, iy, ig, mass) in records {
            if ig >= params.rot_bins || ix.abs() > lim || iy.abs() > lim || !(mass > 0.0) {
                return Err(Error::format(
                    "hough space",
                    format!("record ({ix}, {iy}, {ig}, {mass}) violates the space bounds"),
                ));
            }
            per_bin[ig].push(Cell { ix, iy, mass });
        }
        Ok(Self {
            params,
            planes: per_bin.into_iter().map(SparsePlane::from_cells).collect(),
            kernel: params.kernel(),
            total_mass,
        })
    }

    pub fn params(&self) -> &HoughParams {
        &self.params
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub(crate) fn plane(&self, ig: usize) -> &SparsePlane {
        &self.planes[ig]
    }

    /// All stored `(ix, iy, ig, mass)` entries in canonical order.
    pub fn records(&self) -> impl Iterator<Item = (i32, i32, usize, f64)> + '_ {
        self.planes
            .iter()
            .enumerate()
            .flat_map(|(ig, p)| p.cells().iter().map(move |c| (c.ix, c.iy, ig, c.mass)))
    }

    pub fn entry_count(&self) -> usize {
        self.planes.iter().map(|p| p.cells().len()).sum()
    }

    pub fn stored_mass(&self) -> f64 {
        self.planes.iter().map(SparsePlane::total_mass).sum()
    }

    /// Probability of transform `t`: Gaussian-smoothed in translation,
    /// linearly interpolated between the two adjacent rotation bins.
    /// Zero outside the translation extent.
    pub fn lookup(&self, t: &RigidTransform) -> f64 {
        if !self.params.in_extent(t.vx, t.vy) {
            return 0.0;
        }
        let x = t.vx / self.params.trans_bin;
        let y = t.vy / self.params.trans_bin;
        let (lo, hi, f) = self.params.rot_split(t.gamma());
        let mut v = 0.0;
        if f < 1.0 {
            v += (1.0 - f) * self.planes[lo].lookup(&self.kernel, x, y);
        }
        if f > 0.0 {
            v += f * self.planes[hi].lookup(&self.kernel, x, y);
        }
        v
    }

    /// Per rotation bin, the maximum of the smoothed translation field.
    pub fn bin_peaks(&self) -> Vec<Option<PlanePeak>> {
        self.planes.iter().map(|p| p.smoothed_max(&self.kernel)).collect()
    }

    /// Most likely transform over all bins, with its smoothed value.
    pub fn argmax(&self) -> Option<(RigidTransform, f64)> {
        best_of_peaks(&self.params, &self.bin_peaks())
    }
}

pub(crate) fn best_of_peaks(params: &HoughParams, peaks: &[Option<PlanePeak>]) -> Option<(RigidTransform, f64)> {
    let mut best: Option<(usize, PlanePeak)> = None;
    for (ig, p) in peaks.iter().enumerate() {
        if let Some(p) = p {
            if best.is_none_or(|(_, b)| p.value > b.value) {
                best = Some((ig, *p));
            }
        }
    }
    best.map(|(ig, p)| {
        (
            RigidTransform::new(
                p.ix as f64 * params.trans_bin,
                p.iy as f64 * params.trans_bin,
                params.bin_angle(ig),
            ),
            p.value,
        )
    })
}
