use nalgebra::Vector2;

use super::plane::{Cell, Kernel, PlanePeak, SparsePlane};
use super::space::{HoughParams, HoughSpace};
use crate::error::{Error, Result};

/// Rotation-only estimator: per bin, the translation-max of the smoothed space.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationEstimator {
    probs: Vec<f64>,
    rot_step: f64,
}

impl RotationEstimator {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || !(sum > 0.0) || probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::EmptyEstimator);
        }
        let rot_step = std::f64::consts::TAU / probs.len() as f64;
        Ok(Self {
            probs: probs.into_iter().map(|p| p / sum).collect(),
            rot_step,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Linear interpolation between adjacent bins, wrapping around 2π.
    pub fn lookup(&self, gamma: f64) -> f64 {
        let n = self.probs.len();
        let u = crate::geometry::wrap_angle(gamma) / self.rot_step;
        let lo = u.floor();
        let f = u - lo;
        let lo = lo as usize % n;
        (1.0 - f) * self.probs[lo] + f * self.probs[(lo + 1) % n]
    }

    /// Most probable bin angle and its probability; lowest bin on ties.
    pub fn argmax(&self) -> (f64, f64) {
        let (i, p) = self
            .probs
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
        (i as f64 * self.rot_step, p)
    }
}

pub fn rotation_estimator(h: &HoughSpace) -> RotationEstimator {
    let peaks = h.bin_peaks();
    rotation_estimator_from_peaks(&peaks)
}

pub(crate) fn rotation_estimator_from_peaks(peaks: &[Option<PlanePeak>]) -> RotationEstimator {
    let probs: Vec<f64> = peaks.iter().map(|p| p.map_or(0.0, |p| p.value)).collect();
    // A built space always has mass in at least one bin.
    RotationEstimator::from_probs(probs).expect("normalized space has positive mass")
}

/// 2-D translation estimator for a fixed rotation, normalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationEstimator {
    plane: SparsePlane,
    kernel: Kernel,
    params: HoughParams,
    gamma: f64,
}

impl TranslationEstimator {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cells(&self) -> &[Cell] {
        self.plane.cells()
    }

    pub fn total_mass(&self) -> f64 {
        self.plane.total_mass()
    }

    /// Smoothed probability of translation `v` (meters); zero outside extent.
    pub fn lookup(&self, v: &Vector2<f64>) -> f64 {
        if !self.params.in_extent(v.x, v.y) {
            return 0.0;
        }
        self.plane
            .lookup(&self.kernel, v.x / self.params.trans_bin, v.y / self.params.trans_bin)
    }

    /// Smoothed maximum and its translation in meters.
    pub fn argmax(&self) -> (Vector2<f64>, f64) {
        let p = self
            .plane
            .smoothed_max(&self.kernel)
            .expect("translation estimator is non-empty");
        (
            Vector2::new(p.ix as f64 * self.params.trans_bin, p.iy as f64 * self.params.trans_bin),
            p.value,
        )
    }
}

/// Slice of `h` at `fixed_gamma`, interpolated between the two adjacent
/// rotation bins and renormalized.
pub fn translation_estimator(h: &HoughSpace, fixed_gamma: f64) -> Result<TranslationEstimator> {
    let params = *h.params();
    let (lo, hi, f) = params.rot_split(fixed_gamma);
    let mut cells = Vec::new();
    for (ig, w) in [(lo, 1.0 - f), (hi, f)] {
        if w > 0.0 {
            cells.extend(h.plane(ig).cells().iter().map(|c| Cell {
                mass: c.mass * w,
                ..*c
            }));
        }
    }
    let plane = SparsePlane::from_cells(cells);
    let mass = plane.total_mass();
    if !(mass > 0.0) {
        return Err(Error::UninformativeEstimator {
            gamma_rad: fixed_gamma,
        });
    }
    Ok(TranslationEstimator {
        plane: plane.scaled(1.0 / mass),
        kernel: h.kernel().clone(),
        params,
        gamma: crate::geometry::wrap_angle(fixed_gamma),
    })
}
