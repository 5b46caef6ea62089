use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::MatchSet;
use crate::geometry::RigidTransform;
use crate::hough::{best_of_peaks, build_hough_space, rotation_estimator_from_peaks, HoughParams, HoughSpace, RotationEstimator};

/// Summary of one space derived once and reused by every stage.
#[derive(Debug, Clone)]
pub(crate) struct SpaceSummary {
    pub rotation: RotationEstimator,
    pub argmax: RigidTransform,
}

impl SpaceSummary {
    fn of(h: &HoughSpace) -> Self {
        let peaks = h.bin_peaks();
        let (argmax, _) = best_of_peaks(h.params(), &peaks).expect("built spaces are non-empty");
        Self {
            rotation: rotation_estimator_from_peaks(&peaks),
            argmax,
        }
    }
}

/// Historical images `0..n` and their pairwise voting spaces. The reference
/// map is not indexed; `direct(k)` is the space of image k against it.
#[derive(Debug)]
pub struct ImageGroup {
    params: HoughParams,
    direct: Vec<HoughSpace>,
    pairs: BTreeMap<(usize, usize), HoughSpace>,
    summaries: OnceLock<(Vec<SpaceSummary>, BTreeMap<(usize, usize), SpaceSummary>)>,
}

impl ImageGroup {
    /// `pairs` maps ordered `(k, l)` to the space of transforms k → l.
    pub fn new(direct: Vec<HoughSpace>, pairs: BTreeMap<(usize, usize), HoughSpace>) -> Result<Self> {
        let Some(first) = direct.first() else {
            return Err(Error::InvalidInput("a group needs at least one historical image".into()));
        };
        let params = *first.params();
        let n = direct.len();
        for h in direct.iter().chain(pairs.values()) {
            if *h.params() != params {
                return Err(Error::InvalidInput("all spaces of a group must share quantization".into()));
            }
        }
        if let Some(&(k, l)) = pairs.keys().find(|&&(k, l)| k == l || k >= n || l >= n) {
            return Err(Error::InvalidInput(format!("pair ({k}, {l}) is not a historical pair of {n} images")));
        }
        Ok(Self {
            params,
            direct,
            pairs,
            summaries: OnceLock::new(),
        })
    }

    /// Builds all spaces from matches. `pair_matches[(k, l)]` holds matches
    /// with frame_a in k and frame_b in l; both orders are voted from it.
    pub fn from_matches(
        direct: &[MatchSet],
        pair_matches: &BTreeMap<(usize, usize), MatchSet>,
        zoning_cell: f64,
        params: &HoughParams,
    ) -> Result<Self> {
        let direct: Vec<HoughSpace> = direct
            .par_iter()
            .map(|m| build_hough_space(m, zoning_cell, params))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("direct hough"))?;
        let jobs: Vec<((usize, usize), MatchSet)> = pair_matches
            .iter()
            .flat_map(|(&(k, l), m)| [((k, l), m.clone()), ((l, k), m.swapped())])
            .collect();
        let built: Vec<((usize, usize), HoughSpace)> = jobs
            .into_par_iter()
            .map(|(key, m)| build_hough_space(&m, zoning_cell, params).map(|h| (key, h)))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("pairwise hough"))?;
        Self::new(direct, built.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.direct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.direct.is_empty()
    }

    pub fn params(&self) -> &HoughParams {
        &self.params
    }

    pub fn direct(&self, k: usize) -> &HoughSpace {
        &self.direct[k]
    }

    pub fn pair(&self, k: usize, l: usize) -> Option<&HoughSpace> {
        self.pairs.get(&(k, l))
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), &HoughSpace)> {
        self.pairs.iter().map(|(&k, h)| (k, h))
    }

    pub(crate) fn require_pair(&self, k: usize, l: usize) -> Result<&HoughSpace> {
        self.pair(k, l).ok_or(Error::MissingSpace(k, l))
    }

    fn summaries(&self) -> &(Vec<SpaceSummary>, BTreeMap<(usize, usize), SpaceSummary>) {
        self.summaries.get_or_init(|| {
            let direct = self.direct.par_iter().map(SpaceSummary::of).collect();
            let keys: Vec<(usize, usize)> = self.pairs.keys().copied().collect();
            let pairs: Vec<SpaceSummary> = keys.par_iter().map(|k| SpaceSummary::of(&self.pairs[k])).collect();
            (direct, keys.into_iter().zip(pairs).collect())
        })
    }

    pub(crate) fn direct_summary(&self, k: usize) -> &SpaceSummary {
        &self.summaries().0[k]
    }

    pub(crate) fn pair_summary(&self, k: usize, l: usize) -> Result<&SpaceSummary> {
        self.summaries().1.get(&(k, l)).ok_or(Error::MissingSpace(k, l))
    }

    /// Rotation estimator of the pair space `(k, l)`.
    pub fn rotation_estimator(&self, k: usize, l: usize) -> Result<&RotationEstimator> {
        Ok(&self.pair_summary(k, l)?.rotation)
    }
}

/// Symmetric binary relation indicator over historical pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMask {
    n: usize,
    w: Vec<bool>,
}

impl RelationMask {
    /// All off-diagonal relations enabled.
    pub fn full(n: usize) -> Self {
        let mut w = vec![true; n * n];
        for k in 0..n {
            w[k * n + k] = false;
        }
        Self { n, w }
    }

    pub fn empty(n: usize) -> Self {
        Self { n, w: vec![false; n * n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> bool {
        self.w[k * self.n + l]
    }

    /// Sets both `(k, l)` and `(l, k)`; the diagonal stays disabled.
    pub fn set(&mut self, k: usize, l: usize, on: bool) {
        if k != l {
            self.w[k * self.n + l] = on;
            self.w[l * self.n + k] = on;
        }
    }

    /// Enabled ordered pairs `(k, l)`, `k != l`.
    pub fn ordered_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |k| (0..self.n).filter(move |&l| self.get(k, l)).map(move |l| (k, l)))
    }
}
