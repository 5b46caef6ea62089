use nalgebra::Vector2;

use super::group::{ImageGroup, RelationMask};
use crate::error::{Error, Result};
use crate::geometry::{compose_via_reference, rotate, RigidTransform};
use crate::hough::{translation_estimator, HoughSpace, RotationEstimator, TranslationEstimator};

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidInput(format!("{what}: expected {want} values, got {got}")));
    }
    Ok(())
}

fn check_mask(group: &ImageGroup, mask: &RelationMask) -> Result<()> {
    check_len("relation mask", mask.len(), group.len())
}

/// Direct and indirect terms of the full objective, resolved once.
pub(crate) struct FullObjective<'a> {
    direct: Vec<&'a HoughSpace>,
    pairs: Vec<(usize, usize, &'a HoughSpace)>,
}

impl<'a> FullObjective<'a> {
    pub fn new(group: &'a ImageGroup, mask: &RelationMask) -> Result<Self> {
        check_mask(group, mask)?;
        let pairs = mask
            .ordered_pairs()
            .map(|(k, l)| group.require_pair(k, l).map(|h| (k, l, h)))
            .collect::<Result<_>>()?;
        Ok(Self {
            direct: (0..group.len()).map(|k| group.direct(k)).collect(),
            pairs,
        })
    }

    pub fn direct_sum(&self, t: &[RigidTransform]) -> f64 {
        self.direct.iter().zip(t).map(|(h, t)| h.lookup(t)).sum()
    }

    pub fn indirect_sum(&self, t: &[RigidTransform]) -> f64 {
        self.pairs
            .iter()
            .map(|&(k, l, h)| h.lookup(&compose_via_reference(&t[k], &t[l])))
            .sum()
    }

    pub fn eval(&self, t: &[RigidTransform]) -> f64 {
        self.direct_sum(t) + self.indirect_sum(t)
    }
}

/// Groupwise likelihood: every image's direct lookup against the reference
/// plus, for each enabled ordered pair, the lookup of the composed relation.
pub fn fitness_full(group: &ImageGroup, mask: &RelationMask, transforms: &[RigidTransform]) -> Result<f64> {
    check_len("transforms", transforms.len(), group.len())?;
    Ok(FullObjective::new(group, mask)?.eval(transforms))
}

/// Rotation-only objective with image 0 as the frame: terms `(k, 0)` for
/// `k >= 1` and enabled pairs among images `1..n`.
pub(crate) struct RotationObjective<'a> {
    terms: Vec<(usize, usize, &'a RotationEstimator)>,
}

impl<'a> RotationObjective<'a> {
    pub fn new(group: &'a ImageGroup, mask: &RelationMask) -> Result<Self> {
        check_mask(group, mask)?;
        let terms = mask
            .ordered_pairs()
            .filter(|&(k, _)| k != 0)
            .map(|(k, l)| group.rotation_estimator(k, l).map(|e| (k, l, e)))
            .collect::<Result<_>>()?;
        Ok(Self { terms })
    }

    /// `rotations[k]` is image k's rotation into image 0, `rotations[0] = 0`.
    pub fn eval(&self, rotations: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(k, l, e)| e.lookup(rotations[k] - rotations[l]))
            .sum()
    }
}

fn with_leading<T: Copy>(first: T, rest: &[T]) -> Vec<T> {
    std::iter::once(first).chain(rest.iter().copied()).collect()
}

/// Rotation objective over `rotations` for images `1..n` into image 0.
pub fn fitness_rotation(group: &ImageGroup, mask: &RelationMask, rotations: &[f64]) -> Result<f64> {
    check_len("rotations", rotations.len(), group.len().saturating_sub(1))?;
    Ok(RotationObjective::new(group, mask)?.eval(&with_leading(0.0, rotations)))
}

/// Translation objective at fixed rotations. Slices without mass at the
/// requested rotation contribute nothing.
pub(crate) struct TranslationObjective {
    rotations: Vec<f64>,
    terms: Vec<(usize, usize, TranslationEstimator)>,
}

impl TranslationObjective {
    /// `rotations` covers all images with `rotations[0] = 0`.
    pub fn new(group: &ImageGroup, mask: &RelationMask, rotations: &[f64]) -> Result<Self> {
        check_mask(group, mask)?;
        check_len("rotations", rotations.len(), group.len())?;
        let mut terms = Vec::new();
        for (k, l) in mask.ordered_pairs().filter(|&(k, _)| k != 0) {
            match translation_estimator(group.require_pair(k, l)?, rotations[k] - rotations[l]) {
                Ok(e) => terms.push((k, l, e)),
                Err(Error::UninformativeEstimator { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Self {
            rotations: rotations.to_vec(),
            terms,
        })
    }

    /// Estimator and its slice rotation for the ordered pair, if informative.
    pub fn estimator(&self, k: usize, l: usize) -> Option<&TranslationEstimator> {
        self.terms.iter().find(|t| t.0 == k && t.1 == l).map(|t| &t.2)
    }

    /// `translations[k]` is image k's translation into image 0, index 0 zero.
    pub fn eval(&self, translations: &[Vector2<f64>]) -> f64 {
        self.terms
            .iter()
            .map(|(k, l, e)| {
                let v = rotate(&(translations[*k] - translations[*l]), -self.rotations[*l]);
                e.lookup(&v)
            })
            .sum()
    }
}

/// Translation objective for images `1..n` into image 0 at fixed rotations.
pub fn fitness_translation(
    group: &ImageGroup,
    mask: &RelationMask,
    fixed_rotations: &[f64],
    translations: &[Vector2<f64>],
) -> Result<f64> {
    let m = group.len().saturating_sub(1);
    check_len("rotations", fixed_rotations.len(), m)?;
    check_len("translations", translations.len(), m)?;
    let obj = TranslationObjective::new(group, mask, &with_leading(0.0, fixed_rotations))?;
    Ok(obj.eval(&with_leading(Vector2::zeros(), translations)))
}
