use std::cmp::Ordering;

use rayon::prelude::*;

use super::descriptor::{FeatureFrame, FeatureSet};

/// Guards `1 / distance` against identical descriptors.
pub const SIMILARITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub frame_a: FeatureFrame,
    pub frame_b: FeatureFrame,
    pub similarity: f64,
}

impl Match {
    /// The same correspondence seen from image b.
    pub fn swapped(&self) -> Self {
        Self {
            index_a: self.index_b,
            index_b: self.index_a,
            frame_a: self.frame_b,
            frame_b: self.frame_a,
            similarity: self.similarity,
        }
    }
}

#[inline]
pub fn similarity_from_distance(d: f64) -> f64 {
    1.0 / (d + SIMILARITY_EPS)
}

/// Matches sorted by descending similarity, unique per `(index_a, index_b)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    matches: Vec<Match>,
}

impl MatchSet {
    /// Sorts into canonical order (similarity desc, then indices) and drops
    /// duplicate index pairs.
    pub fn from_matches(mut matches: Vec<Match>) -> Self {
        matches.sort_by(|x, y| {
            y.similarity
                .partial_cmp(&x.similarity)
                .unwrap_or(Ordering::Equal)
                .then(x.index_a.cmp(&y.index_a))
                .then(x.index_b.cmp(&y.index_b))
        });
        let mut seen = std::collections::HashSet::with_capacity(matches.len());
        matches.retain(|m| seen.insert((m.index_a, m.index_b)));
        Self { matches }
    }

    pub fn as_slice(&self) -> &[Match] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Match> {
        self.matches.iter()
    }

    pub fn swapped(&self) -> Self {
        Self::from_matches(self.matches.iter().map(Match::swapped).collect())
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    dist: f64,
    ia: u32,
    ib: u32,
}

#[inline]
fn cand_cmp(x: &Candidate, y: &Candidate) -> Ordering {
    x.dist
        .total_cmp(&y.dist)
        .then(x.ia.cmp(&y.ia))
        .then(x.ib.cmp(&y.ib))
}

/// Keeps the `k` smallest candidates under `cand_cmp`.
struct TopK {
    k: usize,
    buf: Vec<Candidate>,
    worst: Option<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            buf: Vec::with_capacity(2 * k.min(1 << 22)),
            worst: None,
        }
    }

    #[inline]
    fn admits(&self, dist: f64) -> bool {
        match &self.worst {
            Some(w) => dist <= w.dist,
            None => true,
        }
    }

    /// Conservative pre-check on an approximate squared distance.
    #[inline]
    fn may_admit(&self, approx_sq: f32) -> bool {
        match &self.worst {
            Some(w) => (approx_sq as f64) <= w.dist * w.dist * (1.0 + 1e-4) + 1e-6,
            None => true,
        }
    }

    #[inline]
    fn push(&mut self, c: Candidate) {
        if let Some(w) = &self.worst {
            if cand_cmp(&c, w) != Ordering::Less {
                return;
            }
        }
        self.buf.push(c);
        if self.buf.len() >= 2 * self.k.max(1) {
            self.shrink();
        }
    }

    fn shrink(&mut self) {
        if self.buf.len() > self.k {
            self.buf.select_nth_unstable_by(self.k - 1, cand_cmp);
            self.buf.truncate(self.k);
            self.worst = self.buf.iter().copied().max_by(cand_cmp);
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        for c in other.buf {
            self.push(c);
        }
        self
    }

    fn finish(mut self) -> Vec<Candidate> {
        self.shrink();
        self.buf.sort_by(cand_cmp);
        self.buf
    }
}


/// The `k` most similar pairs over the full cross product, similarity
/// `1 / (distance + ε)`. Ties break by `(index_a, index_b)`.
pub fn top_k_matches(a: &FeatureSet, b: &FeatureSet, k: usize) -> MatchSet {
    if a.is_empty() || b.is_empty() || k == 0 {
        return MatchSet::default();
    }
    // The result is an exact top-k, so the blocking only affects speed.
    let row_block = a.len().div_ceil(4 * rayon::current_num_threads()).max(64);
    let blocks: Vec<usize> = (0..a.len()).step_by(row_block).collect();
    let best = blocks
        .par_iter()
        .map(|&start| {
            let mut top = TopK::new(k);
            for ia in start..(start + row_block).min(a.len()) {
                let da = &a.descriptors[ia];
                for (ib, db) in b.descriptors.iter().enumerate() {
                    if !top.may_admit(da.approx_distance_sq(db)) {
                        continue;
                    }
                    let dist = da.distance(db);
                    if top.admits(dist) {
                        top.push(Candidate {
                            dist,
                            ia: ia as u32,
                            ib: ib as u32,
                        });
                    }
                }
            }
            top
        })
        .reduce(|| TopK::new(k), TopK::merge)
        .finish();
    let matches = best
        .into_iter()
        .map(|c| Match {
            index_a: c.ia as usize,
            index_b: c.ib as usize,
            frame_a: a.frames[c.ia as usize],
            frame_b: b.frames[c.ib as usize],
            similarity: similarity_from_distance(c.dist),
        })
        .collect();
    MatchSet { matches }
}

/// Nearest neighbour in `b` for each feature of `a`, kept when
/// `d_nearest / d_second < tau`.
pub fn distance_ratio_match(a: &FeatureSet, b: &FeatureSet, tau: f64) -> Vec<Match> {
    if b.len() < 2 {
        return Vec::new();
    }
    a.descriptors
        .par_iter()
        .enumerate()
        .filter_map(|(ia, da)| {
            let mut best = (f64::INFINITY, usize::MAX);
            let mut second = f64::INFINITY;
            for (ib, db) in b.descriptors.iter().enumerate() {
                let d = da.distance(db);
                if d < best.0 {
                    second = best.0;
                    best = (d, ib);
                } else if d < second {
                    second = d;
                }
            }
            let accept = if second > 0.0 {
                best.0 / second < tau
            } else {
                false
            };
            accept.then(|| Match {
                index_a: ia,
                index_b: best.1,
                frame_a: a.frames[ia],
                frame_b: b.frames[best.1],
                similarity: similarity_from_distance(best.0),
            })
        })
        .collect()
}
