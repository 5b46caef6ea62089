//! Global-best particle swarm minimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoConfig {
    pub particle_count: usize,
    pub max_iters: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Stop after this many iterations without sufficient improvement.
    pub stall_iters: usize,
    /// Relative improvement of the best value that resets the stall counter.
    pub stall_tol: f64,
    pub rng_seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particle_count: 150,
            max_iters: 300,
            inertia: 0.7298,
            cognitive: 1.4962,
            social: 1.4962,
            stall_iters: 40,
            stall_tol: 1e-6,
            rng_seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particle_count == 0 || !(self.inertia > 0.0 && self.cognitive > 0.0 && self.social > 0.0) {
            return Err(Error::InvalidInput(format!("invalid PSO configuration {self:?}")));
        }
        Ok(())
    }
}

/// Search domain of one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// Positions are clamped into `[lo, hi]`.
    Clamp(f64, f64),
    /// Periodic dimension on `[lo, hi)`, e.g. an angle.
    Wrap(f64, f64),
}

impl Bound {
    fn range(&self) -> (f64, f64) {
        match *self {
            Bound::Clamp(lo, hi) | Bound::Wrap(lo, hi) => (lo, hi),
        }
    }

    fn fold(&self, x: f64) -> f64 {
        match *self {
            Bound::Clamp(lo, hi) => x.clamp(lo, hi),
            Bound::Wrap(lo, hi) => lo + (x - lo).rem_euclid(hi - lo),
        }
    }

    /// `to - from`, taking the short way round on periodic dimensions.
    fn delta(&self, from: f64, to: f64) -> f64 {
        match *self {
            Bound::Clamp(..) => to - from,
            Bound::Wrap(lo, hi) => {
                let p = hi - lo;
                let d = (to - from).rem_euclid(p);
                if d > 0.5 * p {
                    d - p
                } else {
                    d
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoResult {
    pub position: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `objective` over `bounds`. The swarm starts from `init`
/// (truncated to `particle_count`); missing particles are drawn uniformly.
/// Non-finite objective values count as `+inf`.
pub fn pso_minimize<F>(objective: F, bounds: &[Bound], init: &[Vec<f64>], cfg: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let dim = bounds.len();
    if init.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput("initial particle has wrong dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut pos: Vec<Vec<f64>> = init
        .iter()
        .take(cfg.particle_count)
        .map(|p| p.iter().zip(bounds).map(|(&x, b)| b.fold(x)).collect())
        .collect();
    while pos.len() < cfg.particle_count {
        pos.push(
            bounds
                .iter()
                .map(|b| {
                    let (lo, hi) = b.range();
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                })
                .collect(),
        );
    }
    let vmax: Vec<f64> = bounds.iter().map(|b| 0.5 * (b.range().1 - b.range().0)).collect();
    let mut vel: Vec<Vec<f64>> = (0..pos.len())
        .map(|_| vmax.iter().map(|&m| if m > 0.0 { 0.1 * rng.random_range(-m..m) } else { 0.0 }).collect())
        .collect();
    let eval = |ps: &[Vec<f64>]| -> Vec<f64> {
        ps.par_iter()
            .map(|p| {
                let v = objective(p);
                if v.is_finite() {
                    v
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    };
    let mut val = eval(&pos);
    let mut pbest = pos.clone();
    let mut pbest_val = val.clone();
    let (mut gi, _) = argmin(&pbest_val);
    let mut gbest = pbest[gi].clone();
    let mut gbest_val = pbest_val[gi];
    let mut last_mark = gbest_val;
    let mut stall = 0;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        for (i, (x, v)) in pos.iter_mut().zip(vel.iter_mut()).enumerate() {
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let b = &bounds[d];
                let nv = cfg.inertia * v[d]
                    + cfg.cognitive * r1 * b.delta(x[d], pbest[i][d])
                    + cfg.social * r2 * b.delta(x[d], gbest[d]);
                v[d] = nv.clamp(-vmax[d], vmax[d]);
                x[d] = b.fold(x[d] + v[d]);
            }
        }
        val = eval(&pos);
        for i in 0..pos.len() {
            if val[i] < pbest_val[i] {
                pbest_val[i] = val[i];
                pbest[i].clone_from(&pos[i]);
            }
        }
        (gi, _) = argmin(&pbest_val);
        if pbest_val[gi] < gbest_val {
            gbest_val = pbest_val[gi];
            gbest.clone_from(&pbest[gi]);
        }
        let scale = last_mark.abs().max(f64::MIN_POSITIVE);
        if last_mark - gbest_val > cfg.stall_tol * scale || (last_mark.is_infinite() && gbest_val.is_finite()) {
            last_mark = gbest_val;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_iters {
                break;
            }
        }
    }
    Ok(PsoResult {
        position: gbest,
        value: gbest_val,
        iterations,
    })
}

/// Index of the smallest value, first on ties.
fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc })
}
