//! Monotone BFGS ascent with central finite-difference gradients.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub max_iters: usize,
    /// Stop once an iteration improves by less than this (relative).
    pub tol: f64,
    /// Alternate rounds of BFGS and a compass search. The lookups are only
    /// piecewise smooth in rotation, and BFGS can stall on a kink.
    pub polish_rounds: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-10,
            polish_rounds: 8,
        }
    }
}

/// Maximizes `f` from `x0`. `steps[i]` is the finite-difference step of
/// coordinate i and also its unit, so the search runs in `x / steps`.
/// Never returns a point worse than `x0`.
pub fn bfgs_ascent<F>(f: F, x0: &[f64], steps: &[f64], cfg: &RefineConfig) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let to_x = |u: &DVector<f64>| -> Vec<f64> { u.iter().zip(steps).map(|(u, s)| u * s).collect() };
    let g = |u: &DVector<f64>| -> f64 { -f(&to_x(u)) };
    let grad = |u: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(n);
        let mut p = u.clone();
        for i in 0..n {
            let c = p[i];
            p[i] = c + 1.0;
            let hi = g(&p);
            p[i] = c - 1.0;
            let lo = g(&p);
            p[i] = c;
            out[i] = 0.5 * (hi - lo);
        }
        out
    };
    let mut u = DVector::from_iterator(n, x0.iter().zip(steps).map(|(x, s)| x / s));
    let mut fu = g(&u);
    if n == 0 || !fu.is_finite() {
        return (x0.to_vec(), -fu);
    }
    let mut gu = grad(&u);
    let mut hinv: Option<DMatrix<f64>> = None;
    for _ in 0..cfg.max_iters {
        let gnorm = gu.norm();
        if !(gnorm > 0.0) {
            break;
        }
        let h = hinv.get_or_insert_with(|| DMatrix::identity(n, n) / gnorm);
        let mut d = -(&*h * &gu);
        if d.dot(&gu) >= 0.0 {
            // Not a descent direction: restart from scaled steepest descent.
            *h = DMatrix::identity(n, n) / gnorm;
            d = -&gu / gnorm;
        }
        let slope = d.dot(&gu);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &u + &d * t;
            let fc = g(&cand);
            if fc.is_finite() && fc <= fu + 1e-4 * t * slope && fc < fu {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((un, fn_)) = accepted else {
            if hinv.as_ref().is_some_and(|h| (h - DMatrix::identity(n, n) / gnorm).norm() > 0.0) {
                hinv = None;
                continue;
            }
            break;
        };
        let improvement = fu - fn_;
        let gn = grad(&un);
        let s = &un - &u;
        let y = &gn - &gu;
        let sy = s.dot(&y);
        if sy > 1e-16 {
            let h = hinv.as_mut().unwrap();
            let rho = 1.0 / sy;
            let hy = &*h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hyᵀ + hy sᵀ) + (rho² yHy + rho) s sᵀ
            *h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            *h += &s * s.transpose() * (rho * rho * yhy + rho);
        }
        u = un;
        fu = fn_;
        gu = gn;
        if improvement <= cfg.tol * fu.abs().max(1e-300) {
            break;
        }
    }
    (to_x(&u), -fu)
}

/// Coordinate-wise pattern search in units of `steps`, from coarse to fine.
/// Accepts strict improvements only.
pub fn compass_polish<F>(f: F, x0: &[f64], steps: &[f64]) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    const SCALES: [f64; 6] = [4.0, 2.0, 1.0, 0.5, 0.25, 0.125];
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    for scale in SCALES {
        loop {
            let mut moved = false;
            for i in 0..x.len() {
                for sign in [1.0, -1.0] {
                    let c = x[i];
                    x[i] = c + sign * scale * steps[i];
                    let fc = f(&x);
                    if fc > fx {
                        fx = fc;
                        moved = true;
                        break;
                    }
                    x[i] = c;
                }
            }
            if !moved {
                break;
            }
        }
    }
    (x, fx)
}

/// BFGS followed by compass polishing, repeated while the polish finds
/// an improvement.
pub fn local_ascent<F>(f: F, x0: &[f64], steps: &[f64], cfg: &RefineConfig) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let (mut x, mut fx) = bfgs_ascent(&f, x0, steps, cfg);
    for _ in 0..cfg.polish_rounds {
        let (xp, fp) = compass_polish(&f, &x, steps);
        if !(fp > fx) {
            break;
        }
        (x, fx) = bfgs_ascent(&f, &xp, steps, cfg);
    }
    (x, fx)
}
