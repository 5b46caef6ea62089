//! Sparse 3-D Hough voting spaces as pairwise rigid-transform estimators.

mod estimators;
pub mod io;
mod plane;
mod space;

pub use estimators::{rotation_estimator, translation_estimator, RotationEstimator, TranslationEstimator};
pub(crate) use estimators::rotation_estimator_from_peaks;
pub use plane::{Cell, Kernel, PlanePeak, SparsePlane};
pub(crate) use space::best_of_peaks;
pub use space::{build_hough_space, vote_from_match, zone_filter, HoughParams, HoughSpace};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureFrame, Match, MatchSet};
    use crate::geometry::{compose_via_reference, wrap_angle, Point, RigidTransform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn frame(x: f64, y: f64, theta: f64) -> FeatureFrame {
        FeatureFrame {
            x,
            y,
            sigma: 120.0,
            theta: wrap_angle(theta),
        }
    }

    fn mk(fa: FeatureFrame, fb: FeatureFrame, s: f64, i: usize) -> Match {
        Match {
            index_a: i,
            index_b: i,
            frame_a: fa,
            frame_b: fb,
            similarity: s,
        }
    }

    /// Matches induced by `t` (a → b) for random frames in a.
    fn planted(t: &RigidTransform, n: usize, rng: &mut ChaCha8Rng, offset: usize) -> Vec<Match> {
        (0..n)
            .map(|i| {
                let fa = frame(rng.random_range(-2400.0..2400.0), rng.random_range(-2400.0..2400.0), rng.random_range(0.0..TAU));
                let pb = t.apply(&fa.position());
                let fb = frame(pb.x, pb.y, fa.theta + t.gamma());
                mk(fa, fb, rng.random_range(0.5..1.0), offset + i)
            })
            .collect()
    }

    fn random_matches(n: usize, rng: &mut ChaCha8Rng, offset: usize) -> Vec<Match> {
        (0..n)
            .map(|i| {
                let fa = frame(rng.random_range(-2400.0..2400.0), rng.random_range(-2400.0..2400.0), rng.random_range(0.0..TAU));
                let fb = frame(rng.random_range(-2400.0..2400.0), rng.random_range(-2400.0..2400.0), rng.random_range(0.0..TAU));
                mk(fa, fb, rng.random_range(0.5..1.0), offset + i)
            })
            .collect()
    }

    #[test]
    fn vote_examples() {
        let t = vote_from_match(&mk(frame(0.0, 0.0, 1.0), frame(0.0, 0.0, 1.0), 1.0, 0));
        assert_eq!((t.vx, t.vy, t.gamma()), (0.0, 0.0, 0.0));

        // Two frames whose orientations differ by 135°: the vote maps a onto b.
        let fa = frame(1.0, 0.0, 0.3);
        let fb = frame(-40.0, 25.0, 0.3 + 135f64.to_radians());
        let t = vote_from_match(&mk(fa, fb, 1.0, 0));
        assert!((t.gamma_degrees() - 135.0).abs() < 1e-9);
        let p = t.apply(&fa.position());
        assert!((p - fb.position()).norm() < 1e-12);
    }

    #[test]
    fn planted_votes_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = RigidTransform::new(123.4, -987.6, 2.2);
        for m in planted(&t, 100, &mut rng, 0) {
            let v = vote_from_match(&m);
            assert!((v.vx - t.vx).abs() < 1e-9 && (v.vy - t.vy).abs() < 1e-9);
            assert!(crate::geometry::angle_diff(v.gamma(), t.gamma()).abs() < 1e-9);
        }
    }

    #[test]
    fn single_match_normalizes() {
        let m = MatchSet::from_matches(vec![mk(frame(0.0, 0.0, 0.0), frame(3.0, 4.0, 0.5), 2.0, 0)]);
        let h = build_hough_space(&m, 100.0, &HoughParams::default()).unwrap();
        assert!((1..=2).contains(&h.entry_count()));
        assert!((h.stored_mass() - 1.0).abs() < 1e-12);
        assert_eq!(h.total_mass(), 2.0);
    }

    #[test]
    fn zoning_keeps_strongest() {
        let strong = mk(frame(10.0, 10.0, 0.0), frame(20.0, 20.0, 0.0), 2.0, 0);
        let weak = mk(frame(30.0, 40.0, 0.0), frame(50.0, 60.0, 1.0), 1.0, 1);
        let both = MatchSet::from_matches(vec![strong, weak]);
        let only = MatchSet::from_matches(vec![strong]);
        let p = HoughParams::default();
        assert_eq!(
            build_hough_space(&both, 100.0, &p).unwrap().records().collect::<Vec<_>>(),
            build_hough_space(&only, 100.0, &p).unwrap().records().collect::<Vec<_>>()
        );
        // With tiny zones both survive.
        assert_eq!(zone_filter(both.as_slice(), 1.0).len(), 2);
        let zoned = zone_filter(both.as_slice(), 100.0);
        assert_eq!(zone_filter(&zoned, 100.0), zoned);
    }

    #[test]
    fn all_out_of_extent_is_error() {
        let m = MatchSet::from_matches(vec![mk(frame(0.0, 0.0, 0.0), frame(9000.0, 0.0, 0.0), 1.0, 0)]);
        assert!(matches!(
            build_hough_space(&m, 100.0, &HoughParams::default()),
            Err(crate::Error::EmptyEstimator)
        ));
        assert!(build_hough_space(&MatchSet::default(), 100.0, &HoughParams::default()).is_err());
    }

    #[test]
    fn planted_transform_wins_among_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = RigidTransform::new(-310.0, 1250.0, 4.0);
        let mut all = planted(&t, 1000, &mut rng, 0);
        all.extend(random_matches(9000, &mut rng, 1000));
        let h = build_hough_space(&MatchSet::from_matches(all), 100.0, &HoughParams::default()).unwrap();
        let (best, _) = h.argmax().unwrap();
        assert_eq!((best.vx, best.vy), (-310.0, 1250.0));
        let step = h.params().rot_step();
        assert_eq!((best.gamma() / step).round(), (4.0 / step).round());
        let rot = rotation_estimator(&h);
        assert!((rot.argmax().0 - best.gamma()).abs() < 1e-12);
    }

    #[test]
    fn three_image_vote_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t1 = RigidTransform::new(400.0, -150.0, 0.9);
        let t2 = RigidTransform::new(-250.0, 300.0, 2.6);
        let (inv1, inv2) = (t1.inverse(), t2.inverse());
        let mut matches = Vec::new();
        for i in 0..600 {
            let world = Point::new(rng.random_range(-1500.0..1500.0), rng.random_range(-1500.0..1500.0));
            let phi = rng.random_range(0.0..TAU);
            let p1 = inv1.apply(&world);
            let p2 = inv2.apply(&world);
            matches.push(mk(frame(p1.x, p1.y, phi - t1.gamma()), frame(p2.x, p2.y, phi - t2.gamma()), 1.0, i));
        }
        matches.extend(random_matches(3000, &mut rng, 600));
        let h12 = build_hough_space(&MatchSet::from_matches(matches), 100.0, &HoughParams::default()).unwrap();
        let want = compose_via_reference(&t1, &t2);
        let (got, _) = h12.argmax().unwrap();
        assert_eq!((got.vx, got.vy), (want.vx.round(), want.vy.round()));
        let step = h12.params().rot_step();
        assert_eq!((got.gamma() / step).round() as usize % 18, (want.gamma() / step).round() as usize % 18);
    }

    /// Dense materialization oracle over a tiny 64x64x18 domain.
    struct Dense {
        lo: i32,
        n: usize,
        smoothed: Vec<Vec<f64>>, // per rotation bin, row-major n x n
        raw_mass: Vec<f64>,
        params: HoughParams,
    }

    impl Dense {
        fn build(h: &HoughSpace) -> Self {
            let params = *h.params();
            let k = params.kernel();
            let r = k.radius();
            let lo = -32 - r - 1;
            let n = (64 + 2 * (r + 1)) as usize;
            let mut raw = vec![vec![0.0; n * n]; params.rot_bins];
            for (ix, iy, ig, m) in h.records() {
                raw[ig][((iy - lo) as usize) * n + (ix - lo) as usize] += m;
            }
            // Brute-force 2-D convolution with the outer-product kernel.
            let mut smoothed = vec![vec![0.0; n * n]; params.rot_bins];
            for ig in 0..params.rot_bins {
                for y in 0..n as i32 {
                    for x in 0..n as i32 {
                        let mut acc = 0.0;
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (sx, sy) = (x - dx, y - dy);
                                if sx < 0 || sy < 0 || sx >= n as i32 || sy >= n as i32 {
                                    continue;
                                }
                                acc += raw[ig][(sy as usize) * n + sx as usize] * k.at(dx) * k.at(dy);
                            }
                        }
                        smoothed[ig][(y as usize) * n + x as usize] = acc;
                    }
                }
            }
            let raw_mass = raw.iter().map(|b| b.iter().sum()).collect();
            Self { lo, n, smoothed, raw_mass, params }
        }

        fn cell(&self, ig: usize, ix: i32, iy: i32) -> f64 {
            let (x, y) = (ix - self.lo, iy - self.lo);
            if x < 0 || y < 0 || x >= self.n as i32 || y >= self.n as i32 {
                return 0.0;
            }
            self.smoothed[ig][(y as usize) * self.n + x as usize]
        }

        fn bilinear(&self, ig: usize, x: f64, y: f64) -> f64 {
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (x0, y0) = (x0 as i32, y0 as i32);
            (1.0 - fx) * (1.0 - fy) * self.cell(ig, x0, y0)
                + fx * (1.0 - fy) * self.cell(ig, x0 + 1, y0)
                + (1.0 - fx) * fy * self.cell(ig, x0, y0 + 1)
                + fx * fy * self.cell(ig, x0 + 1, y0 + 1)
        }

        fn lookup(&self, t: &RigidTransform) -> f64 {
            let step = TAU / self.params.rot_bins as f64;
            let u = t.gamma() / step;
            let lo = u.floor();
            let f = u - lo;
            let lo = lo as usize % self.params.rot_bins;
            let hi = (lo + 1) % self.params.rot_bins;
            (1.0 - f) * self.bilinear(lo, t.vx, t.vy) + f * self.bilinear(hi, t.vx, t.vy)
        }

        fn rotation(&self) -> Vec<f64> {
            let maxes: Vec<f64> = self
                .smoothed
                .iter()
                .map(|b| b.iter().cloned().fold(0.0, f64::max))
                .collect();
            let s: f64 = maxes.iter().sum();
            maxes.into_iter().map(|m| m / s).collect()
        }
    }

    fn tiny_space(seed: u64) -> HoughSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = HoughParams {
            extent: 32.0,
            ..HoughParams::default()
        };
        let mut recs = Vec::new();
        for _ in 0..400 {
            recs.push((rng.random_range(-32..32), rng.random_range(-32..32), rng.random_range(0..18usize), rng.random_range(0.1..1.0)));
        }
        // A cluster so the field has a clear structure.
        for _ in 0..100 {
            recs.push((rng.random_range(5..9), rng.random_range(-12..-8), 7, rng.random_range(0.5..1.0)));
        }
        let total: f64 = recs.iter().map(|r| r.3).sum();
        HoughSpace::from_records(params, total, recs.into_iter().map(|(a, b, c, m)| (a, b, c, m / total))).unwrap()
    }

    #[test]
    fn lookup_matches_dense_smoothing() {
        let h = tiny_space(4);
        assert!((h.stored_mass() - 1.0).abs() < 1e-9);
        let dense = Dense::build(&h);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let t = RigidTransform::new(rng.random_range(-32.0..31.0), rng.random_range(-32.0..31.0), rng.random_range(0.0..TAU));
            assert!((h.lookup(&t) - dense.lookup(&t)).abs() < 1e-9);
        }
        // Integer queries on bin centers read one smoothed cell.
        let t = RigidTransform::new(7.0, -10.0, 7.0 * TAU / 18.0);
        assert!((h.lookup(&t) - dense.cell(7, 7, -10)).abs() < 1e-12);
    }

    #[test]
    fn estimators_match_dense_oracle() {
        let h = tiny_space(6);
        let dense = Dense::build(&h);
        let rot = rotation_estimator(&h);
        for (a, b) in rot.probs().iter().zip(dense.rotation()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((rot.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = rng.random_range(0.0..TAU);
            let te = translation_estimator(&h, g).unwrap();
            assert!((te.total_mass() - 1.0).abs() < 1e-9);
            let step = TAU / 18.0;
            let u = g / step;
            let lo = u.floor() as usize % 18;
            let f = u - u.floor();
            let hi = (lo + 1) % 18;
            let slice_mass = (1.0 - f) * dense.raw_mass[lo] + f * dense.raw_mass[hi];
            for _ in 0..50 {
                let (x, y) = (rng.random_range(-32.0..31.0), rng.random_range(-32.0..31.0));
                let want = ((1.0 - f) * dense.bilinear(lo, x, y) + f * dense.bilinear(hi, x, y)) / slice_mass;
                assert!((te.lookup(&nalgebra::Vector2::new(x, y)) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn one_hot_estimators() {
        let params = HoughParams::default();
        let h = HoughSpace::from_records(params, 1.0, [(12, -4, 5, 1.0)]).unwrap();
        let rot = rotation_estimator(&h);
        assert_eq!(rot.probs()[5], 1.0);
        assert_eq!(rot.probs().iter().filter(|&&p| p > 0.0).count(), 1);
        let te = translation_estimator(&h, params.bin_angle(5)).unwrap();
        assert_eq!(te.cells().len(), 1);
        assert_eq!((te.cells()[0].ix, te.cells()[0].iy, te.cells()[0].mass), (12, -4, 1.0));
        assert!(matches!(
            translation_estimator(&h, params.bin_angle(9)),
            Err(crate::Error::UninformativeEstimator { .. })
        ));
    }

    #[test]
    fn lookup_edges() {
        let params = HoughParams::default();
        let h = HoughSpace::from_records(params, 1.0, [(0, 0, 0, 1.0)]).unwrap();
        let k = params.kernel();
        assert!((h.lookup(&RigidTransform::IDENTITY) - k.center() * k.center()).abs() < 1e-15);
        assert_eq!(h.lookup(&RigidTransform::new(1000.0, 0.0, 0.0)), 0.0);
        assert_eq!(h.lookup(&RigidTransform::new(6000.0, 0.0, 0.0)), 0.0);
        // Rotation wrap-around: bin 0 is adjacent to bin 17.
        let near_full = RigidTransform::new(0.0, 0.0, TAU - 0.5 * params.rot_step());
        assert!((h.lookup(&near_full) - 0.5 * k.center() * k.center()).abs() < 1e-15);
    }

    #[test]
    fn lookup_is_continuous() {
        let h = tiny_space(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let t = RigidTransform::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(0.0..TAU));
            let d = 1e-7;
            let u = RigidTransform::new(t.vx + d, t.vy - d, t.gamma() + d);
            assert!((h.lookup(&t) - h.lookup(&u)).abs() < 1e-6 * h.kernel().center());
        }
        // Across bin boundaries too.
        let a = RigidTransform::new(3.0 - 1e-9, 2.0, PI / 9.0 - 1e-9);
        let b = RigidTransform::new(3.0 + 1e-9, 2.0, PI / 9.0 + 1e-9);
        assert!((h.lookup(&a) - h.lookup(&b)).abs() < 1e-9);
    }

    #[test]
    fn cache_round_trip() {
        let h = tiny_space(10);
        let mut buf = Vec::new();
        io::write_hough(&h, &mut buf).unwrap();
        let back = io::read_hough(buf.as_slice()).unwrap();
        assert_eq!(back, h);
        assert!(io::read_hough(&buf[..buf.len() - 1]).is_err());
    }
}
