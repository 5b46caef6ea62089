//! Rigid 2-D transforms and homographies.
//!
//! All coordinates are in meters with the origin at the image center, x pointing
//! right and y pointing down. A rigid transform maps `p` to `R(gamma) * p + v`
//! with `R(g) = [cos g, -sin g; sin g, cos g]`.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Point2, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed smallest difference `a - b` wrapped into `(-π, π]`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > std::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub vx: f64,
    pub vy: f64,
    gamma: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: Self = Self {
        vx: 0.0,
        vy: 0.0,
        gamma: 0.0,
    };

    pub fn new(vx: f64, vy: f64, gamma: f64) -> Self {
        Self {
            vx,
            vy,
            gamma: wrap_angle(gamma),
        }
    }

    pub fn from_degrees(vx: f64, vy: f64, gamma_deg: f64) -> Self {
        Self::new(vx, vy, gamma_deg.to_radians())
    }

    /// Rotation angle in radians, always in `[0, 2π)`.
    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_degrees(&self) -> f64 {
        self.gamma.to_degrees()
    }

    #[inline]
    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    pub fn with_translation(self, v: Vector2<f64>) -> Self {
        Self {
            vx: v.x,
            vy: v.y,
            ..self
        }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self::new(self.vx, self.vy, gamma)
    }

    #[inline]
    pub fn apply(&self, p: &Point) -> Point {
        let (s, c) = self.gamma.sin_cos();
        Point::new(c * p.x - s * p.y + self.vx, s * p.x + c * p.y + self.vy)
    }

    pub fn inverse(&self) -> Self {
        let v = rotate(&self.translation(), -self.gamma);
        Self::new(-v.x, -v.y, -self.gamma)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &RigidTransform) -> Self {
        let v = rotate(&first.translation(), self.gamma) + self.translation();
        Self::new(v.x, v.y, self.gamma + first.gamma)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let (s, c) = self.gamma.sin_cos();
        Matrix3::new(c, -s, self.vx, s, c, self.vy, 0.0, 0.0, 1.0)
    }
}

#[inline]
pub fn rotate(v: &Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub fn apply_rigid(t: &RigidTransform, p: &Point) -> Point {
    t.apply(p)
}

pub fn invert_rigid(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Given `tk` (image k → reference) and `tl` (image l → reference), returns
/// the transform taking image k coordinates to image l coordinates.
///
/// Equals `tl⁻¹ ∘ tk`: translation `R(-γl)(vk - vl)`, rotation `γk - γl`.
pub fn compose_via_reference(tk: &RigidTransform, tl: &RigidTransform) -> RigidTransform {
    let v = rotate(&(tk.translation() - tl.translation()), -tl.gamma);
    RigidTransform::new(v.x, v.y, tk.gamma - tl.gamma)
}

/// Text record `vx vy gamma_deg`.
impl fmt::Display for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.vx, self.vy, self.gamma.to_degrees())
    }
}

impl FromStr for RigidTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals = parse_numbers(s, "rigid transform")?;
        match vals[..] {
            [vx, vy, g] => Ok(Self::from_degrees(vx, vy, g)),
            _ => Err(Error::format(
                "rigid transform",
                format!("expected 3 numbers, got {}", vals.len()),
            )),
        }
    }
}

fn parse_numbers(s: &str, what: &'static str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|e| Error::format(what, format!("`{tok}`: {e}")))
        })
        .collect()
}

const MIN_DET: f64 = 1e-12;

/// Projective 2-D transform, normalized so that `h[(2, 2)] == 1` when that
/// entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            h: Matrix3::identity(),
        }
    }

    pub fn new(h: Matrix3<f64>) -> Result<Self> {
        let h = normalize(h);
        let det = h.determinant();
        if !det.is_finite() || det.abs() <= MIN_DET {
            return Err(Error::SingularHomography { det });
        }
        Ok(Self { h })
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(v))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.h
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.h[(r, c)];
            }
        }
        out
    }

    #[inline]
    pub fn apply(&self, p: &Point) -> Point {
        let q = self.h * Vector3::new(p.x, p.y, 1.0);
        Point::new(q.x / q.z, q.y / q.z)
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .h
            .try_inverse()
            .ok_or(Error::SingularHomography { det: 0.0 })?;
        Self::new(inv)
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &Homography) -> Result<Self> {
        compose_homography(self, first)
    }
}

fn normalize(h: Matrix3<f64>) -> Matrix3<f64> {
    let s = h[(2, 2)];
    if s.abs() > 1e-15 {
        h / s
    } else {
        h
    }
}

/// Result maps `p` to `a(b(p))`.
pub fn compose_homography(a: &Homography, b: &Homography) -> Result<Homography> {
    Homography::new(a.h * b.h)
}

pub fn rigid_to_homography(t: &RigidTransform) -> Homography {
    Homography { h: t.matrix() }
}

impl From<RigidTransform> for Homography {
    fn from(t: RigidTransform) -> Self {
        rigid_to_homography(&t)
    }
}

/// Nine row-major numbers.
impl fmt::Display for Homography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major();
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

impl FromStr for Homography {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let vals = parse_numbers(s, "homography")?;
        let arr: [f64; 9] = vals.as_slice().try_into().map_err(|_| {
            Error::format("homography", format!("expected 9 numbers, got {}", vals.len()))
        })?;
        Self::from_row_major(&arr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: &Point, b: &Point, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn apply_examples() {
        let p = RigidTransform::IDENTITY.apply(&Point::new(5.0, 7.0));
        assert_eq!(p, Point::new(5.0, 7.0));
        let p = RigidTransform::new(10.0, 0.0, FRAC_PI_2).apply(&Point::new(1.0, 0.0));
        assert!(close(&p, &Point::new(10.0, 1.0), 1e-12));
        let p = RigidTransform::new(3.0, -4.0, PI).apply(&Point::new(2.0, 2.0));
        assert!(close(&p, &Point::new(1.0, -6.0), 1e-12));
    }

    #[test]
    fn invert_examples() {
        let i = RigidTransform::IDENTITY.inverse();
        assert_eq!((i.vx, i.vy, i.gamma()), (0.0, 0.0, 0.0));
        let i = RigidTransform::new(10.0, 0.0, FRAC_PI_2).inverse();
        assert_abs_diff_eq!(i.vx, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(i.vy, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(i.gamma(), 3.0 * FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn compose_examples() {
        let t = RigidTransform::new(5.0, 0.0, 0.0);
        let c = compose_via_reference(&t, &RigidTransform::IDENTITY);
        assert_eq!((c.vx, c.vy, c.gamma()), (5.0, 0.0, 0.0));

        let tk = RigidTransform::new(10.0, 0.0, FRAC_PI_2);
        let tl = RigidTransform::new(0.0, 10.0, FRAC_PI_2);
        let c = compose_via_reference(&tk, &tl);
        // Matrix oracle: inverse(M_l) * M_k.
        let m = tl.matrix().try_inverse().unwrap() * tk.matrix();
        assert_abs_diff_eq!(c.vx, m[(0, 2)], epsilon = 1e-12);
        assert_abs_diff_eq!(c.vy, m[(1, 2)], epsilon = 1e-12);
        assert_abs_diff_eq!(c.gamma().cos(), m[(0, 0)], epsilon = 1e-12);
        assert_abs_diff_eq!(c.gamma().sin(), m[(1, 0)], epsilon = 1e-12);
        assert_abs_diff_eq!(c.vx, -10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.vy, -10.0, epsilon = 1e-12);
    }

    #[test]
    fn rigid_homography_example() {
        assert_eq!(
            rigid_to_homography(&RigidTransform::IDENTITY),
            Homography::identity()
        );
        let h = rigid_to_homography(&RigidTransform::new(10.0, 0.0, FRAC_PI_2));
        let want = [0.0, -1.0, 10.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        for (a, b) in h.to_row_major().iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn homography_identity_and_inverse() {
        let id = Homography::identity();
        assert_eq!(compose_homography(&id, &id).unwrap(), id);
        let a = Homography::from_row_major(&[1.1, 0.2, 5.0, -0.1, 0.9, -3.0, 1e-4, 2e-4, 1.0]).unwrap();
        let prod = compose_homography(&a, &a.inverse().unwrap()).unwrap();
        for (x, y) in prod.to_row_major().iter().zip(id.to_row_major()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn singular_homography_rejected() {
        let a = Homography::from_row_major(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let proj = Matrix3::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            Homography::new(proj),
            Err(Error::SingularHomography { .. })
        ));
        assert!(compose_homography(&a, &a).is_ok());
    }

    #[test]
    fn text_records_round_trip() {
        let t: RigidTransform = "12.5 -3 90".parse().unwrap();
        assert_abs_diff_eq!(t.gamma(), FRAC_PI_2, epsilon = 1e-12);
        let back: RigidTransform = t.to_string().parse().unwrap();
        assert_abs_diff_eq!(back.gamma(), t.gamma(), epsilon = 1e-12);
        assert!("1 2".parse::<RigidTransform>().is_err());

        let h = Homography::from_row_major(&[2.0, 0.0, 1.0, 0.0, 2.0, 3.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(h.to_string().parse::<Homography>().unwrap(), h);
        assert!("1 2 3".parse::<Homography>().is_err());
    }

    fn arb_rigid() -> impl Strategy<Value = RigidTransform> {
        (-5000.0..5000.0f64, -5000.0..5000.0f64, -10.0..10.0f64)
            .prop_map(|(x, y, g)| RigidTransform::new(x, y, g))
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        (-3000.0..3000.0f64, -3000.0..3000.0f64).prop_map(|(x, y)| Point::new(x, y))
    }

    fn arb_homography() -> impl Strategy<Value = Homography> {
        (arb_rigid(), 0.7..1.3f64, -0.2..0.2f64, -1e-5..1e-5f64, -1e-5..1e-5f64).prop_map(
            |(t, s, shear, p0, p1)| {
                let m = t.matrix() * Matrix3::new(s, shear, 0.0, 0.0, 1.0 / s, 0.0, p0, p1, 1.0);
                Homography::new(m).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn gamma_always_normalized(t in arb_rigid(), u in arb_rigid()) {
            for g in [t.gamma(), t.inverse().gamma(), compose_via_reference(&t, &u).gamma(), t.after(&u).gamma()] {
                prop_assert!((0.0..TAU).contains(&g));
            }
        }

        #[test]
        fn inverse_round_trip(t in arb_rigid(), pts in prop::collection::vec(arb_point(), 100)) {
            let inv = invert_rigid(&t);
            for p in &pts {
                let back = apply_rigid(&inv, &apply_rigid(&t, p));
                prop_assert!((back - p).norm() < 1e-9);
            }
        }

        #[test]
        fn self_composition_is_identity(t in arb_rigid()) {
            let c = compose_via_reference(&t, &t);
            prop_assert!(c.vx.abs() < 1e-9 && c.vy.abs() < 1e-9);
            prop_assert!(angle_diff(c.gamma(), 0.0).abs() < 1e-9);
        }

        #[test]
        fn composition_matches_homography_chain(tk in arb_rigid(), tl in arb_rigid(), p in arb_point()) {
            let direct = rigid_to_homography(&compose_via_reference(&tk, &tl));
            let hl_inv = rigid_to_homography(&tl).inverse().unwrap();
            let chained = compose_homography(&hl_inv, &rigid_to_homography(&tk)).unwrap();
            prop_assert!((direct.apply(&p) - chained.apply(&p)).norm() < 1e-9);
        }

        #[test]
        fn rigid_homography_reproduces_points(t in arb_rigid(), pts in prop::collection::vec(arb_point(), 100)) {
            let h = rigid_to_homography(&t);
            for p in &pts {
                prop_assert!((h.apply(p) - t.apply(p)).norm() < 1e-12 * (1.0 + p.coords.norm() + t.translation().norm()));
            }
        }

        #[test]
        fn homography_composition_matches_point_mapping(a in arb_homography(), b in arb_homography(), pts in prop::collection::vec(arb_point(), 100)) {
            let ab = compose_homography(&a, &b).unwrap();
            for p in &pts {
                let want = a.apply(&b.apply(p));
                let got = ab.apply(p);
                prop_assert!((want - got).norm() < 1e-9 * (1.0 + want.coords.norm()));
            }
        }
    }
}
