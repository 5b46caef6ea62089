//! Procedural ground texture evaluated on continuous world coordinates.
//!
//! Multi-octave value noise plus two "road" networks taken from isolines of
//! low-frequency noise. Rendering evaluates the field directly at transformed
//! coordinates, so warped copies carry no resampling blur.

/// Hash-based infinite value-noise texture. Coordinates are in pixels of the
/// reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProceduralTexture {
    seed: u64,
}

const DETAIL_OCTAVES: [(f64, f64); 4] = [(24.0, 0.45), (12.0, 0.3), (6.0, 0.17), (3.0, 0.08)];
const ROAD_WAVELENGTH: [f64; 2] = [70.0, 45.0];
const ROAD_HALF_WIDTH: f64 = 0.035;

impl ProceduralTexture {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Texture value in `[0, 1]`.
    pub fn eval(&self, x: f64, y: f64) -> f32 {
        let mut detail = 0.0;
        let mut amp_sum = 0.0;
        for (i, &(wl, amp)) in DETAIL_OCTAVES.iter().enumerate() {
            detail += amp * value_noise(self.seed ^ (0x9e37 + i as u64), x / wl, y / wl);
            amp_sum += amp;
        }
        detail /= amp_sum;

        let mut road: f64 = 0.0;
        for (i, &wl) in ROAD_WAVELENGTH.iter().enumerate() {
            let n = value_noise(self.seed.wrapping_mul(31).wrapping_add(101 + i as u64), x / wl, y / wl);
            let d = (n - 0.5) / ROAD_HALF_WIDTH;
            road = road.max((-d * d).exp());
        }
        let v = 0.15 + 0.5 * detail + 0.35 * road;
        v.clamp(0.0, 1.0) as f32
    }
}

#[inline]
fn hash2(seed: u64, ix: i64, iy: i64) -> f64 {
    let mut h = seed
        ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn smooth(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (ix, iy) = (x0 as i64, y0 as i64);
    let fx = smooth(x - x0);
    let fy = smooth(y - y0);
    let a = hash2(seed, ix, iy);
    let b = hash2(seed, ix + 1, iy);
    let c = hash2(seed, ix, iy + 1);
    let d = hash2(seed, ix + 1, iy + 1);
    let top = a + (b - a) * fx;
    let bot = c + (d - c) * fx;
    top + (bot - top) * fy
}
