//! Sparse 2-D translation accumulator with query-time Gaussian smoothing.
//!
//! A query at continuous bin coordinates `(x, y)` returns the bilinear
//! interpolation of the densely smoothed field `S = A * g` over the four
//! surrounding integer cells, where `g` is a separable, truncated and
//! normalized sampled Gaussian. This is evaluated sparsely: every stored cell
//! `e` contributes `m_e * kx(e) * ky(e)` with
//! `kx(e) = (1 - fx) g(x0 - ex) + fx g(x0 + 1 - ex)`.

use std::collections::{BTreeMap, HashMap};

const BUCKET: i32 = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    taps: Vec<f64>,
    radius: i32,
}

impl Kernel {
    /// Gaussian with `sigma` (in bins) truncated at `truncate * sigma`,
    /// normalized to unit sum.
    pub fn gaussian(sigma: f64, truncate: f64) -> Self {
        let radius = (truncate * sigma).ceil().max(0.0) as i32;
        let mut taps: Vec<f64> = (-radius..=radius)
            .map(|d| {
                if sigma > 0.0 {
                    (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()
                } else if d == 0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Self { taps, radius }
    }

    #[inline]
    pub fn radius(&self) -> i32 {
        self.radius
    }

    /// Tap at integer offset `d`; zero beyond the truncation radius.
    #[inline]
    pub fn at(&self, d: i32) -> f64 {
        if d.abs() > self.radius {
            0.0
        } else {
            self.taps[(d + self.radius) as usize]
        }
    }

    pub fn center(&self) -> f64 {
        self.at(0)
    }

    #[inline]
    fn interp(&self, base: i32, frac: f64, e: i32) -> f64 {
        (1.0 - frac) * self.at(base - e) + frac * self.at(base + 1 - e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub ix: i32,
    pub iy: i32,
    pub mass: f64,
}

/// Smoothed-field maximum at an integer cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePeak {
    pub ix: i32,
    pub iy: i32,
    pub value: f64,
}

#[inline]
fn bucket_of(i: i32) -> i32 {
    i.div_euclid(BUCKET)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparsePlane {
    /// Sorted by (bucket y, bucket x, iy, ix); one entry per cell.
    cells: Vec<Cell>,
    buckets: HashMap<(i32, i32), (u32, u32)>,
}

impl SparsePlane {
    /// Sums duplicate cells and drops non-positive masses.
    pub fn from_cells(cells: impl IntoIterator<Item = Cell>) -> Self {
        let mut merged: BTreeMap<(i32, i32, i32, i32), f64> = BTreeMap::new();
        for c in cells {
            *merged
                .entry((bucket_of(c.iy), bucket_of(c.ix), c.iy, c.ix))
                .or_insert(0.0) += c.mass;
        }
        let cells: Vec<Cell> = merged
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|((_, _, iy, ix), mass)| Cell { ix, iy, mass })
            .collect();
        let mut buckets = HashMap::new();
        let mut start = 0usize;
        while start < cells.len() {
            let key = (bucket_of(cells[start].iy), bucket_of(cells[start].ix));
            let mut end = start + 1;
            while end < cells.len() && (bucket_of(cells[end].iy), bucket_of(cells[end].ix)) == key {
                end += 1;
            }
            buckets.insert((key.1, key.0), (start as u32, end as u32));
            start = end;
        }
        Self { cells, buckets }
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.cells.iter_mut().for_each(|c| c.mass *= s);
        out
    }

    /// Smoothed, bilinearly interpolated field at continuous bin coordinates.
    pub fn lookup(&self, kernel: &Kernel, x: f64, y: f64) -> f64 {
        if self.cells.is_empty() || !x.is_finite() || !y.is_finite() {
            return 0.0;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as i32, y0 as i32);
        let r = kernel.radius();
        let (xlo, xhi) = (x0 - r, x0 + 1 + r);
        let (ylo, yhi) = (y0 - r, y0 + 1 + r);
        let mut sum = 0.0;
        for by in bucket_of(ylo)..=bucket_of(yhi) {
            for bx in bucket_of(xlo)..=bucket_of(xhi) {
                let Some(&(s, e)) = self.buckets.get(&(bx, by)) else {
                    continue;
                };
                for c in &self.cells[s as usize..e as usize] {
                    if c.ix < xlo || c.ix > xhi || c.iy < ylo || c.iy > yhi {
                        continue;
                    }
                    let kx = kernel.interp(x0, fx, c.ix);
                    if kx == 0.0 {
                        continue;
                    }
                    sum += c.mass * kx * kernel.interp(y0, fy, c.iy);
                }
            }
        }
        sum
    }

    /// Maximum of the smoothed field over integer cells. Ties resolve to the
    /// smallest `(iy, ix)`.
    ///
    /// Works tile by tile (one tile per bucket) in descending order of an
    /// upper bound, `kernel.center()^2` times the mass within reach, and stops
    /// once no remaining tile can beat the best value found.
    pub fn smoothed_max(&self, kernel: &Kernel) -> Option<PlanePeak> {
        if self.cells.is_empty() {
            return None;
        }
        let r = kernel.radius();
        let reach = (r + BUCKET - 1) / BUCKET;
        let mut bucket_mass: HashMap<(i32, i32), f64> = HashMap::new();
        for (&key, &(s, e)) in &self.buckets {
            bucket_mass.insert(key, self.cells[s as usize..e as usize].iter().map(|c| c.mass).sum());
        }
        let mut tiles: Vec<(i32, i32)> = Vec::new();
        for &(bx, by) in self.buckets.keys() {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    tiles.push((bx + dx, by + dy));
                }
            }
        }
        tiles.sort_unstable();
        tiles.dedup();
        let peak_tap = kernel.center() * kernel.center();
        let mut ranked: Vec<(f64, (i32, i32))> = tiles
            .into_iter()
            .map(|(bx, by)| {
                let mut m = 0.0;
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        m += bucket_mass.get(&(bx + dx, by + dy)).copied().unwrap_or(0.0);
                    }
                }
                (m * peak_tap * (1.0 + 1e-9), (bx, by))
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1 .1, a.1 .0).cmp(&(b.1 .1, b.1 .0))));
        let mut best: Option<PlanePeak> = None;
        for (bound, (bx, by)) in ranked {
            if best.is_some_and(|b| bound < b.value) {
                break;
            }
            let p = self.tile_max(kernel, bx, by, reach);
            if best.is_none_or(|b| p.value > b.value || (p.value == b.value && (p.iy, p.ix) < (b.iy, b.ix))) {
                best = Some(p);
            }
        }
        best
    }

    /// Exact smoothed maximum over the integer cells of one tile.
    fn tile_max(&self, kernel: &Kernel, bx: i32, by: i32, reach: i32) -> PlanePeak {
        const W: usize = BUCKET as usize;
        let r = kernel.radius();
        let (x0, y0) = (bx * BUCKET, by * BUCKET);
        let span = W + 2 * r as usize;
        // Horizontal pass into rows indexed by iy - (y0 - r).
        let mut rows: Vec<Option<[f64; W]>> = vec![None; span];
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let Some(&(s, e)) = self.buckets.get(&(bx + dx, by + dy)) else {
                    continue;
                };
                for c in &self.cells[s as usize..e as usize] {
                    let ry = c.iy - (y0 - r);
                    if ry < 0 || ry >= span as i32 || c.ix < x0 - r || c.ix > x0 + BUCKET - 1 + r {
                        continue;
                    }
                    let row = rows[ry as usize].get_or_insert([0.0; W]);
                    for (j, o) in row.iter_mut().enumerate() {
                        *o += c.mass * kernel.at(x0 + j as i32 - c.ix);
                    }
                }
            }
        }
        let mut best = PlanePeak {
            ix: x0,
            iy: y0,
            value: f64::MIN,
        };
        let mut out = [0.0f64; W];
        for oy in 0..W {
            out.fill(0.0);
            // Output row y0 + oy reads source rows oy..=oy + 2r.
            for (k, row) in rows[oy..=oy + 2 * r as usize].iter().enumerate() {
                if let Some(row) = row {
                    let g = kernel.at(k as i32 - r);
                    for (o, v) in out.iter_mut().zip(row) {
                        *o += g * v;
                    }
                }
            }
            for (j, &v) in out.iter().enumerate() {
                if v > best.value {
                    best = PlanePeak {
                        ix: x0 + j as i32,
                        iy: y0 + oy as i32,
                        value: v,
                    };
                }
            }
        }
        best
    }
}
