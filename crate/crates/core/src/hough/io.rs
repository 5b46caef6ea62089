//! Binary Hough space cache: magic, version, quantization constants, extent,
//! vote mass, entry count, then `(ix: i32, iy: i32, ig: u32, mass: f64)`
//! records. Little-endian throughout.

use std::io::{Read, Write};

use super::space::{HoughParams, HoughSpace};
use crate::error::{Error, Result};
use crate::features::cache::{read_f64, read_i32, read_u32, read_u64};

const MAGIC: &[u8; 4] = b"GRHS";
const VERSION: u32 = 1;

pub fn write_hough<W: Write>(h: &HoughSpace, mut w: W) -> Result<()> {
    let p = h.params();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(p.rot_bins as u32).to_le_bytes())?;
    for v in [p.trans_bin, p.extent, p.smoothing_sigma, p.truncate, h.total_mass()] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(h.entry_count() as u64).to_le_bytes())?;
    for (ix, iy, ig, m) in h.records() {
        w.write_all(&ix.to_le_bytes())?;
        w.write_all(&iy.to_le_bytes())?;
        w.write_all(&(ig as u32).to_le_bytes())?;
        w.write_all(&m.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_hough<R: Read>(mut r: R) -> Result<HoughSpace> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format("hough space", "bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format("hough space", format!("unsupported version {version}")));
    }
    let rot_bins = read_u32(&mut r)? as usize;
    let params = HoughParams {
        rot_bins,
        trans_bin: read_f64(&mut r)?,
        extent: read_f64(&mut r)?,
        smoothing_sigma: read_f64(&mut r)?,
        truncate: read_f64(&mut r)?,
    };
    if rot_bins == 0 || !(params.trans_bin > 0.0) {
        return Err(Error::format("hough space", "invalid quantization constants"));
    }
    let total_mass = read_f64(&mut r)?;
    let n = read_u64(&mut r)? as usize;
    let mut records = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let ix = read_i32(&mut r)?;
        let iy = read_i32(&mut r)?;
        let ig = read_u32(&mut r)? as usize;
        let m = read_f64(&mut r)?;
        records.push((ix, iy, ig, m));
    }
    HoughSpace::from_records(params, total_mass, records)
}
