//! Binary feature cache: magic, version, count, then per record the frame
//! (4 x f64) and descriptor (128 x f32), all little-endian.

use std::io::{Read, Write};

use super::descriptor::{Descriptor, FeatureFrame, FeatureSet, DESCRIPTOR_LEN};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GRFT";
const VERSION: u32 = 1;

pub fn write_features<W: Write>(set: &FeatureSet, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(set.len() as u64).to_le_bytes())?;
    for (f, d) in set.frames.iter().zip(&set.descriptors) {
        for v in [f.x, f.y, f.sigma, f.theta] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in d.0 {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<FeatureSet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::format("feature cache", "bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format(
            "feature cache",
            format!("unsupported version {version}"),
        ));
    }
    let n = read_u64(&mut r)? as usize;
    let mut set = FeatureSet::default();
    for _ in 0..n {
        let frame = FeatureFrame {
            x: read_f64(&mut r)?,
            y: read_f64(&mut r)?,
            sigma: read_f64(&mut r)?,
            theta: read_f64(&mut r)?,
        };
        let mut d = Descriptor::zeros();
        let mut buf = [0u8; 4 * DESCRIPTOR_LEN];
        r.read_exact(&mut buf)?;
        for (v, chunk) in d.0.iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        set.push(frame, d);
    }
    Ok(set)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_i32<R: Read>(r: &mut R) -> Result<i32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(i32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{dense_sample, testing::texture};

    #[test]
    fn round_trip_is_bit_identical() {
        let set = dense_sample(&texture(128, 2), 16.0, 48.0).unwrap();
        let mut buf = Vec::new();
        write_features(&set, &mut buf).unwrap();
        let back = read_features(buf.as_slice()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_features(&b"NOPE\x01\0\0\0"[..]).is_err());
        let set = dense_sample(&texture(96, 2), 16.0, 48.0).unwrap();
        let mut buf = Vec::new();
        write_features(&set, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_features(buf.as_slice()).is_err());
    }
}
