use std::path::Path;

use super::{product_checked, put_f64s, put_u32, write_file, Reader};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::volume::Volume3D;

const MAGIC: &[u8; 4] = b"VOL1";

/// `VOL1`, `u64 count`, then per volume `u32 d0, d1, d2, u32 scale,
/// u64 source_segment, i64 label (-1 for none)` and `d0*d1*d2` f64 values.
pub fn encode_volumes(volumes: &[Volume3D]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(volumes.len() as u64).to_le_bytes());
    for v in volumes {
        let (a, b, c) = v.dims();
        put_u32(&mut out, a)?;
        put_u32(&mut out, b)?;
        put_u32(&mut out, c)?;
        put_u32(&mut out, v.scale)?;
        out.extend_from_slice(&(v.source_segment as u64).to_le_bytes());
        let label = v.label.map_or(-1, |l| l as i64);
        out.extend_from_slice(&label.to_le_bytes());
        put_f64s(&mut out, v.data.data());
    }
    Ok(out)
}

pub fn decode_volumes(bytes: &[u8]) -> Result<Vec<Volume3D>> {
    let mut r = Reader::new(bytes, "VOL1");
    r.magic(MAGIC)?;
    let count = r.u64()?;
    // each record carries at least its 32-byte header
    if count > (r.remaining() / 32) as u64 {
        return Err(Error::Corrupt(format!("VOL1: {count} volumes cannot fit in {} bytes", r.remaining())));
    }
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..count {
        let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let scale = r.u32()? as usize;
        let source_segment = r.u64()? as usize;
        let label = match r.i64()? {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(Error::Format(format!("VOL1 volume {k}: invalid label {l}"))),
        };
        if dims.contains(&0) || scale == 0 {
            return Err(Error::Format(format!("VOL1 volume {k}: zero dimension or scale")));
        }
        let n = product_checked(&dims, "VOL1")?;
        let data = Tensor::new(dims.to_vec(), r.f64s(n)?)?;
        out.push(Volume3D { data, scale, source_segment, label });
    }
    r.finish()?;
    Ok(out)
}

pub fn save_volumes(path: &Path, volumes: &[Volume3D]) -> Result<()> {
    write_file(path, &encode_volumes(volumes)?)
}

pub fn load_volumes(path: &Path) -> Result<Vec<Volume3D>> {
    decode_volumes(&std::fs::read(path)?)
}
