use std::path::Path;

use num_complex::Complex64;

use super::{product_checked, put_u32, write_file, Reader};
use crate::csi::{CsiFrame, CsiStream};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CSI1";

/// `CSI1`, then `u32 n_tx, u32 n_rx, u32 n_sub, u64 frames, f64 rate`, then
/// every frame as `(re, im)` f64 pairs in `(tx, rx, sub)` order.
pub fn encode_stream(stream: &CsiStream) -> Result<Vec<u8>> {
    let per_frame = stream.n_tx * stream.n_rx * stream.n_sub;
    let mut out = Vec::with_capacity(32 + stream.len() * per_frame * 16);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, stream.n_tx)?;
    put_u32(&mut out, stream.n_rx)?;
    put_u32(&mut out, stream.n_sub)?;
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    out.extend_from_slice(&stream.sample_rate_hz.to_le_bytes());
    for f in stream.frames() {
        for c in &f.h {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    Ok(out)
}

/// Packet indices restart at 0 and timestamps are `index / rate`; the label
/// is not stored (the manifest carries it).
pub fn decode_stream(bytes: &[u8]) -> Result<CsiStream> {
    let mut r = Reader::new(bytes, "CSI1");
    r.magic(MAGIC)?;
    let n_tx = r.u32()? as usize;
    let n_rx = r.u32()? as usize;
    let n_sub = r.u32()? as usize;
    let n_frames = usize::try_from(r.u64()?).map_err(|_| Error::Corrupt("CSI1: frame count overflows".into()))?;
    let rate = r.f64()?;
    if n_tx == 0 || n_rx == 0 || n_sub == 0 || n_frames == 0 {
        return Err(Error::Format(format!(
            "CSI1: empty header shape {n_tx}x{n_rx}x{n_sub}, {n_frames} frames"
        )));
    }
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Format(format!("CSI1: invalid sample rate {rate}")));
    }
    let per_frame = product_checked(&[n_tx, n_rx, n_sub], "CSI1")?;
    let total = product_checked(&[per_frame, n_frames, 2], "CSI1")?;
    let values = r.f64s(total)?;
    r.finish()?;
    let frames = values
        .chunks_exact(per_frame * 2)
        .enumerate()
        .map(|(i, chunk)| {
            let h = chunk.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            CsiFrame::new(h, n_tx, n_rx, n_sub, i as u64, i as f64 / rate)
                .map_err(|e| Error::Corrupt(format!("CSI1 frame {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    CsiStream::new(frames, n_tx, n_rx, n_sub, rate, None)
}

pub fn save_stream(path: &Path, stream: &CsiStream) -> Result<()> {
    write_file(path, &encode_stream(stream)?)
}

pub fn load_stream(path: &Path) -> Result<CsiStream> {
    decode_stream(&std::fs::read(path)?)
}
