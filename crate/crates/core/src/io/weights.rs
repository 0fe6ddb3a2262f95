use std::path::Path;

use super::{product_checked, put_f64s, put_u32, write_file, Reader};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::net::{build_model, Model, NetworkConfig, ScoreFn, Variant};

const MAGIC: &[u8; 4] = b"WGT1";
pub const WEIGHTS_VERSION: u32 = 1;

fn encode_config(out: &mut Vec<u8>, c: &NetworkConfig) -> Result<()> {
    put_u32(out, c.n_classes)?;
    put_u32(out, c.in_channels)?;
    put_u32(out, c.block_channels.len())?;
    for ch in &c.block_channels {
        put_u32(out, *ch)?;
    }
    for k in c.kernel {
        put_u32(out, k)?;
    }
    put_u32(out, c.n_feature_vectors)?;
    put_u32(out, c.feature_dim)?;
    out.push(c.score_fn.code());
    out.push(c.variant.code());
    out.extend_from_slice(&c.seed.to_le_bytes());
    Ok(())
}

fn decode_config(r: &mut Reader<'_>) -> Result<NetworkConfig> {
    let n_classes = r.u32()? as usize;
    let in_channels = r.u32()? as usize;
    let n_blocks = r.u32()? as usize;
    if n_blocks > r.remaining() / 4 {
        return Err(Error::Corrupt(format!("WGT1: block count {n_blocks} exceeds file size")));
    }
    let block_channels = (0..n_blocks).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
    let kernel = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let n_feature_vectors = r.u32()? as usize;
    let feature_dim = r.u32()? as usize;
    let sf = r.u8()?;
    let score_fn = ScoreFn::from_code(sf).ok_or_else(|| Error::Format(format!("WGT1: unknown score function code {sf}")))?;
    let vc = r.u8()?;
    let variant = Variant::from_code(vc).ok_or_else(|| Error::Format(format!("WGT1: unknown variant code {vc}")))?;
    let seed = r.u64()?;
    Ok(NetworkConfig {
        n_classes,
        in_channels,
        block_channels,
        kernel,
        n_feature_vectors,
        feature_dim,
        score_fn,
        variant,
        seed,
    })
}

/// `WGT1`, `u32 version`, config echo, `u32 tensor count`, then per tensor
/// `u32 name_len, name, u32 ndim, u32 dims..., f64 values`.
pub fn encode_weights(model: &Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    encode_config(&mut out, model.config())?;
    put_u32(&mut out, model.params().len())?;
    for p in model.params() {
        put_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.ndim())?;
        for d in p.value.shape() {
            put_u32(&mut out, *d)?;
        }
        put_f64s(&mut out, p.value.data());
    }
    Ok(out)
}

/// Rebuilds the model described by the config echo and fills its tensors.
pub fn decode_weights(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader::new(bytes, "WGT1");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version == 0 || version > WEIGHTS_VERSION {
        return Err(Error::Format(format!(
            "WGT1: unsupported format version {version} (supported: {WEIGHTS_VERSION})"
        )));
    }
    let config = decode_config(&mut r)?;
    let mut model = build_model(&config).map_err(|e| Error::Format(format!("WGT1: config echo invalid: {e}")))?;
    let count = r.u32()? as usize;
    if count != model.params().len() {
        return Err(Error::Corrupt(format!(
            "WGT1: {count} tensors stored, config implies {}",
            model.params().len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for p in model.params() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Corrupt("WGT1: tensor name is not UTF-8".into()))?;
        if name != p.name {
            return Err(Error::Corrupt(format!("WGT1: expected tensor {:?}, found {name:?}", p.name)));
        }
        let ndim = r.u32()? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(Error::Corrupt(format!("WGT1: tensor {name} has rank {ndim}")));
        }
        let dims = (0..ndim).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
        if dims != p.value.shape() {
            return Err(Error::Corrupt(format!(
                "WGT1: tensor {name} stored as {dims:?}, config implies {:?}",
                p.value.shape()
            )));
        }
        let n = product_checked(&dims, "WGT1")?;
        values.push(Tensor::new(dims, r.f64s(n)?)?);
    }
    r.finish()?;
    model.set_params(values)?;
    Ok(model)
}

pub fn save_weights(path: &Path, model: &Model) -> Result<()> {
    write_file(path, &encode_weights(model)?)
}

/// Loads a weight file without a reference configuration.
pub fn read_weights(path: &Path) -> Result<Model> {
    decode_weights(&std::fs::read(path)?)
}

/// Loads weights for `expected`; the stored config echo must match it.
pub fn load_weights(path: &Path, expected: &NetworkConfig) -> Result<Model> {
    let model = read_weights(path)?;
    if model.config() != expected {
        return Err(Error::Compatibility(format!(
            "weights were trained with {:?}, requested {:?}",
            model.config(),
            expected
        )));
    }
    Ok(model)
}
