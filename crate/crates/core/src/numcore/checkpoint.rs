//! Binary checkpoint: `OMX1`, then little-endian `u32` dims
//! (input_dim, hidden count, each hidden dim, feature_dim, C^l, C^u), then
//! every parameter as little-endian `f64` in declaration order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{Architecture, Model, Params};

pub const MAGIC: &[u8; 4] = b"OMX1";

pub fn encode(model: &Model) -> Vec<u8> {
    let arch = model.arch();
    let mut out = Vec::with_capacity(4 + 4 * (5 + arch.hidden_dims.len()) + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    let mut put = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(arch.input_dim);
    put(arch.hidden_dims.len());
    for &h in &arch.hidden_dims {
        put(h);
    }
    put(arch.feature_dim);
    put(arch.old_classes);
    put(arch.new_classes);
    for (_, t) in model.params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, expected OMX1".into()));
    }
    let input_dim = r.u32("input_dim")?;
    let hidden_count = r.u32("hidden count")?;
    if hidden_count > 1024 {
        return Err(Error::Checkpoint(format!("implausible hidden count {hidden_count}")));
    }
    let hidden_dims = (0..hidden_count)
        .map(|_| r.u32("hidden dim"))
        .collect::<Result<Vec<_>>>()?;
    let arch = Architecture {
        input_dim,
        hidden_dims,
        feature_dim: r.u32("feature_dim")?,
        old_classes: r.u32("C_l")?,
        new_classes: r.u32("C_u")?,
    };
    arch.validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let expected = arch
        .param_count()
        .checked_mul(8)
        .ok_or_else(|| Error::Checkpoint("parameter count overflows".into()))?;
    if bytes.len() - r.pos != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} parameter bytes, found {}",
            bytes.len() - r.pos
        )));
    }
    let mut params = Params::zeros(&arch);
    for (_, t) in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(r.take(8, "parameter")?.try_into().unwrap());
        }
    }
    Model::from_params(arch, params)
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
