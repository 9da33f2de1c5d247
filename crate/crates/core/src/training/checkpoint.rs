//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TRJFLOWC"
//! version   u32
//! header    u32 length + UTF-8 JSON {config, meta}
//! alpha     f64
//! perms     u32 count, then per permutation: u32 length + u32 indices
//! arrays    u32 count, then per array:
//!           u32 name length + name, u32 ndim, u64 dims, f64 data
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Permutation};
use crate::model::FlowModel;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TRJFLOWC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Free-form information stored next to the parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Observed steps the model was trained on.
    #[serde(default)]
    pub t_obs: Option<usize>,
    /// Hash of the run configuration that produced the checkpoint.
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub tool_version: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: FlowConfig,
    meta: CheckpointMeta,
}

pub fn save_checkpoint(model: &FlowModel, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint_with_meta(model, &CheckpointMeta::default(), path)
}

pub fn save_checkpoint_with_meta(
    model: &FlowModel,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, encode(model, meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FlowModel> {
    load_checkpoint_with_meta(path).map(|(m, _)| m)
}

pub fn load_checkpoint_with_meta(path: impl AsRef<Path>) -> Result<(FlowModel, CheckpointMeta)> {
    decode(&std::fs::read(path)?)
}

/// Loads and checks that the stored configuration equals `expected`.
pub fn load_checkpoint_expecting(
    path: impl AsRef<Path>,
    expected: &FlowConfig,
) -> Result<FlowModel> {
    let model = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(Error::ConfigMismatch(format!(
            "stored {:?}, expected {:?}",
            model.config(),
            expected
        )));
    }
    Ok(model)
}

fn u32_len(n: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(n)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Format(format!("{what} too large: {n}")))
}

fn encode(model: &FlowModel, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        config: model.config().clone(),
        meta: meta.clone(),
    })
    .map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(64 + header.len() + 8 * model.params().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_len(header.len(), "header")?);
    out.extend_from_slice(&header);
    out.extend_from_slice(&model.alpha().to_le_bytes());

    let perms = model.permutations();
    out.extend_from_slice(&u32_len(perms.len(), "permutation count")?);
    for p in perms {
        out.extend_from_slice(&u32_len(p.len(), "permutation")?);
        for &i in p.indices() {
            out.extend_from_slice(&u32_len(i, "permutation index")?);
        }
    }

    let entries = model.layout().entries();
    out.extend_from_slice(&u32_len(entries.len(), "array count")?);
    for e in entries {
        out.extend_from_slice(&u32_len(e.name.len(), "array name")?);
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&u32_len(e.shape.len(), "ndim")?);
        for &d in &e.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &model.params()[e.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let b = self.take(8, what)?;
        usize::try_from(u64::from_le_bytes(b.try_into().expect("8 bytes")))
            .map_err(|_| Error::Format(format!("{what} does not fit in memory")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

fn decode(buf: &[u8]) -> Result<(FlowModel, CheckpointMeta)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u32("version")? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = r.u32("header length")?;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    let alpha = r.f64("alpha")?;

    let n_perms = r.u32("permutation count")?;
    let mut perms = Vec::with_capacity(n_perms.min(1024));
    for _ in 0..n_perms {
        let len = r.u32("permutation length")?;
        let idx = (0..len)
            .map(|_| r.u32("permutation index"))
            .collect::<Result<Vec<_>>>()?;
        perms.push(Permutation::new(idx).map_err(|e| Error::Format(e.to_string()))?);
    }

    let n_arrays = r.u32("array count")?;
    let mut arrays = Vec::with_capacity(n_arrays.min(1024));
    for _ in 0..n_arrays {
        let name_len = r.u32("array name length")?;
        let name = std::str::from_utf8(r.take(name_len, "array name")?)
            .map_err(|_| Error::Format("array name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32("ndim")?;
        let shape = (0..ndim)
            .map(|_| r.u64("dim"))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("array {name} is too large")))?;
        let data = r.take(n.saturating_mul(8), &name)?;
        arrays.push((name, shape, data));
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }

    let layout = FlowModel::layout_for(&header.config)?;
    if layout.entries().len() != arrays.len() {
        return Err(Error::ConfigMismatch(format!(
            "expected {} arrays, found {}",
            layout.entries().len(),
            arrays.len()
        )));
    }
    let mut params = vec![0.0; layout.len()];
    for (entry, (name, shape, data)) in layout.entries().iter().zip(&arrays) {
        if &entry.name != name || &entry.shape != shape {
            return Err(Error::ConfigMismatch(format!(
                "array {name} {shape:?} where {} {:?} was expected",
                entry.name, entry.shape
            )));
        }
        for (p, b) in params[entry.range()].iter_mut().zip(data.chunks_exact(8)) {
            *p = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
    }
    let model = FlowModel::from_parts(header.config, perms, params, alpha)?;
    Ok((model, header.meta))
}
