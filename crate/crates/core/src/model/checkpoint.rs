//! Binary checkpoint format.
//!
//! ```text
//! "DFCK" u32:version u32:len config-json
//! "PARM" u32:count record*
//! ["LORA" u32:len lora-json u32:count record*]
//! "END!"
//! record = u32:name_len name u32:ndim u64:dim* f64:value*
//! ```
//!
//! All integers and floats are little-endian. Values are stored as raw bits,
//! so a round trip is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::ModelConfig;
use super::transformer::MiniTransformer;
use crate::adapters::LoraState;
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DFCK";
const PARM: &[u8; 4] = b"PARM";
const LORA: &[u8; 4] = b"LORA";
const END: &[u8; 4] = b"END!";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_block(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

fn put_records<'a>(out: &mut Vec<u8>, records: impl Iterator<Item = (&'a str, &'a Tensor)>) {
    let records: Vec<_> = records.collect();
    put_u32(out, records.len() as u32);
    for (name, t) in records {
        put_block(out, name.as_bytes());
        put_u32(out, t.shape().len() as u32);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Serializes a model, including any attached LoRA adapter.
pub fn write_checkpoint(m: &MiniTransformer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_block(&mut out, serde_json::to_string(m.config())?.as_bytes());
    out.extend_from_slice(PARM);
    put_records(&mut out, m.params().iter().filter(|(n, _)| !n.starts_with("lora.")));
    if let Some(lora) = m.lora() {
        out.extend_from_slice(LORA);
        put_block(&mut out, serde_json::to_string(lora)?.as_bytes());
        put_records(&mut out, m.params().iter().filter(|(n, _)| n.starts_with("lora.")));
    }
    out.extend_from_slice(END);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::CorruptCheckpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn tag(&mut self) -> Result<[u8; 4]> {
        Ok(self.take(4)?.try_into().unwrap())
    }

    fn records(&mut self, into: &mut ParamStore) -> Result<()> {
        let count = self.u32()?;
        for _ in 0..count {
            let name = std::str::from_utf8(self.block()?)
                .map_err(|_| Error::CorruptCheckpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let ndim = self.u32()? as usize;
            if ndim > 8 {
                return Err(Error::CorruptCheckpoint(format!("`{name}` has {ndim} dims")));
            }
            let shape = (0..ndim)
                .map(|_| self.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("`{name}` shape {shape:?} overflows"))
            })?;
            let raw = self.take(n.checked_mul(8).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("`{name}` too large"))
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            into.insert(name, Tensor::new(&shape, data)?)
                .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        }
        Ok(())
    }
}

/// Inverse of [`write_checkpoint`]. Base parameters come back trainable;
/// with an adapter section, only the adapter matrices are.
pub fn read_checkpoint(bytes: &[u8]) -> Result<MiniTransformer> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.tag()? != *MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let cfg: ModelConfig = serde_json::from_slice(r.block()?)
        .map_err(|e| Error::CorruptCheckpoint(format!("config: {e}")))?;
    if r.tag()? != *PARM {
        return Err(Error::CorruptCheckpoint("missing PARM section".into()));
    }
    let mut params = ParamStore::new();
    r.records(&mut params)?;
    let expected = cfg.param_specs().len();
    if params.len() != expected {
        return Err(Error::CorruptCheckpoint(format!(
            "{} parameters, config implies {expected}",
            params.len()
        )));
    }
    params.set_all_requires_grad(true);

    let mut lora = None;
    let mut tag = r.tag()?;
    if tag == *LORA {
        let state: LoraState = serde_json::from_slice(r.block()?)
            .map_err(|e| Error::CorruptCheckpoint(format!("adapter config: {e}")))?;
        params.set_all_requires_grad(false);
        let before = params.len();
        r.records(&mut params)?;
        if params.len() - before != 2 * state.layers.len() {
            return Err(Error::CorruptCheckpoint("adapter matrix count mismatch".into()));
        }
        for layer in &state.layers {
            for name in [LoraState::a_name(layer), LoraState::b_name(layer)] {
                params
                    .get_mut(&name)
                    .map_err(|_| Error::CorruptCheckpoint(format!("missing `{name}`")))?
                    .set_requires_grad(true);
            }
        }
        lora = Some(state);
        tag = r.tag()?;
    }
    if tag != *END {
        return Err(Error::CorruptCheckpoint("missing END marker".into()));
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let mut m = MiniTransformer::from_parts(cfg, params)?;
    m.lora = lora;
    Ok(m)
}

pub fn save_checkpoint(m: &MiniTransformer, path: &Path) -> Result<()> {
    let bytes = write_checkpoint(m)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MiniTransformer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}
