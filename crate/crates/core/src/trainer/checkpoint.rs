//! Binary checkpoint format: magic, named tensor records, λ, config echo.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnet::{AdadeltaConfig, ModelConfig, ModelState, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"STARCKPT1";
const DTYPE_F64: u8 = 2;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    FormatVersionMismatch(String),
}

/// JSON echo stored at the end of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub optimizer: AdadeltaConfig,
    pub seed: u64,
    pub radical_labels: Option<usize>,
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(DTYPE_F64);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint(model: &ModelState) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    let n = model.params.len() * 3;
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for (_, name, t) in model.params.iter() {
        put_record(&mut out, name, t.shape(), t.data());
    }
    for (id, name, t) in model.params.iter() {
        let slot = &model.optimizer.slots[id.index()];
        put_record(&mut out, &format!("opt.sq_grad.{name}"), t.shape(), &slot.sq_grad);
        put_record(&mut out, &format!("opt.sq_delta.{name}"), t.shape(), &slot.sq_delta);
    }
    out.extend_from_slice(&model.lambda.to_le_bytes());
    let meta = CheckpointMeta {
        model: model.config.clone(),
        optimizer: model.optimizer.config,
        seed: model.seed,
        radical_labels: model.radical_vocab().map(|v| v.labels),
    };
    let json = serde_json::to_vec(&meta).expect("config serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}

pub fn save_checkpoint(model: &ModelState, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, write_checkpoint(model))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                CheckpointError::FormatVersionMismatch(format!("truncated at byte {} (wanted {n} more)", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn bad(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::FormatVersionMismatch(msg.into())
}

/// Parses checkpoint bytes into a complete model, or fails without partial state.
pub fn read_checkpoint(bytes: &[u8]) -> Result<ModelState, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len()).ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(bad("missing STARCKPT1 header"));
    }
    let count = r.u32()? as usize;
    let mut records = std::collections::HashMap::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| bad("record name is not UTF-8"))?
            .to_string();
        if r.take(1)?[0] != DTYPE_F64 {
            return Err(bad(format!("{name}: unsupported dtype")));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("dims overflow"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("dims overflow"))?)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if records.insert(name.clone(), (shape, data)).is_some() {
            return Err(bad(format!("duplicate record {name}")));
        }
    }
    let lambda = r.f64()?;
    let jlen = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(jlen)?).map_err(|e| bad(format!("config echo: {e}")))?;
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut model = ModelState::new(meta.model, meta.radical_labels, lambda, meta.seed)
        .map_err(|e| bad(format!("config echo: {e}")))?;
    model.optimizer.config = meta.optimizer;
    if records.len() != model.params.len() * 3 {
        return Err(bad(format!(
            "expected {} records, found {}",
            model.params.len() * 3,
            records.len()
        )));
    }
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let name = model.params.name(id).to_string();
        let shape = model.params.get(id).shape().to_vec();
        let mut fetch = |key: &str| -> Result<Vec<f64>, CheckpointError> {
            let (s, d) = records
                .remove(key)
                .ok_or_else(|| bad(format!("missing record {key}")))?;
            if s != shape {
                return Err(bad(format!("{key}: shape {s:?}, expected {shape:?}")));
            }
            Ok(d)
        };
        let value = fetch(&name)?;
        let sq_grad = fetch(&format!("opt.sq_grad.{name}"))?;
        let sq_delta = fetch(&format!("opt.sq_delta.{name}"))?;
        *model.params.get_mut(id) = Tensor::new(shape, value).expect("shape checked");
        let slot = &mut model.optimizer.slots[id.index()];
        slot.sq_grad = sq_grad;
        slot.sq_delta = sq_delta;
    }
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState, CheckpointError> {
    read_checkpoint(&fs::read(path)?)
}
