//! Versioned model checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "ADCK" | version u32 | json_len u32 | json {config, metrics}
//! per parameter: id_len u32 | id utf-8 | rank u32 | dims u32×rank | f32 payload
//! ```
//!
//! Parameters are computed in f64 and stored as f32.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontends::Model;
use crate::synth::read_u32;
use crate::tensor::Tensor;
use crate::train::{EpochMetrics, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ADCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    metrics: Vec<EpochMetrics>,
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Size(format!("{what} {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn take<'a>(cur: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if cur.len() < n {
        return Err(Error::format(format!("{n} bytes of {what}"), format!("{} bytes", cur.len())));
    }
    let (head, tail) = cur.split_at(n);
    *cur = tail;
    Ok(head)
}

impl Checkpoint {
    pub fn new(config: TrainConfig, model: Model, metrics: Vec<EpochMetrics>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            model,
            metrics,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            metrics: self.metrics.clone(),
        })?;
        put_u32(&mut out, header.len(), "config block length")?;
        out.extend_from_slice(&header);
        for p in self.model.params.iter() {
            put_u32(&mut out, p.id.len(), "parameter id length")?;
            out.extend_from_slice(p.id.as_bytes());
            put_u32(&mut out, p.tensor.rank(), "rank")?;
            for &d in p.tensor.shape() {
                put_u32(&mut out, d, "dimension")?;
            }
            for &v in p.tensor.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint; any missing, extra or misshapen parameter is a
    /// format error and nothing is returned.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let magic = take(&mut cur, 4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(
                format!("magic {:?}", String::from_utf8_lossy(CHECKPOINT_MAGIC)),
                format!("{:?}", String::from_utf8_lossy(magic)),
            ));
        }
        let version = read_u32(&mut cur)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                format!("checkpoint version {CHECKPOINT_VERSION}"),
                format!("version {version}"),
            ));
        }
        let header_len = read_u32(&mut cur)? as usize;
        let header: Header = serde_json::from_slice(take(&mut cur, header_len, "config block")?)
            .map_err(|e| Error::format("valid config block", e.to_string()))?;
        let mut model = Model::new(&header.config.model).map_err(|e| Error::format("buildable model config", e.to_string()))?;

        let mut seen = HashSet::new();
        while !cur.is_empty() {
            let id_len = read_u32(&mut cur)? as usize;
            let id = std::str::from_utf8(take(&mut cur, id_len, "parameter id")?)
                .map_err(|_| Error::format("utf-8 parameter id", "invalid utf-8"))?
                .to_string();
            let pid = model
                .params
                .lookup(&id)
                .ok_or_else(|| Error::format("a parameter of the configured model", format!("unknown id {id:?}")))?;
            if !seen.insert(id.clone()) {
                return Err(Error::format("each parameter once", format!("{id:?} repeated")));
            }
            let rank = read_u32(&mut cur)? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(read_u32(&mut cur)? as usize);
            }
            let expected = model.params.tensor(pid).shape().to_vec();
            if dims != expected {
                return Err(Error::format(format!("{id} with shape {expected:?}"), format!("shape {dims:?}")));
            }
            let n: usize = dims.iter().product();
            let payload = take(&mut cur, 4 * n, "parameter payload")?;
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            *model.params.tensor_mut(pid) = Tensor::new(dims, data)?;
        }
        if seen.len() != model.params.len() {
            let missing: Vec<_> = model.params.iter().filter(|p| !seen.contains(&p.id)).map(|p| p.id.clone()).collect();
            return Err(Error::format(
                format!("{} parameters", model.params.len()),
                format!("missing {missing:?}"),
            ));
        }
        Ok(Self {
            version,
            config: header.config,
            model,
            metrics: header.metrics,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
