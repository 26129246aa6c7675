//! `PULSECKP` checkpoints.
//!
//! Layout, all integers little-endian: magic `PULSECKP`, u32 version, u64
//! seed, u32 length + UTF-8 `key=value` ModelConfig text, u32 tensor count,
//! then per tensor: u32 name length, name, u32 rank, u64 dims, f64 values.
//! The head-output affine map is stored as the tensors `pose.mean` and
//! `pose.scale`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::model::{ModelConfig, PulseModel};

pub const MAGIC: &[u8; 8] = b"PULSECKP";
pub const VERSION: u32 = 1;
const POSE_MEAN: &str = "pose.mean";
const POSE_SCALE: &str = "pose.scale";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PulseModel,
    /// Seed of the run that produced the weights.
    pub seed: u64,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[f64]) {
    put_str(out, name);
    put_u32(out, shape.len());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Data("checkpoint string is not UTF-8".into()))
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let name = self.string()?;
        let rank = self.u32()?;
        let shape = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Data("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((name, shape, values))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        put_str(&mut out, &m.cfg.to_key_values().to_text());
        put_u32(&mut out, m.params.len() + 2);
        for (name, t) in m.params.iter() {
            put_tensor(&mut out, name, t.shape(), t.data());
        }
        put_tensor(&mut out, POSE_MEAN, &[m.pose_mean.len()], &m.pose_mean);
        put_tensor(&mut out, POSE_SCALE, &[m.pose_scale.len()], &m.pose_scale);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Data("not a PULSECKP checkpoint (bad magic)".into()));
        }
        let version = r.u32()? as u32;
        if version != VERSION {
            return Err(Error::Data(format!("checkpoint version {version}, expected {VERSION}")));
        }
        let seed = r.u64()?;
        let cfg = ModelConfig::from_key_values(&KeyValues::parse(&r.string()?)?, &ModelConfig::default())?;
        let mut model = PulseModel::new(cfg, 0)?;
        let count = r.u32()?;
        if count != model.params.len() + 2 {
            return Err(Error::Data(format!(
                "checkpoint has {count} tensors, its config implies {}",
                model.params.len() + 2
            )));
        }
        let mut stats = Vec::new();
        for i in 0..count {
            let (name, shape, values) = r.tensor()?;
            if i < model.params.len() {
                let expected = &model.params.names()[i];
                let t = model.params.tensor(i);
                if &name != expected || shape != t.shape() {
                    return Err(Error::Data(format!(
                        "checkpoint tensor {i} is '{name}' {shape:?}, config expects '{expected}' {:?}",
                        t.shape()
                    )));
                }
                model.params.data_mut(i).copy_from_slice(&values);
            } else {
                let expected = [POSE_MEAN, POSE_SCALE][i - model.params.len()];
                if name != expected || shape != [3 * model.cfg.joints] {
                    return Err(Error::Data(format!("checkpoint tensor '{name}' {shape:?} where '{expected}' belongs")));
                }
                stats.push(values);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Data(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
        }
        let scale = stats.pop().expect("two stats tensors");
        let mean = stats.pop().expect("two stats tensors");
        let model = model.with_pose_stats(mean, scale)?;
        if !model.params.all_finite() {
            return Err(Error::Numeric("checkpoint holds non-finite parameters".into()));
        }
        Ok(Self { model, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Loads and checks the stored config against `expected`, naming every
    /// differing key.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ckpt = Self::load(path)?;
        let (have, want) = (ckpt.model.cfg.to_key_values(), expected.to_key_values());
        let diffs: Vec<String> = want
            .iter()
            .filter(|(k, v)| have.get(k) != Some(*v))
            .map(|(k, v)| format!("{k}: checkpoint {} vs requested {v}", have.get(k).unwrap_or("?")))
            .collect();
        if !diffs.is_empty() {
            return Err(Error::Config(format!(
                "{} was trained with a different model config ({})",
                path.display(),
                diffs.join(", ")
            )));
        }
        Ok(ckpt)
    }
}
