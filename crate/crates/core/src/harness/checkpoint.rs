//! Binary checkpoint files.
//!
//! ```text
//! "SRPC" | u32 version = 1 | u32 tensor count
//! per tensor: u16 name length | name | u8 dtype (0 = f32) | u8 rank | u32 dims | f32 payload
//! u64 seed | u32 config length | config text
//! ```
//!
//! All integers and floats are little-endian. Running batch-norm statistics
//! are stored as `<layer>.running_mean` / `<layer>.running_var` and the input
//! normalization as `data.norm_mean` / `data.norm_std`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::RunConfig;
use super::data::{Normalization, CHANNELS};
use super::train::Model;

pub const MAGIC: &[u8; 4] = b"SRPC";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const EPOCH_KEY: &str = "checkpoint.epoch";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub run: RunConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    pub seed: u64,
}

fn named_tensors(model: &Model) -> Vec<(String, Tensor<f32>)> {
    let mut out: Vec<(String, Tensor<f32>)> = model
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    for (name, stats) in model.buffers.iter() {
        let c = stats.mean.len();
        let t = |v: &Vec<f32>| Tensor::from_vec(&[c], v.clone()).expect("stat length");
        out.push((format!("{name}.running_mean"), t(&stats.mean)));
        out.push((format!("{name}.running_var"), t(&stats.var)));
    }
    let n = |v: [f32; CHANNELS]| Tensor::from_vec(&[CHANNELS], v.to_vec()).expect("channels");
    out.push(("data.norm_mean".into(), n(model.norm.mean)));
    out.push(("data.norm_std".into(), n(model.norm.std)));
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = named_tensors(&self.model);
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            b.extend_from_slice(&(name.len() as u16).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.push(DTYPE_F32);
            b.push(t.rank() as u8);
            for &d in t.shape() {
                b.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b.extend_from_slice(&self.seed.to_le_bytes());
        let mut run = self.run.clone();
        run.net = self.model.net.cfg.clone();
        let text = format!("{}{EPOCH_KEY} = {}\n", run.to_text(), self.epoch);
        b.extend_from_slice(&(text.len() as u32).to_le_bytes());
        b.extend_from_slice(text.as_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.u8()?;
            if dtype != DTYPE_F32 {
                return Err(Error::Checkpoint(format!("{name}: unsupported dtype {dtype}")));
            }
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
            let payload = r.take(numel.checked_mul(4).ok_or_else(|| {
                Error::Checkpoint(format!("{name}: shape overflows"))
            })?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        let seed = r.u64()?;
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("config snapshot is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after config snapshot",
                bytes.len() - r.pos
            )));
        }
        let (run, epoch) = split_snapshot(text)?;
        let model = restore(&run, seed, tensors)?;
        Ok(Checkpoint {
            model,
            run,
            epoch,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
            .map_err(|e| match e {
                Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
                other => other,
            })
    }
}

fn split_snapshot(text: &str) -> Result<(RunConfig, usize)> {
    let mut epoch = None;
    let mut rest = String::new();
    for line in text.lines() {
        match line.split_once('=') {
            Some((k, v)) if k.trim() == EPOCH_KEY => {
                epoch = Some(v.trim().parse().map_err(|_| {
                    Error::Checkpoint(format!("invalid {EPOCH_KEY} `{}`", v.trim()))
                })?);
            }
            _ => {
                rest.push_str(line);
                rest.push('\n');
            }
        }
    }
    let run = RunConfig::parse(&rest)
        .map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))?;
    let epoch = epoch.ok_or_else(|| Error::Checkpoint(format!("missing {EPOCH_KEY}")))?;
    Ok((run, epoch))
}

fn restore(run: &RunConfig, seed: u64, tensors: Vec<(String, Tensor<f32>)>) -> Result<Model> {
    let mut model = Model::init(&run.net, seed)
        .map_err(|e| Error::Checkpoint(format!("config snapshot: {e}")))?;
    let expected = named_tensors(&model);
    if expected.len() != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors for this architecture, found {}",
            expected.len(),
            tensors.len()
        )));
    }
    let mut found = std::collections::HashMap::new();
    for (name, t) in tensors {
        if found.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    let mut get = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
        let t = found
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if t.shape() != shape {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?}, architecture needs {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    };
    let names: Vec<String> = model.params.names().to_vec();
    for (name, value) in names.iter().zip(model.params.values_mut()) {
        *value = get(name, value.shape())?;
    }
    for (name, stats) in model.buffers.iter_mut() {
        let c = [stats.mean.len()];
        stats.mean = get(&format!("{name}.running_mean"), &c)?.into_data();
        stats.var = get(&format!("{name}.running_var"), &c)?.into_data();
    }
    let three = |t: Tensor<f32>| -> [f32; CHANNELS] { t.data().try_into().expect("checked shape") };
    model.norm = Normalization {
        mean: three(get("data.norm_mean", &[CHANNELS])?),
        std: three(get("data.norm_std", &[CHANNELS])?),
    };
    Ok(model)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
