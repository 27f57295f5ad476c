use super::net::Arch;
use super::state::{ModelState, Queue};
use super::train::{EpochMetrics, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::imgcore::Rng;
use crate::io::{read_bytes, write_atomic};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"OBJCROP1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainConfig,
    arch: Arch,
    input_side: u32,
    epoch: usize,
    step: u64,
    queue_ptr: usize,
    queue_len: usize,
    queue_tags: Vec<u64>,
    rng: [u64; 4],
    history: Vec<EpochMetrics>,
}

/// Layout (little-endian): magic `OBJCROP1`, u32 version, u32 header
/// length, JSON header, u32 tensor count, then per tensor: u32 name length,
/// name, u32 rank, u32 dims, f64 values in row-major order.
impl Trainer {
    fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = self.state.tensors();
        for ((name, _), v) in self.state.query.tensors().into_iter().zip(&self.velocity) {
            out.push((format!("opt.{name}"), v));
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.cfg.clone(),
            arch: self.state.arch,
            input_side: self.state.input_side,
            epoch: self.epoch,
            step: self.state.step,
            queue_ptr: self.state.queue.ptr,
            queue_len: self.state.queue.len,
            queue_tags: self.state.queue.tags.clone(),
            rng: self.rng.state(),
            history: self.history.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let tensors = self.named_tensors();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::BadMagic {
                expected: "OBJCROP1".into(),
            });
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let len = r.u32()? as usize;
        let h: Header = serde_json::from_slice(r.take(len)?)?;
        h.config.validate()?;
        if h.queue_tags.len() != h.config.queue_size || h.queue_ptr >= h.config.queue_size.max(1) || h.queue_len > h.config.queue_size {
            return Err(Error::ShapeMismatch("queue bookkeeping does not match queue_size".into()));
        }

        // a zero-filled trainer with the expected layout, filled in place
        let n_in = (h.input_side * h.input_side * 3) as usize;
        let query = super::net::Network::zeros(n_in, &h.arch);
        let mut t = Trainer {
            velocity: query.tensors().iter().map(|(_, x)| Array2::zeros(x.raw_dim())).collect(),
            state: ModelState {
                arch: h.arch,
                input_side: h.input_side,
                input_mean: Array2::zeros((1, 3)),
                input_std: Array2::zeros((1, 3)),
                key: query.clone(),
                query,
                queue: Queue {
                    rows: Array2::zeros((h.config.queue_size, h.arch.embed)),
                    tags: h.queue_tags,
                    ptr: h.queue_ptr,
                    len: h.queue_len,
                },
                step: h.step,
            },
            cfg: h.config,
            epoch: h.epoch,
            history: h.history,
            rng: Rng::from_state(h.rng),
        };

        let n = r.u32()? as usize;
        let mut slots: Vec<(String, &mut Array2<f64>)> = t.state.tensors_mut();
        let expected = slots.len() + t.velocity.len();
        if n != expected {
            return Err(Error::ShapeMismatch(format!("{n} tensors, expected {expected}")));
        }
        let opt_names: Vec<String> = super::net::Network::zeros(1, &h.arch)
            .tensors()
            .into_iter()
            .map(|(n, _)| format!("opt.{n}"))
            .collect();
        for (name, v) in opt_names.into_iter().zip(t.velocity.iter_mut()) {
            slots.push((name, v));
        }
        for (name, slot) in slots {
            let name_len = r.u32()? as usize;
            let found = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Malformed {
                    line: 0,
                    msg: "tensor name is not UTF-8".into(),
                })?
                .to_owned();
            if found != name {
                return Err(Error::ShapeMismatch(format!("tensor {found:?} where {name:?} was expected")));
            }
            let rank = r.u32()?;
            if rank != 2 {
                return Err(Error::ShapeMismatch(format!("{name}: rank {rank}, expected 2")));
            }
            let dims = [r.u32()? as usize, r.u32()? as usize];
            if dims != slot.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: shape {dims:?}, expected {:?}",
                    slot.shape()
                )));
            }
            for v in slot.iter_mut() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Malformed {
                line: 0,
                msg: format!("{} trailing bytes in checkpoint", bytes.len() - r.pos),
            });
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_bytes(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.buf.len()) {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "checkpoint ends at byte {}, needed {} more",
                self.buf.len(),
                self.pos + n - self.buf.len()
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
