use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const WIN: usize = 8;
pub const FEAT_DIM: usize = WIN * WIN;
pub const BASE_SIDES: [u32; 5] = [16, 32, 64, 128, 256];
const MAGIC: &[u8; 8] = b"BINGMDL1";
pub const MODEL_VERSION: u32 = 1;

/// Every `(w, h)` from [`BASE_SIDES`]² with aspect ratio in `[1/4, 4]`.
pub fn default_sizes() -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for &h in &BASE_SIDES {
        for &w in &BASE_SIDES {
            if w <= 4 * h && h <= 4 * w {
                out.push((w, h));
            }
        }
    }
    out
}

/// Per-size affine calibration `score = v * raw + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub v: f32,
    pub t: f32,
}

impl Calibration {
    pub const IDENTITY: Calibration = Calibration { v: 1.0, t: 0.0 };

    #[inline]
    pub fn apply(&self, raw: f32) -> f32 {
        self.v * raw + self.t
    }
}

/// Hyperparameters used to fit a model; stored in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BingTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    /// Random negative windows drawn per training image.
    pub neg_per_image: usize,
    /// Negatives must overlap every ground-truth box below this IoU.
    pub neg_max_iou: f64,
    /// Candidates per size used to fit the calibration stage.
    pub calib_keep: usize,
    /// A calibration candidate counts as positive at this IoU.
    pub calib_pos_iou: f64,
    pub seed: u64,
}

impl Default for BingTrainConfig {
    fn default() -> Self {
        BingTrainConfig {
            epochs: 20,
            lr: 0.01,
            l2: 1e-4,
            neg_per_image: 16,
            neg_max_iou: 0.3,
            calib_keep: 30,
            calib_pos_iou: 0.5,
            seed: 0,
        }
    }
}

/// Two-stage objectness model: one 8×8 linear template over normed
/// gradients shared by all window sizes, then a per-size affine calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct BingModel {
    pub stage1: [f32; FEAT_DIM],
    pub bias: f32,
    pub sizes: Vec<(u32, u32)>,
    pub stage2: Vec<Calibration>,
    pub train_config: BingTrainConfig,
}

impl BingModel {
    /// Untrained model: zero template, identity calibration.
    pub fn untrained(sizes: Vec<(u32, u32)>) -> Self {
        let stage2 = vec![Calibration::IDENTITY; sizes.len()];
        BingModel {
            stage1: [0.0; FEAT_DIM],
            bias: 0.0,
            sizes,
            stage2,
            train_config: BingTrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidConfig("model has no window sizes".into()));
        }
        if self.sizes.len() != self.stage2.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} sizes but {} calibrations",
                self.sizes.len(),
                self.stage2.len()
            )));
        }
        if self.sizes.iter().any(|&(w, h)| w == 0 || h == 0) {
            return Err(Error::InvalidConfig("zero window size".into()));
        }
        Ok(())
    }

    /// Stage-1 score of a 64-entry feature vector.
    #[inline]
    pub fn raw_score(&self, feat: &[f32]) -> f32 {
        self.stage1.iter().zip(feat).map(|(w, x)| w * x).sum::<f32>() + self.bias
    }

    pub fn min_window(&self) -> (u32, u32) {
        let w = self.sizes.iter().map(|s| s.0).min().unwrap_or(0);
        let h = self.sizes.iter().map(|s| s.1).min().unwrap_or(0);
        (w, h)
    }

    /// Little-endian layout: magic, version, size count, template length,
    /// template, bias, (v, t) per size, (w, h) per size, then the training
    /// config as length-prefixed JSON.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(FEAT_DIM as u32).to_le_bytes());
        for w in &self.stage1 {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.bias.to_le_bytes());
        for c in &self.stage2 {
            out.extend_from_slice(&c.v.to_le_bytes());
            out.extend_from_slice(&c.t.to_le_bytes());
        }
        for &(w, h) in &self.sizes {
            out.extend_from_slice(&w.to_le_bytes());
            out.extend_from_slice(&h.to_le_bytes());
        }
        let cfg = serde_json::to_vec(&self.train_config).expect("config serializes");
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::BadMagic {
                expected: "BINGMDL1".into(),
            });
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                supported: MODEL_VERSION,
            });
        }
        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if dim != FEAT_DIM {
            return Err(Error::ShapeMismatch(format!(
                "template has {dim} entries, expected {FEAT_DIM}"
            )));
        }
        let mut stage1 = [0f32; FEAT_DIM];
        for w in stage1.iter_mut() {
            *w = r.f32()?;
        }
        let bias = r.f32()?;
        let stage2 = (0..n)
            .map(|_| Ok(Calibration { v: r.f32()?, t: r.f32()? }))
            .collect::<Result<Vec<_>>>()?;
        let sizes = (0..n)
            .map(|_| Ok((r.u32()?, r.u32()?)))
            .collect::<Result<Vec<_>>>()?;
        let cfg_len = r.u32()? as usize;
        let train_config = serde_json::from_slice(r.take(cfg_len)?)?;
        if r.pos != bytes.len() {
            return Err(Error::Malformed {
                line: 0,
                msg: format!("{} trailing bytes in model file", bytes.len() - r.pos),
            });
        }
        let model = BingModel {
            stage1,
            bias,
            sizes,
            stage2,
            train_config,
        };
        model.validate()?;
        Ok(model)
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
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "model file ends at byte {}, needed {} more",
                self.buf.len(),
                self.pos + n - self.buf.len()
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nineteen_default_sizes() {
        let s = default_sizes();
        assert_eq!(s.len(), 19);
        assert!(s.contains(&(16, 64)));
        assert!(!s.contains(&(16, 128)));
        assert!(s.iter().all(|&(w, h)| w * 4 >= h && h * 4 >= w));
    }

    #[test]
    fn file_round_trip_and_errors() {
        let mut m = BingModel::untrained(default_sizes());
        m.stage1[3] = 0.25;
        m.bias = -1.5;
        m.stage2[2] = Calibration { v: 2.0, t: -0.5 };
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..8], b"BINGMDL1");
        let back = BingModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(BingModel::from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            BingModel::from_bytes(&bad),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        assert!(matches!(
            BingModel::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
    }
}
