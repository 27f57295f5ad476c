use crate::error::CliError;
use objcrop::cropper::Strategy;
use objcrop::evalkit::{ProbeConfig, SweepParam, SweepSpec};
use objcrop::objectness::{BingTrainConfig, ProposalConfig};
use objcrop::ssl::TrainConfig;
use objcrop::synthgen::SynthConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Fraction of generated images in the training split.
    pub train_frac: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { train_frac: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropDumpConfig {
    pub n_pairs: usize,
}

impl Default for CropDumpConfig {
    fn default() -> Self {
        CropDumpConfig { n_pairs: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlapConfig {
    pub n_samples: usize,
    pub strategies: Vec<Strategy>,
}

impl Default for OverlapConfig {
    fn default() -> Self {
        OverlapConfig {
            n_samples: 5000,
            strategies: vec![Strategy::SceneScene, Strategy::ObjScene, Strategy::ObjObjDilate],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub side: u32,
    pub n_iters: usize,
    pub warmup: usize,
    /// Baseline report (relative to the run directory) to gate against.
    pub baseline: Option<String>,
    /// Allowed fps drop relative to the baseline.
    pub tolerance: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            side: 300,
            n_iters: 50,
            warmup: 5,
            baseline: None,
            tolerance: 0.2,
        }
    }
}

/// Everything a command may read. Section seeds are overwritten by the
/// top-level `seed` when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub bing: BingTrainConfig,
    pub proposal: ProposalConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub crop_dump: CropDumpConfig,
    pub overlap: OverlapConfig,
    pub sweep: SweepSpec,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            synth: SynthConfig::default(),
            data: DataConfig::default(),
            bing: BingTrainConfig::default(),
            proposal: ProposalConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            crop_dump: CropDumpConfig::default(),
            overlap: OverlapConfig::default(),
            sweep: SweepSpec {
                param: SweepParam::Delta,
                values: vec![0.0, 0.1, 0.2, 0.3],
                seeds: vec![0],
            },
            bench: BenchConfig::default(),
        }
    }
}

/// Merge `patch` into `base`; objects merge key by key, anything else
/// replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `a.b.c=value`. The value is parsed as JSON, or taken as a string
/// if that fails. Every path segment but the last must already exist.
fn apply_set(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("--set expects key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::config(format!("--set {path}: {key:?} is not inside an object")))?;
        if parts.peek().is_none() {
            if !obj.contains_key(key) {
                return Err(CliError::config(format!("--set {path}: unknown key {key:?}")));
            }
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(key)
            .ok_or_else(|| CliError::config(format!("--set {path}: unknown key {key:?}")))?;
    }
    Err(CliError::config("--set with an empty key".to_string()))
}

impl RunConfig {
    /// Defaults, then the config file, then `--set` overrides, then
    /// `--seed`.
    pub fn resolve(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Self, CliError> {
        let mut doc = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        if let Some(path) = file {
            let text = objcrop::io::read_to_string(path)?;
            let patch: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            merge(&mut doc, patch);
        }
        for s in sets {
            apply_set(&mut doc, s)?;
        }
        let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.synth.seed = cfg.seed;
        cfg.bing.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
