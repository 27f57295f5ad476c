use crate::error::{Error, Result};
use crate::objectness::{propose, BingModel, ProposalConfig};
use crate::synthgen::{render_scene, SynthConfig};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub side: u32,
    pub n_iters: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Images per second from the mean latency.
    pub fps: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[i]
}

/// Time `propose` on synthetic `side`×`side` scenes, single-threaded. The
/// first `warmup` calls are discarded.
pub fn bench_proposals(model: &BingModel, cfg: &ProposalConfig, side: u32, n_iters: usize, warmup: usize) -> Result<BenchReport> {
    if n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be >= 1".into()));
    }
    let scene_cfg = SynthConfig {
        img_side: side,
        n_images: 8,
        ..Default::default()
    };
    scene_cfg.validate()?;
    let images: Vec<_> = (0..8).map(|i| render_scene(&scene_cfg, i).0).collect();
    for i in 0..warmup {
        propose(&images[i % images.len()], model, cfg)?;
    }
    let mut ms = Vec::with_capacity(n_iters);
    for i in 0..n_iters {
        let t = Instant::now();
        let p = propose(&images[i % images.len()], model, cfg)?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(p);
    }
    let mean_ms = ms.iter().sum::<f64>() / n_iters as f64;
    ms.sort_by(f64::total_cmp);
    Ok(BenchReport {
        side,
        n_iters,
        warmup,
        mean_ms,
        p50_ms: percentile(&ms, 0.5),
        p95_ms: percentile(&ms, 0.95),
        fps: 1e3 / mean_ms,
    })
}
