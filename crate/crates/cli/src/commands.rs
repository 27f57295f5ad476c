use crate::config::RunConfig;
use crate::error::{CliError, Kind};
use objcrop::cropper::dump_pairs;
use objcrop::evalkit::{bench_proposals, overlap_report, sweep, OverlapItem, SweepOutcome, SweepParam};
use objcrop::imgcore::ImageRgb;
use objcrop::io::{read_to_string, write_atomic};
use objcrop::objectness::{self, BingModel, ProposalCache};
use objcrop::pipeline::{probe_state, propose_all, smin_for, strategy_boxes, train_data};
use objcrop::ssl::{pretrain, TrainConfig, Trainer};
use objcrop::synthgen::{generate, split, Manifest};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "data/manifest.jsonl";
pub const TRAIN_MANIFEST: &str = "data/train.jsonl";
pub const VAL_MANIFEST: &str = "data/val.jsonl";
pub const BING_MODEL: &str = "bing/model.bin";
pub const PROPOSALS: &str = "proposals/proposals.jsonl";
pub const CHECKPOINT: &str = "pretrain/model.ckpt";
pub const METRICS: &str = "pretrain/metrics.csv";

type Res<T> = Result<T, CliError>;

/// A command invocation: resolved config plus the run directory.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Res<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    Ok(write_atomic(path, text.as_bytes())?)
}

fn require(path: &Path) -> Res<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::new(Kind::MissingInput, format!("{}: not found", path.display())))
    }
}

impl Run {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    /// Check inputs exist, then record the resolved config for `command`.
    fn start(&self, command: &str, inputs: &[&str]) -> Res<()> {
        for rel in inputs {
            require(&self.path(rel))?;
        }
        write_atomic(self.path(&format!("configs/{command}.json")), self.cfg.to_json().as_bytes())?;
        Ok(())
    }

    fn manifest(&self, rel: &str) -> Res<(Manifest, Vec<ImageRgb>)> {
        let m = Manifest::load(self.path(rel))?;
        let images = m.load_all_images()?;
        Ok((m, images))
    }

    /// The proposal cache if the strategy needs one.
    fn cache_for(&self, needs: bool) -> Res<Option<ProposalCache>> {
        if !needs {
            return Ok(None);
        }
        Ok(Some(ProposalCache::load(self.path(PROPOSALS))?))
    }

    fn proposals_needed(&self, strategies: &[objcrop::cropper::Strategy]) -> Vec<&'static str> {
        let needs = strategies
            .iter()
            .any(|s| s.box_source() == objcrop::cropper::BoxSource::Proposals);
        if needs {
            vec![PROPOSALS]
        } else {
            vec![]
        }
    }

    pub fn synth_gen(&self) -> Res<()> {
        self.cfg.synth.validate()?;
        if !(self.cfg.data.train_frac > 0.0 && self.cfg.data.train_frac < 1.0) {
            return Err(CliError::config("data.train_frac must lie in (0, 1)"));
        }
        self.start("synth-gen", &[])?;
        let (manifest, report) = generate(&self.cfg.synth, self.path("data"))?;
        let (train, val) = split(&manifest, self.cfg.data.train_frac, self.cfg.seed)?;
        train.save(self.path(TRAIN_MANIFEST))?;
        val.save(self.path(VAL_MANIFEST))?;
        println!(
            "{}",
            serde_json::json!({"images": report.n_images, "objects": report.n_objects, "train": train.len(), "val": val.len()})
        );
        Ok(())
    }

    pub fn bing_train(&self) -> Res<()> {
        self.start("bing-train", &[TRAIN_MANIFEST])?;
        let (m, images) = self.manifest(TRAIN_MANIFEST)?;
        let (model, report) = objectness::train(&images, &m.records, &self.cfg.bing)?;
        model.save(self.path(BING_MODEL))?;
        write_json(&self.path("bing/report.json"), &report)?;
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
        Ok(())
    }

    pub fn propose(&self) -> Res<()> {
        self.cfg.proposal.validate()?;
        self.start("propose", &[BING_MODEL, MANIFEST])?;
        let model = BingModel::load(self.path(BING_MODEL))?;
        let (m, images) = self.manifest(MANIFEST)?;
        let cache = propose_all(&model, &self.cfg.proposal, &m.records, &images)?;
        cache.save(self.path(PROPOSALS))?;
        println!("{}", serde_json::json!({"images": cache.len()}));
        Ok(())
    }

    pub fn crop_dump(&self) -> Res<()> {
        let strategy = self.cfg.train.strategy;
        self.cfg.train.crop.validate()?;
        let mut inputs = vec![TRAIN_MANIFEST];
        inputs.extend(self.proposals_needed(&[strategy]));
        self.start("crop-dump", &inputs)?;
        let m = Manifest::load(self.path(TRAIN_MANIFEST))?;
        let cache = self.cache_for(inputs.len() > 1)?;
        let boxes = strategy_boxes(strategy, &m.records, cache.as_ref())?;
        let s_min = smin_for(&boxes, &m.records, self.cfg.train.crop.scale_lo)?;
        let n = self.cfg.crop_dump.n_pairs.min(m.len());
        let images = (0..n).map(|i| m.load_image(i)).collect::<objcrop::Result<Vec<_>>>()?;
        let items = m.records[..n]
            .iter()
            .zip(&images)
            .zip(&boxes)
            .map(|((r, img), b)| (r.image.as_str(), img, b.as_deref()));
        let recs = dump_pairs(self.path("crops"), items, strategy, &self.cfg.train.crop, s_min, self.cfg.seed)?;
        println!("{}", serde_json::json!({"pairs": recs.len(), "s_min": s_min}));
        Ok(())
    }

    pub fn pretrain(&self, resume: bool) -> Res<()> {
        let tc = &self.cfg.train;
        tc.validate()?;
        let mut inputs = vec![TRAIN_MANIFEST];
        inputs.extend(self.proposals_needed(&[tc.strategy]));
        self.start("pretrain", &inputs)?;
        let (m, images) = self.manifest(TRAIN_MANIFEST)?;
        let cache = self.cache_for(inputs.len() > 1)?;
        let data = train_data(tc.strategy, &m.records, images, cache.as_ref(), tc.crop.scale_lo)?;
        let ckpt = self.path(CHECKPOINT);
        let mut trainer = if resume && ckpt.exists() {
            let mut t = Trainer::load(&ckpt)?;
            // the epoch budget may grow unless the lr schedule depends on it
            let same = TrainConfig {
                epochs: tc.epochs,
                ..t.cfg.clone()
            } == *tc;
            if !same || (tc.cosine && t.cfg.epochs != tc.epochs) {
                return Err(CliError::config("checkpoint was trained with a different train config"));
            }
            t.cfg.epochs = tc.epochs;
            t
        } else {
            Trainer::new(tc.clone(), &data)?
        };
        let metrics = self.path(METRICS);
        trainer.train_until(&data, tc.epochs, |t| {
            t.save(&ckpt)?;
            write_atomic(&metrics, t.metrics_csv().as_bytes())
        })?;
        // zero epochs still leaves an initialized checkpoint behind
        trainer.save(&ckpt)?;
        write_atomic(&metrics, trainer.metrics_csv().as_bytes())?;
        let last = trainer.history.last();
        println!(
            "{}",
            serde_json::json!({
                "epochs": trainer.epoch,
                "s_min": data.s_min,
                "loss": last.map(|m| m.loss),
                "pos_sim": last.map(|m| m.pos_sim),
                "neg_sim": last.and_then(|m| m.neg_sim),
            })
        );
        Ok(())
    }

    pub fn probe(&self) -> Res<()> {
        self.cfg.probe.validate()?;
        self.start("probe", &[CHECKPOINT, TRAIN_MANIFEST, VAL_MANIFEST])?;
        let trainer = Trainer::load(self.path(CHECKPOINT))?;
        let (tm, ti) = self.manifest(TRAIN_MANIFEST)?;
        let (vm, vi) = self.manifest(VAL_MANIFEST)?;
        let report = probe_state(
            &trainer.state,
            (&ti, &tm.records),
            (&vi, &vm.records),
            self.cfg.synth.n_classes,
            &self.cfg.probe,
        )?;
        write_atomic(self.path("probe/per_class.csv"), report.to_csv().as_bytes())?;
        write_json(&self.path("probe/report.json"), &report)?;
        println!("{}", serde_json::json!({"map": report.map, "checkpoint_epoch": trainer.epoch}));
        Ok(())
    }

    pub fn overlap(&self) -> Res<()> {
        let oc = &self.cfg.overlap;
        self.cfg.train.crop.validate()?;
        let mut inputs = vec![TRAIN_MANIFEST];
        inputs.extend(self.proposals_needed(&oc.strategies));
        self.start("overlap", &inputs)?;
        let m = Manifest::load(self.path(TRAIN_MANIFEST))?;
        let cache = self.cache_for(inputs.len() > 1)?;
        let mut reports = Vec::new();
        for &s in &oc.strategies {
            let boxes = strategy_boxes(s, &m.records, cache.as_ref())?;
            let s_min = smin_for(&boxes, &m.records, self.cfg.train.crop.scale_lo)?;
            let items: Vec<OverlapItem> = m
                .records
                .iter()
                .zip(boxes)
                .map(|(r, b)| OverlapItem {
                    width: r.width,
                    height: r.height,
                    gt: r.boxes(),
                    boxes: b,
                })
                .collect();
            reports.push(overlap_report(&items, s, &self.cfg.train.crop, s_min, oc.n_samples, self.cfg.seed)?);
        }
        write_json(&self.path("overlap/overlap.json"), &reports)?;
        for r in &reports {
            println!("{}", serde_json::to_string(r).expect("report serializes"));
        }
        Ok(())
    }

    pub fn sweep(&self) -> Res<()> {
        let spec = &self.cfg.sweep;
        spec.validate(&self.cfg.train)?;
        self.cfg.probe.validate()?;
        let mut inputs = vec![TRAIN_MANIFEST, VAL_MANIFEST];
        inputs.extend(self.proposals_needed(&[self.cfg.train.strategy]));
        self.start("sweep", &inputs)?;
        let (tm, ti) = self.manifest(TRAIN_MANIFEST)?;
        let (vm, vi) = self.manifest(VAL_MANIFEST)?;
        let cache = self.cache_for(inputs.len() > 2)?;
        let rows = sweep(spec, &self.cfg.train, &self.path("sweep/sweep.csv"), |value, tc| {
            let cache = match (&cache, spec.param) {
                (Some(c), SweepParam::NMax) => Some(c.truncated(value as usize)),
                (c, _) => c.clone(),
            };
            let data = train_data(tc.strategy, &tm.records, ti.clone(), cache.as_ref(), tc.crop.scale_lo)?;
            let trainer = pretrain(&data, tc.clone())?;
            let report = probe_state(
                &trainer.state,
                (&ti, &tm.records),
                (&vi, &vm.records),
                self.cfg.synth.n_classes,
                &self.cfg.probe,
            )?;
            let last = trainer.history.last();
            Ok(SweepOutcome {
                map: report.map,
                pos_sim: last.map_or(f64::NAN, |m| m.pos_sim),
                neg_sim: last.and_then(|m| m.neg_sim),
            })
        })?;
        println!("{}", serde_json::json!({"rows": rows.len()}));
        Ok(())
    }

    pub fn bench(&self) -> Res<()> {
        let bc = &self.cfg.bench;
        self.cfg.proposal.validate()?;
        let mut inputs = vec![BING_MODEL];
        if let Some(b) = &bc.baseline {
            inputs.push(b);
        }
        self.start("bench", &inputs)?;
        let model = BingModel::load(self.path(BING_MODEL))?;
        let report = bench_proposals(&model, &self.cfg.proposal, bc.side, bc.n_iters, bc.warmup)?;
        write_json(&self.path("bench/bench.json"), &report)?;
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
        if let Some(b) = &bc.baseline {
            // any JSON object with an `fps` field, e.g. an earlier bench.json
            let base: serde_json::Value = serde_json::from_str(&read_to_string(self.path(b))?)
                .map_err(|e| CliError::new(Kind::BadArtifact, format!("{b}: {e}")))?;
            let base_fps = base["fps"]
                .as_f64()
                .ok_or_else(|| CliError::new(Kind::BadArtifact, format!("{b}: no numeric fps field")))?;
            let floor = base_fps * (1.0 - bc.tolerance);
            if report.fps < floor {
                return Err(CliError::new(
                    Kind::Failure,
                    format!("throughput regression: {:.1} fps < {floor:.1} (baseline {base_fps:.1})", report.fps),
                ));
            }
        }
        Ok(())
    }
}
