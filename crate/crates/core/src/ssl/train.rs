use super::loss::info_nce_batch;
use super::net::{Arch, HeadKind};
use super::state::{momentum_update, route_heads, ModelState};
use crate::cropper::{pair_rng, sample_pair, BoxSource, CropConfig, Strategy};
use crate::error::{Error, Result};
use crate::imgcore::{BBox, ImageRgb, Rng};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Pretraining hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub temperature: f64,
    /// Key-encoder momentum.
    pub momentum: f64,
    pub queue_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Heavy-ball coefficient of the SGD optimizer.
    pub sgd_momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub crop: CropConfig,
    pub arch: Arch,
    /// Cosine learning-rate decay over `epochs`.
    pub cosine: bool,
    /// Use view b as the query and view a as the key.
    pub swap_views: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            temperature: 0.2,
            momentum: 0.999,
            queue_size: 4096,
            lr: 0.03,
            weight_decay: 1e-4,
            sgd_momentum: 0.9,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            strategy: Strategy::ObjObjDilate,
            crop: CropConfig::default(),
            arch: Arch::default(),
            cosine: false,
            swap_views: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        if !(self.momentum > 0.0 && self.momentum <= 1.0) {
            return bad("momentum must be in (0, 1]".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !self.queue_size.is_multiple_of(self.batch_size) {
            return bad(format!(
                "queue_size {} is not a multiple of batch_size {}",
                self.queue_size, self.batch_size
            ));
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0) {
            return bad("lr and weight_decay must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return bad("sgd_momentum must be in [0, 1)".into());
        }
        self.crop.validate()?;
        self.arch.validate()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.cosine && self.epochs > 0 {
            let t = epoch as f64 / self.epochs as f64;
            0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
        } else {
            self.lr
        }
    }
}

/// Training images with their keys and box lists.
#[derive(Debug, Clone)]
pub struct TrainData {
    /// Stable per-image key (the manifest-relative path); seeds pair sampling.
    pub keys: Vec<String>,
    pub images: Vec<ImageRgb>,
    /// Proposals or ground truth, as the strategy requires; `None` when the
    /// strategy needs no boxes.
    pub boxes: Vec<Option<Vec<BBox>>>,
    pub s_min: f64,
}

impl TrainData {
    fn validate(&self, strategy: Strategy) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::EmptyDataset("no training images".into()));
        }
        if self.keys.len() != self.images.len() || self.boxes.len() != self.images.len() {
            return Err(Error::ShapeMismatch("keys, images and boxes differ in length".into()));
        }
        if strategy.box_source() != BoxSource::None
            && self.boxes.iter().any(|b| b.as_ref().is_none_or(|b| b.is_empty()))
        {
            return Err(Error::MissingBoxes {
                strategy: strategy.name().into(),
            });
        }
        Ok(())
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub pos_sim: f64,
    /// `None` when no step of the epoch had negatives.
    pub neg_sim: Option<f64>,
    pub lr: f64,
}

/// Momentum-contrast trainer. Holds everything needed to resume a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub state: ModelState,
    /// SGD velocity per query tensor, in `state.query.tensors()` order.
    pub velocity: Vec<Array2<f64>>,
    /// Epochs completed.
    pub epoch: usize,
    pub history: Vec<EpochMetrics>,
    pub rng: Rng,
}

const INIT_STREAM: u64 = 0x1A17;
const ORDER_STREAM: u64 = 0x0DE5;

impl Trainer {
    /// Fresh trainer with input statistics fitted to `data`.
    pub fn new(cfg: TrainConfig, data: &TrainData) -> Result<Self> {
        cfg.validate()?;
        data.validate(cfg.strategy)?;
        let mut init_rng = Rng::derive(&[cfg.seed, INIT_STREAM]);
        let mut state = ModelState::init(cfg.arch, cfg.crop.target, cfg.queue_size, &mut init_rng);
        state.fit_input_stats(&data.images);
        let velocity = state.query.tensors().iter().map(|(_, t)| Array2::zeros(t.raw_dim())).collect();
        Ok(Trainer {
            rng: Rng::derive(&[cfg.seed, ORDER_STREAM]),
            cfg,
            state,
            velocity,
            epoch: 0,
            history: Vec::new(),
        })
    }

    fn sgd_step(&mut self, grads: &[(String, Array2<f64>)], lr: f64) {
        let (mu, wd) = (self.cfg.sgd_momentum, self.cfg.weight_decay);
        for ((name, theta), v) in self.state.query.tensors_mut().into_iter().zip(&mut self.velocity) {
            let Some((_, g)) = grads.iter().find(|(n, _)| *n == name) else {
                continue;
            };
            ndarray::Zip::from(&mut *v).and(g).and(&*theta).for_each(|v, &g, &t| {
                *v = mu * *v + g + wd * t;
            });
            theta.scaled_add(-lr, v);
        }
    }

    /// Run one epoch over `data` (dropping the last partial batch) and
    /// append its metrics.
    pub fn run_epoch(&mut self, data: &TrainData) -> Result<EpochMetrics> {
        data.validate(self.cfg.strategy)?;
        let b = self.cfg.batch_size;
        let n_steps = data.images.len() / b;
        if n_steps == 0 {
            return Err(Error::EmptyDataset(format!(
                "{} images is less than one batch of {b}",
                data.images.len()
            )));
        }
        let lr = self.cfg.lr_at(self.epoch);
        let mut order: Vec<usize> = (0..data.images.len()).collect();
        self.rng.shuffle(&mut order);
        let (mut loss, mut pos, mut neg, mut n_neg) = (0.0, 0.0, 0.0, 0usize);
        for s in 0..n_steps {
            let batch = &order[s * b..(s + 1) * b];
            let stats = self.step(data, batch, lr)?;
            loss += stats.loss;
            pos += stats.pos_sim;
            if let Some(ns) = stats.neg_sim {
                neg += ns;
                n_neg += 1;
            }
        }
        let m = EpochMetrics {
            epoch: self.epoch,
            loss: loss / n_steps as f64,
            pos_sim: pos / n_steps as f64,
            neg_sim: (n_neg > 0).then(|| neg / n_neg as f64),
            lr,
        };
        self.epoch += 1;
        self.history.push(m.clone());
        Ok(m)
    }

    /// One optimizer step on the images at `batch`.
    pub fn step(&mut self, data: &TrainData, batch: &[usize], lr: f64) -> Result<super::loss::NceStats> {
        let cfg = &self.cfg;
        let mut views_a = Vec::with_capacity(batch.len());
        let mut views_b = Vec::with_capacity(batch.len());
        let mut roles = None;
        for &i in batch {
            let mut rng = pair_rng(cfg.seed, &data.keys[i], self.epoch as u64);
            let pair = sample_pair(&data.images[i], data.boxes[i].as_deref(), cfg.strategy, &cfg.crop, data.s_min, &mut rng)?;
            let r = (pair.geometry.role_a, pair.geometry.role_b);
            if *roles.get_or_insert(r) != r {
                return Err(Error::InvalidConfig("mixed view roles within one batch".into()));
            }
            views_a.push(pair.view_a);
            views_b.push(pair.view_b);
        }
        let (role_a, role_b) = roles.expect("non-empty batch");
        let (mut head_q, mut head_k) = route_heads(role_a, role_b);
        if cfg.swap_views {
            std::mem::swap(&mut views_a, &mut views_b);
            std::mem::swap(&mut head_q, &mut head_k);
        }
        let xq = self.state.input_rows(&views_a.iter().collect::<Vec<_>>())?;
        let xk = self.state.input_rows(&views_b.iter().collect::<Vec<_>>())?;
        let (eq, tape) = self.state.query.forward(&xq.view(), head_q)?;
        let (ek, _) = self.state.key.forward(&xk.view(), head_k)?;
        let (stats, d_eq) = info_nce_batch(&eq, &ek, self.state.queue.negatives(), cfg.temperature);

        let grads = self.state.query.backward(&xq.view(), &tape, &eq, &d_eq, head_q);
        let head_name = match grads.head_kind {
            HeadKind::Obj => "head_obj",
            HeadKind::Ctx => "head_ctx",
        };
        let mut named = Vec::with_capacity(10);
        if let Some(f) = &grads.front {
            named.push(("front.k".to_string(), f.k.clone()));
            named.push(("front.b".to_string(), f.b.clone()));
        }
        for (n, t) in grads.encoder.tensors() {
            named.push((format!("encoder.{n}"), t.clone()));
        }
        for (n, t) in grads.head.tensors() {
            named.push((format!("{head_name}.{n}"), t.clone()));
        }
        self.sgd_step(&named, lr);
        momentum_update(&mut self.state.key, &self.state.query, self.cfg.momentum)?;
        let first_tag = self.state.step * batch.len() as u64;
        self.state.queue.push(&ek, first_tag);
        self.state.step += 1;
        Ok(stats)
    }

    /// Train until `epochs` epochs are complete, calling `after_epoch` after
    /// each one (e.g. to checkpoint).
    pub fn train_until(
        &mut self,
        data: &TrainData,
        epochs: usize,
        mut after_epoch: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        while self.epoch < epochs {
            let m = self.run_epoch(data)?;
            log::info!(
                "epoch {} loss {:.4} pos {:.3} neg {:?}",
                m.epoch,
                m.loss,
                m.pos_sim,
                m.neg_sim
            );
            after_epoch(self)?;
        }
        Ok(())
    }

    /// `epoch,loss,pos_sim,neg_sim,lr` with one row per completed epoch.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,loss,pos_sim,neg_sim,lr\n");
        for m in &self.history {
            let neg = m.neg_sim.map_or("nan".to_string(), |v| v.to_string());
            writeln!(out, "{},{},{},{},{}", m.epoch, m.loss, m.pos_sim, neg, m.lr).expect("write to string");
        }
        out
    }
}

/// Train from scratch for `cfg.epochs` epochs.
pub fn pretrain(data: &TrainData, cfg: TrainConfig) -> Result<Trainer> {
    let mut t = Trainer::new(cfg, data)?;
    let epochs = t.cfg.epochs;
    t.train_until(data, epochs, |_| Ok(()))?;
    Ok(t)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn small_cfg() -> TrainConfig {
        TrainConfig {
            queue_size: 16,
            batch_size: 4,
            epochs: 2,
            strategy: Strategy::SceneScene,
            crop: CropConfig {
                target: 8,
                ..Default::default()
            },
            arch: Arch {
                conv_filters: 0,
                hidden: 16,
                feature: 8,
                head_hidden: 8,
                embed: 4,
            },
            ..Default::default()
        }
    }

    pub(crate) fn toy_data(n: usize) -> TrainData {
        let mut rng = Rng::new(5);
        let images: Vec<ImageRgb> = (0..n)
            .map(|_| {
                let data = (0..24 * 24 * 3).map(|_| rng.below(256) as u8).collect();
                ImageRgb::from_raw(24, 24, data).unwrap()
            })
            .collect();
        TrainData {
            keys: (0..n).map(|i| format!("img{i}.ppm")).collect(),
            boxes: (0..n).map(|_| Some(vec![BBox::new(4, 4, 12, 12)])).collect(),
            images,
            s_min: 0.5,
        }
    }

    #[test]
    fn queue_size_must_divide() {
        let cfg = TrainConfig {
            queue_size: 10,
            batch_size: 4,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_lr_freezes_parameters() {
        // deterministic views (full image, no flip) and one batch per epoch
        // filling the whole queue make the loss repeat after warm-up
        let data = toy_data(16);
        let mut cfg = TrainConfig {
            lr: 0.0,
            epochs: 4,
            batch_size: 16,
            ..small_cfg()
        };
        cfg.crop.scale_lo = 1.0;
        cfg.crop.flip_prob = 0.0;
        let fresh = Trainer::new(cfg.clone(), &data).unwrap();
        let t = pretrain(&data, cfg).unwrap();
        assert_eq!(t.state.query, fresh.state.query);
        assert_eq!(t.state.key, fresh.state.key);
        let later: Vec<f64> = t.history[1..].iter().map(|m| m.loss).collect();
        for l in &later {
            assert!((l - later[0]).abs() < 1e-12, "{later:?}");
        }
    }

    #[test]
    fn embeddings_stay_unit_and_queue_fills() {
        let data = toy_data(12);
        let mut t = Trainer::new(small_cfg(), &data).unwrap();
        t.run_epoch(&data).unwrap();
        assert_eq!(t.state.queue.len, 12);
        t.run_epoch(&data).unwrap();
        assert_eq!(t.state.queue.len, 16);
        for row in t.state.queue.negatives().rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
        // ring holds the 16 most recent tags
        let mut tags = t.state.queue.tags.clone();
        tags.sort();
        assert_eq!(tags, (8..24).collect::<Vec<u64>>());
    }

    #[test]
    fn missing_boxes_rejected_up_front() {
        let mut data = toy_data(8);
        data.boxes[3] = None;
        let cfg = TrainConfig {
            strategy: Strategy::ObjScene,
            ..small_cfg()
        };
        assert!(matches!(Trainer::new(cfg, &data), Err(Error::MissingBoxes { .. })));
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(8);
        let a = pretrain(&data, small_cfg()).unwrap();
        let b = pretrain(&data, small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metrics_csv(), b.metrics_csv());
        assert!(a.metrics_csv().starts_with("epoch,loss,pos_sim,neg_sim,lr\n0,"));
    }

    #[test]
    fn single_image_positive_similarity_rises() {
        // one image means one step per epoch, so epochs stand in for steps
        let data = toy_data(1);
        let cfg = TrainConfig {
            batch_size: 1,
            queue_size: 8,
            epochs: 50,
            lr: 0.1,
            momentum: 0.99,
            ..small_cfg()
        };
        let t = pretrain(&data, cfg).unwrap();
        let pos: Vec<f64> = t.history.iter().map(|m| m.pos_sim).collect();
        let blocks: Vec<f64> = pos.chunks(10).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        for w in blocks.windows(2) {
            assert!(w[1] > w[0], "{blocks:?}");
        }
    }
}
