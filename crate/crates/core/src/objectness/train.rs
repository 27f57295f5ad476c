use super::model::{default_sizes, BingModel, BingTrainConfig, Calibration, FEAT_DIM};
use super::ng::{normed_gradient, NgMap};
use super::propose::{size_candidates, FeaturePlane, SizeGrid};
use crate::error::{Error, Result};
use crate::imgcore::{BBox, ImageRgb, Rng};
use crate::synthgen::ImageRecord;
use serde::Serialize;

/// Diagnostics from [`train`].
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub n_positive: usize,
    pub n_negative: usize,
    pub epochs_run: usize,
    /// Mean hinge loss over the training set after the last epoch.
    pub final_hinge: f64,
    /// Sizes that received identity calibration for lack of samples.
    pub uncalibrated_sizes: Vec<(u32, u32)>,
}

/// Allowed size closest to a box in log space.
fn nearest_size(sizes: &[(u32, u32)], b: &BBox) -> usize {
    let d = |(w, h): (u32, u32)| {
        (b.w as f64 / w as f64).ln().abs() + (b.h as f64 / h as f64).ln().abs()
    };
    (0..sizes.len())
        .min_by(|&i, &j| d(sizes[i]).total_cmp(&d(sizes[j])))
        .expect("non-empty size list")
}

struct Sample {
    feat: [f32; FEAT_DIM],
    label: f64,
}

fn margin(w: &[f64; FEAT_DIM], bias: f64, s: &Sample) -> f64 {
    let dot: f64 = w.iter().zip(&s.feat).map(|(a, &x)| a * x as f64).sum();
    s.label * (dot + bias)
}

fn mean_hinge(w: &[f64; FEAT_DIM], bias: f64, samples: &[Sample]) -> f64 {
    samples
        .iter()
        .map(|s| (1.0 - margin(w, bias, s)).max(0.0))
        .sum::<f64>()
        / samples.len() as f64
}

/// Collect positives (ground-truth windows at their nearest size) and
/// random negatives for one image.
fn image_samples(
    ng: &NgMap,
    gt: &[BBox],
    sizes: &[(u32, u32)],
    cfg: &BingTrainConfig,
    rng: &mut Rng,
    out: &mut Vec<Sample>,
) {
    let (w, h) = (ng.width, ng.height);
    let grids: Vec<Option<SizeGrid>> = sizes.iter().map(|&s| SizeGrid::new(w, h, s)).collect();
    let mut planes: Vec<Option<FeaturePlane>> = sizes.iter().map(|_| None).collect();
    fn plane<'p>(planes: &'p mut [Option<FeaturePlane>], ng: &NgMap, k: usize, grid: &SizeGrid) -> &'p FeaturePlane {
        planes[k].get_or_insert_with(|| FeaturePlane::from_ng(&ng.resized(grid.rw, grid.rh)))
    }
    for b in gt {
        let k = nearest_size(sizes, b);
        let Some(grid) = grids[k] else { continue };
        let (i, j) = grid.locate(b);
        out.push(Sample {
            feat: plane(&mut planes, ng, k, &grid).window(i, j),
            label: 1.0,
        });
    }
    let fitting: Vec<usize> = (0..sizes.len()).filter(|&k| grids[k].is_some()).collect();
    if fitting.is_empty() {
        return;
    }
    let mut drawn = 0;
    let mut tries = 0;
    while drawn < cfg.neg_per_image && tries < cfg.neg_per_image * 20 {
        tries += 1;
        let k = fitting[rng.below(fitting.len() as u64) as usize];
        let grid = grids[k].expect("fitting size");
        let (ni, nj) = grid.n_positions();
        let (i, j) = (rng.below(ni as u64) as u32, rng.below(nj as u64) as u32);
        let b = grid.window_box(i, j);
        if gt.iter().all(|g| g.iou(&b) < cfg.neg_max_iou) {
            out.push(Sample {
                feat: plane(&mut planes, ng, k, &grid).window(i, j),
                label: -1.0,
            });
            drawn += 1;
        }
    }
}

/// Least-squares fit of `label ≈ v * score + t`.
fn fit_affine(points: &[(f64, f64)]) -> Option<Calibration> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let ms = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let var = points.iter().map(|p| (p.0 - ms).powi(2)).sum::<f64>();
    let cov = points.iter().map(|p| (p.0 - ms) * (p.1 - my)).sum::<f64>();
    if var <= 1e-12 {
        return None;
    }
    let v = cov / var;
    Some(Calibration {
        v: v as f32,
        t: (my - v * ms) as f32,
    })
}

/// Fit the two-stage model from ground-truth boxes. Class labels are not
/// used. `images[i]` must correspond to `records[i]`.
///
/// Stage 1 is a linear SVM (hinge loss with L2, plain SGD) over 8×8
/// normed-gradient windows; training stops early once the training hinge
/// loss reaches zero. Stage 2 fits, per size, an affine map from stage-1
/// scores to ±1 labels over that size's top candidates on the training
/// images, labelled by overlap with ground truth.
pub fn train(images: &[ImageRgb], records: &[ImageRecord], cfg: &BingTrainConfig) -> Result<(BingModel, TrainReport)> {
    train_with_sizes(images, records, cfg, default_sizes())
}

pub fn train_with_sizes(
    images: &[ImageRgb],
    records: &[ImageRecord],
    cfg: &BingTrainConfig,
    sizes: Vec<(u32, u32)>,
) -> Result<(BingModel, TrainReport)> {
    if images.len() != records.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images for {} records",
            images.len(),
            records.len()
        )));
    }
    if records.iter().all(|r| r.objects.is_empty()) {
        return Err(Error::EmptyDataset("no ground-truth boxes to train on".into()));
    }
    let mut rng = Rng::derive(&[cfg.seed, 0xB1A6]);
    let ngs: Vec<NgMap> = images.iter().map(normed_gradient).collect();

    let mut samples = Vec::new();
    for (ng, rec) in ngs.iter().zip(records) {
        image_samples(ng, &rec.boxes(), &sizes, cfg, &mut rng, &mut samples);
    }
    let n_positive = samples.iter().filter(|s| s.label > 0.0).count();
    let n_negative = samples.len() - n_positive;
    if n_positive == 0 {
        return Err(Error::EmptyDataset("no ground-truth box fits any window size".into()));
    }

    let mut w = [0f64; FEAT_DIM];
    let mut bias = 0f64;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epochs_run = 0;
    let mut hinge = mean_hinge(&w, bias, &samples);
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for &idx in &order {
            let s = &samples[idx];
            let violated = margin(&w, bias, s) < 1.0;
            for (wk, &x) in w.iter_mut().zip(&s.feat) {
                let grad = cfg.l2 * *wk - if violated { s.label * x as f64 } else { 0.0 };
                *wk -= cfg.lr * grad;
            }
            if violated {
                bias += cfg.lr * s.label;
            }
        }
        epochs_run += 1;
        hinge = mean_hinge(&w, bias, &samples);
        if hinge == 0.0 {
            break;
        }
    }

    let mut model = BingModel::untrained(sizes.clone());
    for (dst, src) in model.stage1.iter_mut().zip(&w) {
        *dst = *src as f32;
    }
    model.bias = bias as f32;
    model.train_config = cfg.clone();

    // stage 2
    let mut points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); sizes.len()];
    for (ng, rec) in ngs.iter().zip(records) {
        let gt = rec.boxes();
        for (k, &size) in sizes.iter().enumerate() {
            let Some(grid) = SizeGrid::new(ng.width, ng.height, size) else {
                continue;
            };
            let plane = FeaturePlane::from_ng(&ng.resized(grid.rw, grid.rh));
            for (raw, b) in size_candidates(&plane, &model, &grid, cfg.calib_keep, 0.5) {
                let hit = gt.iter().any(|g| g.iou(&b) >= cfg.calib_pos_iou);
                points[k].push((raw as f64, if hit { 1.0 } else { -1.0 }));
            }
        }
    }
    let mut uncalibrated = Vec::new();
    for (k, pts) in points.iter().enumerate() {
        match fit_affine(pts) {
            Some(c) => model.stage2[k] = c,
            None => {
                log::warn!("size {:?}: no calibration samples, using identity", sizes[k]);
                uncalibrated.push(sizes[k]);
            }
        }
    }

    Ok((
        model,
        TrainReport {
            n_positive,
            n_negative,
            epochs_run,
            final_hinge: hinge,
            uncalibrated_sizes: uncalibrated,
        },
    ))
}
