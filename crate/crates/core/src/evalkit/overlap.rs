use crate::cropper::{sample_pair_geometry, CropConfig, Strategy};
use crate::error::{Error, Result};
use crate::imgcore::{BBox, Rng};
use serde::{Deserialize, Serialize};

const OVERLAP_STREAM: u64 = 0x0E1A;

/// What the overlap analysis needs per image.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapItem {
    pub width: u32,
    pub height: u32,
    pub gt: Vec<BBox>,
    /// Boxes the strategy samples from (proposals or ground truth).
    pub boxes: Option<Vec<BBox>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub strategy: String,
    pub n_samples: usize,
    pub view_iou_mean: f64,
    pub view_iou_std: f64,
    /// Over pairs whose views intersect.
    pub object_fraction_mean: f64,
    pub object_fraction_std: f64,
    pub empty_intersections: usize,
}

/// Fraction of the pixels of `region` covered by at least one of `gt`.
pub fn covered_fraction(region: &BBox, gt: &[BBox]) -> f64 {
    let mut mask = vec![false; region.area() as usize];
    for g in gt {
        if let Some(c) = g.intersect(region) {
            for y in c.y..c.bottom() {
                let row = ((y - region.y) * region.w) as usize;
                let x0 = (c.x - region.x) as usize;
                mask[row + x0..row + x0 + c.w as usize].fill(true);
            }
        }
    }
    mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Sample `n_samples` view pairs (sample `i` uses image `i mod len` and its
/// own derived RNG) and summarise how much the two source rectangles
/// overlap and how much of the overlap is object.
pub fn overlap_report(
    items: &[OverlapItem],
    strategy: Strategy,
    cfg: &CropConfig,
    s_min: f64,
    n_samples: usize,
    seed: u64,
) -> Result<OverlapReport> {
    if items.is_empty() {
        return Err(Error::EmptyDataset("overlap analysis needs images".into()));
    }
    let mut ious = Vec::with_capacity(n_samples);
    let mut fracs = Vec::with_capacity(n_samples);
    let mut empty = 0;
    for i in 0..n_samples {
        let it = &items[i % items.len()];
        let mut rng = Rng::derive(&[seed, OVERLAP_STREAM, i as u64]);
        let g = sample_pair_geometry(it.width, it.height, it.boxes.as_deref(), strategy, cfg, s_min, &mut rng)?;
        ious.push(g.src_a.iou(&g.src_b));
        match g.src_a.intersect(&g.src_b) {
            Some(inter) => fracs.push(covered_fraction(&inter, &it.gt)),
            None => empty += 1,
        }
    }
    let (view_iou_mean, view_iou_std) = mean_std(&ious);
    let (object_fraction_mean, object_fraction_std) = mean_std(&fracs);
    Ok(OverlapReport {
        strategy: strategy.name().into(),
        n_samples,
        view_iou_mean,
        view_iou_std,
        object_fraction_mean,
        object_fraction_std,
        empty_intersections: empty,
    })
}
