//! Glue shared by the command-line tool and the acceptance suite: box lists
//! per strategy, training-set assembly, batch proposals and probing a
//! trained state.

use crate::cropper::{compute_smin, BoxSource, Strategy};
use crate::error::Result;
use crate::evalkit::{extract_features, label_matrix, linear_probe, ProbeConfig, ProbeReport};
use crate::imgcore::{BBox, ImageRgb};
use crate::objectness::{propose, BingModel, ProposalCache, ProposalConfig};
use crate::ssl::{ModelState, TrainData};
use crate::synthgen::ImageRecord;

/// Run `propose` on every image, keyed by its manifest path.
pub fn propose_all(model: &BingModel, cfg: &ProposalConfig, records: &[ImageRecord], images: &[ImageRgb]) -> Result<ProposalCache> {
    let mut cache = ProposalCache::new();
    for (r, img) in records.iter().zip(images) {
        cache.insert(r.image.clone(), propose(img, model, cfg)?);
    }
    Ok(cache)
}

/// The boxes `strategy` samples from for each record: cached proposals,
/// ground truth, or nothing.
pub fn strategy_boxes(strategy: Strategy, records: &[ImageRecord], cache: Option<&ProposalCache>) -> Result<Vec<Option<Vec<BBox>>>> {
    match strategy.box_source() {
        BoxSource::None => Ok(vec![None; records.len()]),
        BoxSource::GroundTruth => Ok(records.iter().map(|r| Some(r.boxes())).collect()),
        BoxSource::Proposals => {
            let empty = ProposalCache::new();
            let cache = cache.unwrap_or(&empty);
            cache.require(records.iter().map(|r| r.image.as_str()))?;
            Ok(records
                .iter()
                .map(|r| {
                    let p = cache.get(&r.image).expect("checked above");
                    Some(p.iter().map(|p| p.bbox).collect())
                })
                .collect())
        }
    }
}

/// `s_min` from the boxes a strategy uses; 1 when it uses none.
pub fn smin_for(boxes: &[Option<Vec<BBox>>], records: &[ImageRecord], scale_lo: f64) -> Result<f64> {
    if boxes.iter().all(Option::is_none) {
        return Ok(1.0);
    }
    compute_smin(
        boxes
            .iter()
            .zip(records)
            .filter_map(|(b, r)| b.as_deref().map(|b| (b, r.width, r.height))),
        scale_lo,
    )
}

/// Training set for `strategy`.
pub fn train_data(
    strategy: Strategy,
    records: &[ImageRecord],
    images: Vec<ImageRgb>,
    cache: Option<&ProposalCache>,
    scale_lo: f64,
) -> Result<TrainData> {
    let boxes = strategy_boxes(strategy, records, cache)?;
    let s_min = smin_for(&boxes, records, scale_lo)?;
    Ok(TrainData {
        keys: records.iter().map(|r| r.image.clone()).collect(),
        images,
        boxes,
        s_min,
    })
}

/// Linear probe on frozen features of `state`: fit on the training split,
/// report on the validation split.
pub fn probe_state(
    state: &ModelState,
    train: (&[ImageRgb], &[ImageRecord]),
    val: (&[ImageRgb], &[ImageRecord]),
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    cfg.validate()?;
    let tx = extract_features(state, train.0, cfg.view_side)?;
    let vx = extract_features(state, val.0, cfg.view_side)?;
    let ty = label_matrix(train.1, n_classes)?;
    let vy = label_matrix(val.1, n_classes)?;
    linear_probe(&tx, &ty, &vx, &vy, cfg)
}
