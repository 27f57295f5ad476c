use super::model::{BingModel, FEAT_DIM, WIN};
use super::ng::{normed_gradient, NgMap};
use crate::error::{Error, Result};
use crate::imgcore::{BBox, ImageRgb, Rng};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Calibrated objectness. `-inf` marks the whole-image fallback and is
    /// written as JSON `null`.
    #[serde(serialize_with = "ser_score", deserialize_with = "de_score")]
    pub score: f64,
}

fn ser_score<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_score<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    pub n_max: usize,
    pub nms_iou: f64,
    /// Candidates kept per window size before the global NMS.
    pub per_size_keep: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            n_max: 10,
            nms_iou: 0.5,
            per_size_keep: 50,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::InvalidConfig("n_max must be >= 1".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nms_iou must lie in (0, 1), got {}",
                self.nms_iou
            )));
        }
        if self.per_size_keep == 0 {
            return Err(Error::InvalidConfig("per_size_keep must be >= 1".into()));
        }
        Ok(())
    }
}

/// Ranking order: score descending, then x ascending, then y ascending.
pub fn rank_order(a: &Proposal, b: &Proposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.cmp(&b.bbox.x))
        .then(a.bbox.y.cmp(&b.bbox.y))
}

/// Greedy non-maximum suppression. Survivors are returned in rank order and
/// have pairwise IoU strictly below `iou_thresh`.
pub fn nms(props: &[Proposal], iou_thresh: f64) -> Vec<Proposal> {
    let mut sorted = props.to_vec();
    sorted.sort_by(rank_order);
    let mut kept: Vec<Proposal> = Vec::new();
    for p in sorted {
        if kept.iter().all(|k| k.bbox.iou(&p.bbox) < iou_thresh) {
            kept.push(p);
        }
    }
    kept
}

/// Resized-map geometry for one quantized window size.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SizeGrid {
    pub rw: u32,
    pub rh: u32,
    img_w: u32,
    img_h: u32,
}

impl SizeGrid {
    /// `None` when the window does not fit in the image.
    pub fn new(img_w: u32, img_h: u32, (w, h): (u32, u32)) -> Option<Self> {
        if w > img_w || h > img_h {
            return None;
        }
        let rw = ((img_w as f64 * WIN as f64 / w as f64).round() as u32).max(WIN as u32);
        let rh = ((img_h as f64 * WIN as f64 / h as f64).round() as u32).max(WIN as u32);
        Some(SizeGrid {
            rw,
            rh,
            img_w,
            img_h,
        })
    }

    /// Original-image box of the window whose top-left is `(i, j)` in the
    /// resized map.
    pub fn window_box(&self, i: u32, j: u32) -> BBox {
        let sx = self.img_w as f64 / self.rw as f64;
        let sy = self.img_h as f64 / self.rh as f64;
        let x0 = (i as f64 * sx).round() as u32;
        let y0 = (j as f64 * sy).round() as u32;
        let x1 = (((i as usize + WIN) as f64 * sx).round() as u32).min(self.img_w);
        let y1 = (((j as usize + WIN) as f64 * sy).round() as u32).min(self.img_h);
        BBox::new(x0, y0, (x1 - x0).max(1), (y1 - y0).max(1))
    }

    /// Window origin in the resized map closest to a box's top-left corner.
    pub fn locate(&self, b: &BBox) -> (u32, u32) {
        let i = (b.x as f64 * self.rw as f64 / self.img_w as f64).round() as u32;
        let j = (b.y as f64 * self.rh as f64 / self.img_h as f64).round() as u32;
        (i.min(self.rw - WIN as u32), j.min(self.rh - WIN as u32))
    }

    pub fn n_positions(&self) -> (u32, u32) {
        (self.rw - WIN as u32 + 1, self.rh - WIN as u32 + 1)
    }
}

/// Normalized feature planes: NG / 255.
pub(crate) struct FeaturePlane {
    pub width: usize,
    pub values: Vec<f32>,
}

impl FeaturePlane {
    pub fn from_ng(ng: &NgMap) -> Self {
        FeaturePlane {
            width: ng.width as usize,
            values: ng.values.iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }

    pub fn window(&self, i: u32, j: u32) -> [f32; FEAT_DIM] {
        let mut out = [0f32; FEAT_DIM];
        for r in 0..WIN {
            let start = (j as usize + r) * self.width + i as usize;
            out[r * WIN..(r + 1) * WIN].copy_from_slice(&self.values[start..start + WIN]);
        }
        out
    }

    /// Stage-1 score for every window position, row-major over `(j, i)`.
    pub fn score_all(&self, model: &BingModel, grid: &SizeGrid) -> Vec<f32> {
        let (ni, nj) = grid.n_positions();
        let (ni, nj) = (ni as usize, nj as usize);
        let mut scores = vec![model.bias; ni * nj];
        for r in 0..WIN {
            let wrow = &model.stage1[r * WIN..(r + 1) * WIN];
            for j in 0..nj {
                let row = &self.values[(j + r) * self.width..(j + r + 1) * self.width];
                let out = &mut scores[j * ni..(j + 1) * ni];
                for (i, s) in out.iter_mut().enumerate() {
                    let px = &row[i..i + WIN];
                    let mut acc = 0f32;
                    for c in 0..WIN {
                        acc += wrow[c] * px[c];
                    }
                    *s += acc;
                }
            }
        }
        scores
    }
}

/// Ranked, same-size-suppressed candidates for one window size.
pub(crate) fn size_candidates(
    plane: &FeaturePlane,
    model: &BingModel,
    grid: &SizeGrid,
    keep: usize,
    nms_iou: f64,
) -> Vec<(f32, BBox)> {
    let (ni, _) = grid.n_positions();
    let scores = plane.score_all(model, grid);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // score desc, then row-major position for ties
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<(f32, BBox)> = Vec::with_capacity(keep);
    for idx in order {
        if kept.len() >= keep {
            break;
        }
        let (i, j) = (idx as u32 % ni, idx as u32 / ni);
        let b = grid.window_box(i, j);
        if kept.iter().all(|(_, k)| k.iou(&b) < nms_iou) {
            kept.push((scores[idx], b));
        }
    }
    kept
}

/// Score every window size, calibrate, suppress and return the top `n_max`.
pub fn propose(img: &ImageRgb, model: &BingModel, cfg: &ProposalConfig) -> Result<Vec<Proposal>> {
    model.validate()?;
    cfg.validate()?;
    let ng = normed_gradient(img);
    Ok(propose_from_ng(&ng, model, cfg))
}

pub(crate) fn propose_from_ng(ng: &NgMap, model: &BingModel, cfg: &ProposalConfig) -> Vec<Proposal> {
    let (w, h) = (ng.width, ng.height);
    let (min_w, min_h) = model.min_window();
    if w < min_w || h < min_h {
        return vec![Proposal {
            bbox: BBox::full(w, h),
            score: f64::NEG_INFINITY,
        }];
    }
    let mut candidates = Vec::new();
    for (&size, calib) in model.sizes.iter().zip(&model.stage2) {
        let Some(grid) = SizeGrid::new(w, h, size) else {
            continue;
        };
        let plane = FeaturePlane::from_ng(&ng.resized(grid.rw, grid.rh));
        for (raw, bbox) in size_candidates(&plane, model, &grid, cfg.per_size_keep, cfg.nms_iou) {
            candidates.push(Proposal {
                bbox,
                score: calib.apply(raw) as f64,
            });
        }
    }
    let mut out = nms(&candidates, cfg.nms_iou);
    out.truncate(cfg.n_max);
    out
}

/// Baseline: `n` windows with uniformly drawn size (among those that fit)
/// and uniformly drawn position, all scored 0.
pub fn random_proposals(img_w: u32, img_h: u32, sizes: &[(u32, u32)], n: usize, rng: &mut Rng) -> Vec<Proposal> {
    let fitting: Vec<(u32, u32)> = sizes
        .iter()
        .copied()
        .filter(|&(w, h)| w <= img_w && h <= img_h)
        .collect();
    if fitting.is_empty() {
        return vec![Proposal {
            bbox: BBox::full(img_w, img_h),
            score: 0.0,
        }];
    }
    (0..n)
        .map(|_| {
            let (w, h) = fitting[rng.below(fitting.len() as u64) as usize];
            let x = rng.below((img_w - w + 1) as u64) as u32;
            let y = rng.below((img_h - h + 1) as u64) as u32;
            Proposal {
                bbox: BBox::new(x, y, w, h),
                score: 0.0,
            }
        })
        .collect()
}

/// Fraction of ground-truth boxes matched (IoU ≥ `iou`) by one of the first
/// `k` proposals. Returns `(matched, total)`.
pub fn recall_counts(props: &[Proposal], gt: &[BBox], k: usize, iou: f64) -> (usize, usize) {
    let top = &props[..props.len().min(k)];
    let matched = gt
        .iter()
        .filter(|g| top.iter().any(|p| p.bbox.iou(g) >= iou))
        .count();
    (matched, gt.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectness::model::default_sizes;

    fn p(x: u32, y: u32, w: u32, h: u32, score: f64) -> Proposal {
        Proposal {
            bbox: BBox::new(x, y, w, h),
            score,
        }
    }

    /// Survivor iff no higher-ranked survivor overlaps it at the threshold,
    /// evaluated by scanning the full pairwise table.
    fn nms_reference(props: &[Proposal], thr: f64) -> Vec<Proposal> {
        let n = props.len();
        let rank = |i: usize| {
            (0..n)
                .filter(|&j| rank_order(&props[j], &props[i]) == Ordering::Less || (rank_order(&props[j], &props[i]) == Ordering::Equal && j < i))
                .count()
        };
        let mut by_rank: Vec<usize> = (0..n).collect();
        by_rank.sort_by_key(|&i| rank(i));
        let mut alive = vec![false; n];
        for (pos, &i) in by_rank.iter().enumerate() {
            alive[i] = by_rank[..pos]
                .iter()
                .all(|&j| !alive[j] || props[i].bbox.iou(&props[j].bbox) < thr);
        }
        by_rank.into_iter().filter(|&i| alive[i]).map(|i| props[i]).collect()
    }

    #[test]
    fn nms_basics() {
        let a = p(0, 0, 10, 10, 0.9);
        assert_eq!(nms(&[a], 0.5), vec![a]);
        let b = p(0, 0, 10, 10, 0.8);
        assert_eq!(nms(&[b, a], 0.5), vec![a]);
        assert!(nms(&[], 0.5).is_empty());
    }

    #[test]
    fn nms_tie_break_is_positional() {
        let a = p(5, 0, 10, 10, 1.0);
        let b = p(0, 3, 10, 10, 1.0);
        let c = p(0, 1, 10, 10, 1.0);
        let out = nms(&[a, b, c], 0.99);
        assert_eq!(out, vec![c, b, a]);
    }

    #[test]
    fn nms_matches_reference_on_random_sets() {
        let mut rng = Rng::new(42);
        for _ in 0..500 {
            let n = 1 + rng.below(32) as usize;
            let props: Vec<_> = (0..n)
                .map(|_| {
                    p(
                        rng.below(40) as u32,
                        rng.below(40) as u32,
                        1 + rng.below(30) as u32,
                        1 + rng.below(30) as u32,
                        // coarse scores so ties happen
                        rng.below(6) as f64 / 5.0,
                    )
                })
                .collect();
            let thr = 0.1 + 0.8 * rng.uniform();
            assert_eq!(nms(&props, thr), nms_reference(&props, thr));
        }
    }

    #[test]
    fn grid_maps_windows_back_near_their_size() {
        for size in default_sizes() {
            let Some(g) = SizeGrid::new(300, 300, size) else { continue };
            let b = g.window_box(0, 0);
            assert!((b.w as f64 - size.0 as f64).abs() <= size.0 as f64 * 0.1 + 1.0);
            let (ni, nj) = g.n_positions();
            let last = g.window_box(ni - 1, nj - 1);
            assert!(last.is_inside(300, 300), "{size:?} {last:?}");
            assert_eq!(g.locate(&b), (0, 0));
        }
        assert!(SizeGrid::new(100, 300, (128, 16)).is_none());
    }

    #[test]
    fn constant_image_is_deterministic() {
        let mut m = crate::objectness::BingModel::untrained(default_sizes());
        m.stage1[10] = 1.0;
        m.bias = 0.25;
        let img = ImageRgb::filled(64, 64, [90, 90, 90]).unwrap();
        let cfg = ProposalConfig::default();
        let a = propose(&img, &m, &cfg).unwrap();
        assert_eq!(a, propose(&img, &m, &cfg).unwrap());
        assert!(!a.is_empty() && a.len() <= cfg.n_max);
        // identity calibration: every score equals the stage-1 bias
        assert!(a.iter().all(|p| p.score == 0.25));
        for (i, x) in a.iter().enumerate() {
            for y in &a[i + 1..] {
                assert!(x.bbox.iou(&y.bbox) < cfg.nms_iou);
            }
        }
    }

    #[test]
    fn tiny_image_falls_back_to_whole_image() {
        let m = crate::objectness::BingModel::untrained(default_sizes());
        let img = ImageRgb::filled(10, 40, [0, 0, 0]).unwrap();
        let out = propose(&img, &m, &ProposalConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BBox::full(10, 40));
        assert_eq!(out[0].score, f64::NEG_INFINITY);
        let json = serde_json::to_string(&out[0]).unwrap();
        assert_eq!(json, r#"{"box":[0,0,10,40],"score":null}"#);
        let back: Proposal = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out[0]);
    }

    #[test]
    fn recall_counting() {
        let gt = [BBox::new(0, 0, 10, 10), BBox::new(50, 50, 10, 10)];
        let props = [p(1, 0, 10, 10, 1.0), p(30, 30, 5, 5, 0.5), p(50, 50, 10, 10, 0.1)];
        assert_eq!(recall_counts(&props, &gt, 2, 0.5), (1, 2));
        assert_eq!(recall_counts(&props, &gt, 10, 0.5), (2, 2));
    }
}
