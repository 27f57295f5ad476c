use super::config::{BoxSource, CropConfig, Role, Strategy};
use super::geometry::{dilate_box, min_size_recenter, rrc_box, shift_box};
use crate::error::{Error, Result};
use crate::imgcore::{hash_str, resize_bilinear, BBox, ImageRgb, Rng};
use serde::{Deserialize, Serialize};

/// Geometry of a view pair: crop rectangles in source-image coordinates,
/// head roles and flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub src_a: BBox,
    pub src_b: BBox,
    pub role_a: Role,
    pub role_b: Role,
    /// Box chosen from the proposal or ground-truth list, before recentring.
    pub proposal_used: Option<BBox>,
    pub flip_a: bool,
    pub flip_b: bool,
}

/// Two `target`×`target` views of one image plus their geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub view_a: ImageRgb,
    pub view_b: ImageRgb,
    pub geometry: PairGeometry,
}

/// Per-image generator for pair sampling: the run seed mixed with the
/// image key and an epoch counter.
pub fn pair_rng(seed: u64, image_key: &str, epoch: u64) -> Rng {
    Rng::derive(&[seed, hash_str(image_key), epoch])
}

/// Draw the crop rectangles for one pair without touching pixels.
///
/// `boxes` is the proposal list (object strategies) or the ground-truth list
/// (`Gt*` strategies); it is ignored by `SceneScene`. `s_min` is the lower
/// crop scale for box-relative crops unless the config overrides it.
pub fn sample_pair_geometry(
    img_w: u32,
    img_h: u32,
    boxes: Option<&[BBox]>,
    strategy: Strategy,
    cfg: &CropConfig,
    s_min: f64,
    rng: &mut Rng,
) -> Result<PairGeometry> {
    let s_min = cfg.s_min_override.unwrap_or(s_min);
    let full = BBox::full(img_w, img_h);
    let scene = |rng: &mut Rng| rrc_box(&full, cfg.scale_lo, cfg.scale_hi, cfg.ratio_lo, cfg.ratio_hi, rng);
    let inside = |region: &BBox, rng: &mut Rng| rrc_box(region, s_min, 1.0, cfg.ratio_lo, cfg.ratio_hi, rng);

    let chosen = match strategy.box_source() {
        BoxSource::None => None,
        BoxSource::Proposals | BoxSource::GroundTruth => {
            let list = boxes.filter(|b| !b.is_empty()).ok_or_else(|| Error::MissingBoxes {
                strategy: strategy.name().into(),
            })?;
            Some(list[rng.below(list.len() as u64) as usize])
        }
    };
    let p = match chosen {
        Some(b) => {
            let b = b.intersect(&full).ok_or(Error::DegenerateRegion([b.x, b.y, b.w, b.h]))?;
            let side = cfg.min_crop_side().min(img_w).min(img_h);
            Some(min_size_recenter(&b, side, img_w, img_h)?)
        }
        None => None,
    };

    use Role::*;
    let (src_a, src_b, role_a, role_b) = match (strategy, p) {
        (Strategy::SceneScene, _) => (scene(rng)?, scene(rng)?, Context, Context),
        (Strategy::ObjScene | Strategy::GtScene, Some(p)) => (inside(&p, rng)?, scene(rng)?, Object, Context),
        (Strategy::ObjObjDilate | Strategy::GtDilate, Some(p)) => {
            let d = dilate_box(&p, cfg.delta, img_w, img_h);
            (inside(&p, rng)?, inside(&d, rng)?, Object, Context)
        }
        (Strategy::ObjObjShift, Some(p)) => {
            let a = inside(&p, rng)?;
            let s = shift_box(&p, cfg.shift_lo, cfg.shift_hi, rng, img_w, img_h);
            (a, inside(&s, rng)?, Object, Object)
        }
        (Strategy::DilateDilate, Some(p)) => {
            let d = dilate_box(&p, cfg.delta, img_w, img_h);
            (inside(&d, rng)?, inside(&d, rng)?, Context, Context)
        }
        _ => unreachable!("box-based strategy without a box"),
    };
    let flip_a = rng.bernoulli(cfg.flip_prob);
    let flip_b = rng.bernoulli(cfg.flip_prob);
    Ok(PairGeometry {
        src_a,
        src_b,
        role_a,
        role_b,
        proposal_used: chosen,
        flip_a,
        flip_b,
    })
}

/// Crop, resize to `target`×`target` and optionally mirror.
pub fn render_view(img: &ImageRgb, src: &BBox, target: u32, flip: bool) -> Result<ImageRgb> {
    let mut v = resize_bilinear(&img.crop(src)?, target, target)?;
    if flip {
        v.flip_horizontal();
    }
    Ok(v)
}

/// Sample a pair of views of `img` under `strategy`.
pub fn sample_pair(
    img: &ImageRgb,
    boxes: Option<&[BBox]>,
    strategy: Strategy,
    cfg: &CropConfig,
    s_min: f64,
    rng: &mut Rng,
) -> Result<ViewPair> {
    let g = sample_pair_geometry(img.width(), img.height(), boxes, strategy, cfg, s_min, rng)?;
    Ok(ViewPair {
        view_a: render_view(img, &g.src_a, cfg.target, g.flip_a)?,
        view_b: render_view(img, &g.src_b, cfg.target, g.flip_b)?,
        geometry: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cropper::Strategy;
    use crate::imgcore::Rng;
    use proptest::prelude::*;

    fn noise_image(w: u32, h: u32, seed: u64) -> ImageRgb {
        let mut rng = Rng::new(seed);
        ImageRgb::from_raw(w, h, (0..w * h * 3).map(|_| rng.below(256) as u8).collect()).unwrap()
    }

    fn no_flip() -> CropConfig {
        CropConfig {
            flip_prob: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn missing_boxes_name_the_strategy() {
        let img = noise_image(64, 64, 0);
        let mut rng = Rng::new(0);
        for s in Strategy::ALL.into_iter().filter(|s| *s != Strategy::SceneScene) {
            for boxes in [None, Some(&[][..])] {
                let err = sample_pair(&img, boxes, s, &no_flip(), 0.5, &mut rng).unwrap_err();
                assert!(err.to_string().contains(s.name()), "{err}");
            }
        }
        assert!(sample_pair(&img, None, Strategy::SceneScene, &no_flip(), 0.5, &mut rng).is_ok());
    }

    #[test]
    fn scene_scene_is_reproducible() {
        let img = noise_image(80, 60, 1);
        let run = || {
            let mut rng = pair_rng(7, "images/000003.ppm", 2);
            sample_pair(&img, None, Strategy::SceneScene, &CropConfig::default(), 1.0, &mut rng).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!((a.geometry.role_a, a.geometry.role_b), (Role::Context, Role::Context));
        assert!(a.geometry.src_a.is_inside(80, 60) && a.geometry.src_b.is_inside(80, 60));
    }

    #[test]
    fn degenerate_dilate_gives_equal_views() {
        let img = noise_image(128, 128, 2);
        let cfg = CropConfig {
            delta: 0.0,
            ..no_flip()
        };
        let boxes = [BBox::new(40, 30, 48, 36)];
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let p = sample_pair(&img, Some(&boxes), Strategy::ObjObjDilate, &cfg, 1.0, &mut rng).unwrap();
            assert_eq!(p.geometry.src_a, boxes[0]);
            assert_eq!(p.geometry.src_b, boxes[0]);
            assert_eq!(p.view_a, p.view_b);
            let expect = resize_bilinear(&img.crop(&boxes[0]).unwrap(), 32, 32).unwrap();
            assert_eq!(p.view_a, expect);
        }
    }

    #[test]
    fn obj_obj_dilate_views_differ() {
        let boxes = [BBox::new(40, 30, 30, 36), BBox::new(5, 70, 50, 40)];
        let mut rng = Rng::new(4);
        let mut equal = 0;
        for _ in 0..1000 {
            let g = sample_pair_geometry(128, 128, Some(&boxes), Strategy::ObjObjDilate, &no_flip(), 0.5, &mut rng)
                .unwrap();
            let used = g.proposal_used.unwrap();
            let p = min_size_recenter(&used, 32, 128, 128).unwrap();
            let d = dilate_box(&p, 0.1, 128, 128);
            assert!(p.contains(&g.src_a) && d.contains(&g.src_b) && d.contains(&p));
            equal += (g.src_a == g.src_b) as usize;
        }
        assert_eq!(equal, 0);
    }

    #[test]
    fn roles_per_strategy() {
        let boxes = [BBox::new(10, 10, 40, 40)];
        let mut rng = Rng::new(0);
        let expect = [
            (Strategy::SceneScene, Role::Context, Role::Context),
            (Strategy::ObjScene, Role::Object, Role::Context),
            (Strategy::ObjObjDilate, Role::Object, Role::Context),
            (Strategy::ObjObjShift, Role::Object, Role::Object),
            (Strategy::DilateDilate, Role::Context, Role::Context),
            (Strategy::GtScene, Role::Object, Role::Context),
            (Strategy::GtDilate, Role::Object, Role::Context),
        ];
        for (s, a, b) in expect {
            let g = sample_pair_geometry(128, 128, Some(&boxes), s, &no_flip(), 0.5, &mut rng).unwrap();
            assert_eq!((g.role_a, g.role_b), (a, b), "{s}");
        }
    }

    #[test]
    fn flips_follow_probability() {
        let img = noise_image(64, 64, 5);
        let cfg = CropConfig {
            flip_prob: 1.0,
            scale_lo: 1.0,
            ratio_lo: 1.0,
            ratio_hi: 1.0,
            ..Default::default()
        };
        let mut rng = Rng::new(0);
        let p = sample_pair(&img, None, Strategy::SceneScene, &cfg, 1.0, &mut rng).unwrap();
        let mut plain = resize_bilinear(&img, 32, 32).unwrap();
        plain.flip_horizontal();
        assert!(p.geometry.flip_a && p.geometry.flip_b);
        assert_eq!(p.view_a, plain);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn views_are_target_sized_and_inside(seed in any::<u64>(), si in 0usize..7) {
            let mut rng = Rng::new(seed);
            let (w, h) = (24 + rng.below(120) as u32, 24 + rng.below(120) as u32);
            let img = noise_image(w, h, seed);
            let n = 1 + rng.below(5) as usize;
            let boxes: Vec<BBox> = (0..n)
                .map(|_| {
                    let bw = 1 + rng.below(w as u64) as u32;
                    let bh = 1 + rng.below(h as u64) as u32;
                    BBox::new(rng.below((w - bw + 1) as u64) as u32, rng.below((h - bh + 1) as u64) as u32, bw, bh)
                })
                .collect();
            let cfg = CropConfig { target: 16, shift_lo: 5.0, shift_hi: 30.0, ..Default::default() };
            let s_min = rng.uniform_in(0.2, 1.0);
            let p = sample_pair(&img, Some(&boxes), Strategy::ALL[si], &cfg, s_min, &mut rng).unwrap();
            prop_assert_eq!((p.view_a.width(), p.view_a.height()), (16, 16));
            prop_assert_eq!((p.view_b.width(), p.view_b.height()), (16, 16));
            prop_assert!(p.geometry.src_a.is_inside(w, h));
            prop_assert!(p.geometry.src_b.is_inside(w, h));
        }
    }
}
