use crate::error::{Error, Result};
use crate::imgcore::{resize_bilinear, BBox, ImageRgb, Rng};

const RRC_ATTEMPTS: usize = 10;

fn check_scale(scale_lo: f64, scale_hi: f64, ratio_lo: f64, ratio_hi: f64) -> Result<()> {
    if !(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "scale bounds [{scale_lo}, {scale_hi}] outside (0, 1]"
        )));
    }
    if !(ratio_lo > 0.0 && ratio_lo <= ratio_hi) {
        return Err(Error::InvalidConfig(format!(
            "ratio bounds [{ratio_lo}, {ratio_hi}] invalid"
        )));
    }
    Ok(())
}

/// Rectangle chosen by [`random_resized_crop`], without touching pixels.
///
/// Tries up to 10 (area, aspect) draws that fit inside `region`; otherwise
/// falls back to a centred crop. The fallback takes the largest centred
/// rectangle within the aspect bounds, then stretches or shrinks it so its
/// area fraction stays inside `[scale_lo, scale_hi]`; the area bounds win
/// when both cannot hold.
pub fn rrc_box(
    region: &BBox,
    scale_lo: f64,
    scale_hi: f64,
    ratio_lo: f64,
    ratio_hi: f64,
    rng: &mut Rng,
) -> Result<BBox> {
    if region.is_empty() {
        return Err(Error::DegenerateRegion([region.x, region.y, region.w, region.h]));
    }
    check_scale(scale_lo, scale_hi, ratio_lo, ratio_hi)?;
    let (rw, rh) = (region.w as f64, region.h as f64);
    let area = rw * rh;
    let (log_lo, log_hi) = (ratio_lo.ln(), ratio_hi.ln());
    for _ in 0..RRC_ATTEMPTS {
        let target_area = rng.uniform_in(scale_lo, scale_hi) * area;
        let aspect = rng.uniform_in(log_lo, log_hi).exp();
        let w = (target_area * aspect).sqrt().round() as u32;
        let h = (target_area / aspect).sqrt().round() as u32;
        // rounding must not drop the area below the lower bound, so that
        // scale_lo = 1 always yields the region itself
        let too_small = ((w as u64 * h as u64) as f64) < scale_lo * area - 1e-9;
        if w >= 1 && h >= 1 && w <= region.w && h <= region.h && !too_small {
            let x = region.x + rng.below((region.w - w + 1) as u64) as u32;
            let y = region.y + rng.below((region.h - h + 1) as u64) as u32;
            return Ok(BBox::new(x, y, w, h));
        }
    }

    let r = rw / rh;
    let (mut w, mut h) = if r < ratio_lo {
        (rw, rw / ratio_lo)
    } else if r > ratio_hi {
        (rh * ratio_hi, rh)
    } else {
        (rw, rh)
    };
    let frac = w * h / area;
    if frac > scale_hi {
        let s = (scale_hi / frac).sqrt();
        w *= s;
        h *= s;
    } else if frac < scale_lo {
        // only the clamped dimension can grow
        if w < rw {
            w = (scale_lo * area / h).min(rw);
        } else {
            h = (scale_lo * area / w).min(rh);
        }
    }
    let w = (w.round() as u32).clamp(1, region.w);
    let h = (h.round() as u32).clamp(1, region.h);
    Ok(BBox::new(
        region.x + (region.w - w) / 2,
        region.y + (region.h - h) / 2,
        w,
        h,
    ))
}

/// Random crop of `region` with area fraction in `[scale_lo, scale_hi]` and
/// log-uniform aspect in `[ratio_lo, ratio_hi]`, resized to
/// `target`×`target`. Returns the view and its rectangle in `img`.
pub fn random_resized_crop(
    img: &ImageRgb,
    region: &BBox,
    scale_lo: f64,
    scale_hi: f64,
    ratio_lo: f64,
    ratio_hi: f64,
    target: u32,
    rng: &mut Rng,
) -> Result<(ImageRgb, BBox)> {
    if !region.is_empty() && !region.is_inside(img.width(), img.height()) {
        return Err(Error::InvalidConfig(format!(
            "region {region:?} outside {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let b = rrc_box(region, scale_lo, scale_hi, ratio_lo, ratio_hi, rng)?;
    let view = resize_bilinear(&img.crop(&b)?, target, target)?;
    Ok((view, b))
}

/// Grow a box by `delta * img_w / 2` on the left and right and
/// `delta * img_h / 2` on the top and bottom, clipped to the image.
pub fn dilate_box(b: &BBox, delta: f64, img_w: u32, img_h: u32) -> BBox {
    let dx = delta * img_w as f64 / 2.0;
    let dy = delta * img_h as f64 / 2.0;
    BBox::from_edges_clipped(
        b.x as f64 - dx,
        b.y as f64 - dy,
        b.right() as f64 + dx,
        b.bottom() as f64 + dy,
        img_w,
        img_h,
    )
    .unwrap_or(*b)
}

/// Center displacement drawn by [`shift_box`]: distance and angle.
pub(crate) fn draw_shift(shift_lo: f64, shift_hi: f64, rng: &mut Rng) -> (f64, f64) {
    let d = rng.uniform_in(shift_lo, shift_hi);
    let theta = rng.uniform_in(0.0, std::f64::consts::TAU);
    (d * theta.cos(), d * theta.sin())
}

/// Same-size box whose center moved by a random distance in
/// `[shift_lo, shift_hi]` at a uniform angle, clipped to the image. When the
/// moved box would fall entirely outside, it is translated back to the
/// nearest fully visible position instead.
pub fn shift_box(b: &BBox, shift_lo: f64, shift_hi: f64, rng: &mut Rng, img_w: u32, img_h: u32) -> BBox {
    let (dx, dy) = draw_shift(shift_lo, shift_hi, rng);
    let x0 = (b.x as f64 + dx).round() as i64;
    let y0 = (b.y as f64 + dy).round() as i64;
    let clip = |start: i64, len: u32, limit: u32| -> Option<(u32, u32)> {
        let lo = start.max(0);
        let hi = (start + len as i64).min(limit as i64);
        (hi > lo).then(|| (lo as u32, (hi - lo) as u32))
    };
    match (clip(x0, b.w, img_w), clip(y0, b.h, img_h)) {
        (Some((x, w)), Some((y, h))) => BBox::new(x, y, w, h),
        _ => BBox::new(
            x0.clamp(0, (img_w - b.w.min(img_w)) as i64) as u32,
            y0.clamp(0, (img_h - b.h.min(img_h)) as i64) as u32,
            b.w.min(img_w),
            b.h.min(img_h),
        ),
    }
}

/// Grow each side shorter than `min_side` to `min_side` around the box
/// center, then translate (never shrink) so it fits in the image.
pub fn min_size_recenter(b: &BBox, min_side: u32, img_w: u32, img_h: u32) -> Result<BBox> {
    if min_side > img_w.min(img_h) {
        return Err(Error::InvalidConfig(format!(
            "min_side {min_side} exceeds {img_w}x{img_h} image"
        )));
    }
    if b.w >= min_side && b.h >= min_side {
        return Ok(*b);
    }
    let (cx, cy) = b.center();
    let w = b.w.max(min_side);
    let h = b.h.max(min_side);
    let place = |c: f64, len: u32, limit: u32| -> u32 {
        ((c - len as f64 / 2.0).round().max(0.0) as u32).min(limit - len)
    };
    Ok(BBox::new(place(cx, w, img_w), place(cy, h, img_h), w, h))
}

/// Dataset-level lower crop scale for box-relative crops:
/// `scale_lo / mean(box area / image area)` clamped to `[scale_lo, 1]`.
/// Each item is one image's boxes with its width and height.
pub fn compute_smin<'a>(items: impl IntoIterator<Item = (&'a [BBox], u32, u32)>, scale_lo: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (boxes, w, h) in items {
        let img_area = w as f64 * h as f64;
        for b in boxes {
            sum += b.area() as f64 / img_area;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyDataset("no proposals to compute s_min from".into()));
    }
    Ok(smin_from_mean(sum / n as f64, scale_lo))
}

pub(crate) fn smin_from_mean(avg: f64, scale_lo: f64) -> f64 {
    (scale_lo / avg).clamp(scale_lo, 1.0)
}
