use super::BBox;
use crate::error::{Error, Result};

/// Owned 8-bit RGB raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageRgb {
    /// Black image of the given size.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Ok(ImageRgb {
            width,
            height,
            data,
        })
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} bytes, {}x{} RGB needs {}",
                data.len(),
                width,
                height,
                expected
            )));
        }
        Ok(ImageRgb {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn bounds(&self) -> BBox {
        BBox::full(self.width, self.height)
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copy out a sub-rectangle. The box must lie inside the image.
    pub fn crop(&self, region: &BBox) -> Result<ImageRgb> {
        if !region.is_inside(self.width, self.height) {
            return Err(Error::DegenerateRegion((*region).into()));
        }
        let row_bytes = region.w as usize * 3;
        let mut data = Vec::with_capacity(row_bytes * region.h as usize);
        for y in region.y..region.bottom() {
            let start = (y as usize * self.width as usize + region.x as usize) * 3;
            data.extend_from_slice(&self.data[start..start + row_bytes]);
        }
        ImageRgb::from_raw(region.w, region.h, data)
    }

    pub fn flip_horizontal(&mut self) {
        let w = self.width as usize;
        for row in self.data.chunks_exact_mut(w * 3) {
            for x in 0..w / 2 {
                let (a, b) = (x * 3, (w - 1 - x) * 3);
                for c in 0..3 {
                    row.swap(a + c, b + c);
                }
            }
        }
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidImage(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Sampling taps for one output coordinate.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Half-pixel-center taps: source coordinate `(i + 0.5) * in/out - 0.5`,
/// clamped to the valid range.
fn taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    let max = (in_len - 1) as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            Tap {
                lo,
                hi,
                frac: src - lo as f64,
            }
        })
        .collect()
}

/// Bilinear resize of an interleaved 8-bit plane with `channels` channels.
fn resize_plane(
    src: &[u8],
    width: usize,
    height: usize,
    channels: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<u8> {
    let xt = taps(width, out_w);
    let yt = taps(height, out_h);
    let mut out = Vec::with_capacity(out_w * out_h * channels);
    let stride = width * channels;
    for ty in &yt {
        let r0 = &src[ty.lo * stride..(ty.lo + 1) * stride];
        let r1 = &src[ty.hi * stride..(ty.hi + 1) * stride];
        for tx in &xt {
            for c in 0..channels {
                let a = r0[tx.lo * channels + c] as f64;
                let b = r0[tx.hi * channels + c] as f64;
                let p = r1[tx.lo * channels + c] as f64;
                let q = r1[tx.hi * channels + c] as f64;
                let top = a + (b - a) * tx.frac;
                let bot = p + (q - p) * tx.frac;
                let v = top + (bot - top) * ty.frac;
                out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Bilinear resize with the half-pixel-center convention and
/// round-to-nearest 8-bit output.
pub fn resize_bilinear(img: &ImageRgb, out_w: u32, out_h: u32) -> Result<ImageRgb> {
    check_dims(out_w, out_h)?;
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let data = resize_plane(
        &img.data,
        img.width as usize,
        img.height as usize,
        3,
        out_w as usize,
        out_h as usize,
    );
    ImageRgb::from_raw(out_w, out_h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Rng;
    use proptest::prelude::*;

    /// Independent per-pixel scalar evaluation of the half-pixel formula.
    /// Returns the unrounded values.
    fn oracle_resize(img: &ImageRgb, ow: u32, oh: u32) -> Vec<f64> {
        let (w, h) = (img.width() as f64, img.height() as f64);
        let mut out = vec![];
        for oy in 0..oh {
            for ox in 0..ow {
                let sx = ((ox as f64 + 0.5) * (w / ow as f64) - 0.5).max(0.0).min(w - 1.0);
                let sy = ((oy as f64 + 0.5) * (h / oh as f64) - 0.5).max(0.0).min(h - 1.0);
                let (x0, y0) = (sx.floor(), sy.floor());
                let (x1, y1) = ((x0 + 1.0).min(w - 1.0), (y0 + 1.0).min(h - 1.0));
                let (fx, fy) = (sx - x0, sy - y0);
                for c in 0..3 {
                    let g = |x: f64, y: f64| img.pixel(x as u32, y as u32)[c] as f64;
                    let v = g(x0, y0) * (1.0 - fx) * (1.0 - fy)
                        + g(x1, y0) * fx * (1.0 - fy)
                        + g(x0, y1) * (1.0 - fx) * fy
                        + g(x1, y1) * fx * fy;
                    out.push(v);
                }
            }
        }
        out
    }

    /// Exact match, except where the true value sits on a rounding tie and
    /// the two evaluation orders may legitimately land on either side.
    fn assert_matches_oracle(got: &[u8], want: &[f64]) {
        assert_eq!(got.len(), want.len());
        for (i, (&g, &w)) in got.iter().zip(want).enumerate() {
            let rounded = (w + 0.5).floor().clamp(0.0, 255.0);
            let near_tie = ((w - w.floor()) - 0.5).abs() < 1e-9;
            let ok = g as f64 == rounded || (near_tie && (g as f64 - w).abs() <= 0.5 + 1e-9);
            assert!(ok, "sample {i}: got {g}, oracle {w}");
        }
    }

    fn random_image(rng: &mut Rng, w: u32, h: u32) -> ImageRgb {
        let data = (0..w * h * 3).map(|_| rng.below(256) as u8).collect();
        ImageRgb::from_raw(w, h, data).unwrap()
    }

    #[test]
    fn same_size_is_identity() {
        let mut rng = Rng::new(7);
        let img = random_image(&mut rng, 13, 9);
        let data = resize_plane(img.data(), 13, 9, 3, 13, 9);
        assert_eq!(data, img.data());
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageRgb::filled(7, 5, [12, 200, 99]).unwrap();
        for (w, h) in [(1, 1), (3, 11), (20, 20)] {
            let out = resize_bilinear(&img, w, h).unwrap();
            assert!(out.data().chunks(3).all(|p| p == [12, 200, 99]));
        }
    }

    #[test]
    fn two_by_two_to_one() {
        let mut data = vec![];
        for v in [0u8, 100, 200, 40] {
            data.extend([v, v, v]);
        }
        let img = ImageRgb::from_raw(2, 2, data).unwrap();
        let out = resize_bilinear(&img, 1, 1).unwrap();
        assert_matches_oracle(out.data(), &oracle_resize(&img, 1, 1));
        // source coordinate (0.5, 0.5): plain average of the four pixels
        assert_eq!(out.pixel(0, 0), [85, 85, 85]);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = Rng::new(11);
        for _ in 0..30 {
            let (w, h) = (1 + rng.below(20) as u32, 1 + rng.below(20) as u32);
            let (ow, oh) = (1 + rng.below(25) as u32, 1 + rng.below(25) as u32);
            let img = random_image(&mut rng, w, h);
            let out = resize_bilinear(&img, ow, oh).unwrap();
            assert_matches_oracle(out.data(), &oracle_resize(&img, ow, oh));
        }
    }

    #[test]
    fn crop_and_flip() {
        let mut rng = Rng::new(3);
        let img = random_image(&mut rng, 6, 4);
        let c = img.crop(&BBox::new(2, 1, 3, 2)).unwrap();
        assert_eq!(c.pixel(0, 0), img.pixel(2, 1));
        assert_eq!(c.pixel(2, 1), img.pixel(4, 2));
        assert!(img.crop(&BBox::new(4, 0, 3, 1)).is_err());

        let mut f = img.clone();
        f.flip_horizontal();
        assert_eq!(f.pixel(0, 3), img.pixel(5, 3));
        f.flip_horizontal();
        assert_eq!(f, img);
    }

    proptest! {
        #[test]
        fn resize_stays_within_input_range(seed in any::<u64>(), ow in 1u32..30, oh in 1u32..30) {
            let mut rng = Rng::new(seed);
            let (w, h) = (1 + rng.below(16) as u32, 1 + rng.below(16) as u32);
            let img = random_image(&mut rng, w, h);
            let out = resize_bilinear(&img, ow, oh).unwrap();
            for c in 0..3 {
                let ch = |d: &[u8]| d.iter().skip(c).step_by(3).copied().collect::<Vec<_>>();
                let (i, o) = (ch(img.data()), ch(out.data()));
                prop_assert!(o.iter().min() >= i.iter().min());
                prop_assert!(o.iter().max() <= i.iter().max());
            }
        }
    }
}
