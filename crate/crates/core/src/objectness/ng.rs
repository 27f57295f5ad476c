use crate::imgcore::ImageRgb;

/// Normed-gradient map: one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u8>,
}

impl NgMap {
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> u8 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Area-average resize: each output cell is the coverage-weighted mean
    /// of the source cells it spans. Point-sampled interpolation would drop
    /// one- and two-pixel edges when shrinking by 4x or more.
    pub fn resized(&self, out_w: u32, out_h: u32) -> NgMap {
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let (ow, oh) = (out_w as usize, out_h as usize);
        let xw = area_weights(w, ow);
        let yw = area_weights(h, oh);
        // horizontal pass
        let mut tmp = vec![0f32; ow * h];
        for y in 0..h {
            let row = &self.values[y * w..(y + 1) * w];
            for (ox, taps) in xw.iter().enumerate() {
                tmp[y * ow + ox] = taps.iter().map(|&(i, wt)| row[i] as f32 * wt).sum();
            }
        }
        let mut values = vec![0u8; ow * oh];
        for (oy, taps) in yw.iter().enumerate() {
            for ox in 0..ow {
                let v: f32 = taps.iter().map(|&(i, wt)| tmp[i * ow + ox] * wt).sum();
                values[oy * ow + ox] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        NgMap {
            width: out_w,
            height: out_h,
            values,
        }
    }
}

/// For each output cell, the source cells it overlaps with normalized
/// coverage weights.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f32)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let (a, b) = (o as f64 * scale, (o + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut i = a.floor() as usize;
            while (i as f64) < b && i < n_in {
                let cover = (b.min(i as f64 + 1.0) - a.max(i as f64)).max(0.0);
                if cover > 0.0 {
                    taps.push((i, (cover / scale) as f32));
                }
                i += 1;
            }
            taps
        })
        .collect()
}

/// Luma, rounded: `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn grayscale(img: &ImageRgb) -> Vec<u8> {
    img.data()
        .chunks_exact(3)
        .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
        .collect()
}

/// `NG = min(|gx| + |gy|, 255)` where `gx`, `gy` are central differences
/// halved, with replicated borders. The halving is applied to the summed
/// magnitudes and floored.
pub fn normed_gradient(img: &ImageRgb) -> NgMap {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = grayscale(img);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let dx = gray[y * w + right] as i32 - gray[y * w + left] as i32;
            let dy = gray[down * w + x] as i32 - gray[up * w + x] as i32;
            values.push(((dx.abs() + dy.abs()) / 2).min(255) as u8);
        }
    }
    NgMap {
        width: img.width(),
        height: img.height(),
        values,
    }
}
