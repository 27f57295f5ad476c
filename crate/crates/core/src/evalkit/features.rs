use crate::error::{Error, Result};
use crate::imgcore::{resize_bilinear, BBox, ImageRgb};
use crate::ssl::ModelState;
use crate::synthgen::ImageRecord;
use ndarray::{concatenate, Array2, Axis};

const CHUNK: usize = 256;

/// Largest centred square of `img`, resized to `side`×`side`.
pub fn center_view(img: &ImageRgb, side: u32) -> Result<ImageRgb> {
    let s = img.width().min(img.height());
    let sq = BBox::new((img.width() - s) / 2, (img.height() - s) / 2, s, s);
    resize_bilinear(&img.crop(&sq)?, side, side)
}

/// Pre-projection features of the query encoder for the centre view of
/// each image, one row per image. Views are `view_side` square; `None`
/// means the model's input side, or for a convolutional model the image's
/// own shorter side (no resampling).
pub fn extract_features(state: &ModelState, images: &[ImageRgb], view_side: Option<u32>) -> Result<Array2<f64>> {
    let conv = state.query.front.is_some();
    let chunk = if conv { 1 } else { CHUNK };
    let mut parts = Vec::new();
    for chunk in images.chunks(chunk) {
        let views = chunk
            .iter()
            .map(|im| {
                let side = match view_side {
                    Some(s) => s,
                    None if conv => im.width().min(im.height()),
                    None => state.input_side,
                };
                center_view(im, side)
            })
            .collect::<Result<Vec<_>>>()?;
        parts.push(state.features(&views.iter().collect::<Vec<_>>())?);
    }
    if parts.is_empty() {
        return Ok(Array2::zeros((0, state.arch.feature)));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(concatenate(Axis(0), &views).expect("equal widths"))
}

/// Multi-hot class presence, `records × n_classes`.
pub fn label_matrix(records: &[ImageRecord], n_classes: usize) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((records.len(), n_classes));
    for (i, r) in records.iter().enumerate() {
        for o in &r.objects {
            if o.class >= n_classes {
                return Err(Error::ClassOutOfRange {
                    class: o.class,
                    n_classes,
                });
            }
            y[[i, o.class]] = 1.0;
        }
    }
    Ok(y)
}
