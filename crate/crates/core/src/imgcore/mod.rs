//! Image buffers, box geometry, the seeded RNG, and PPM I/O shared by
//! every other module.

mod bbox;
mod image;
mod ppm;
mod rng;

pub use bbox::BBox;
pub use image::{resize_bilinear, ImageRgb};
pub use ppm::{load_ppm, ppm_read, ppm_write};
pub use rng::{hash_str, mix_seed, Rng};
