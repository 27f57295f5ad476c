//! View-pair sampling: random resized crops, box dilation, shifting and
//! recentring, and the pairing strategies fed to the trainer.

mod config;
mod dump;
mod geometry;
mod pair;

pub use config::{BoxSource, CropConfig, Role, Strategy};
pub use dump::{dump_pairs, DumpRecord};
pub use geometry::{compute_smin, dilate_box, min_size_recenter, random_resized_crop, rrc_box, shift_box};
pub use pair::{pair_rng, render_view, sample_pair, sample_pair_geometry, PairGeometry, ViewPair};
