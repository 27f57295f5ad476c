//! Object-aware cropping for self-supervised learning.
//!
//! The crate bundles a normed-gradient objectness engine, the crop-pairing
//! strategies built on its proposals, a small momentum-contrast trainer with
//! separate object and context projection heads, a synthetic multi-object
//! scene generator, and the evaluation tools (linear probe mAP, view-overlap
//! statistics, sweeps and throughput benchmarks) used to compare strategies.

pub mod error;
pub mod imgcore;

pub use error::{Error, Result};
pub mod io;
pub mod synthgen;
pub mod objectness;
pub mod cropper;
pub mod ssl;
pub mod evalkit;
pub mod pipeline;
