//! Deterministic multi-object scene generator: textured backgrounds, small
//! off-center shapes whose class is shape × color, tight ground-truth boxes
//! and multi-label annotations in a JSONL manifest.

mod manifest;
mod scene;

pub use manifest::{split, ImageRecord, Manifest, ObjectAnnotation};
pub use scene::{
    class_style, generate, generate_in_memory, render_scene, BackgroundConfig, GenerationReport,
    SceneNote, Shape, SynthConfig, MAX_CLASSES, N_COLORS, N_SHAPES,
};
