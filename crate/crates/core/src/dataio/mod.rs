//! File formats, manifests, windowing and the synthetic dataset generator.

mod clips;
mod manifest;
mod motion_file;
pub mod synthetic;

pub use clips::{load_clip, window_clip, window_clips, window_count, LoadedClip, TrainingWindow};
pub use manifest::{split_dataset, ClipManifestEntry, Manifest, Split};
pub use motion_file::{load_motion, motion_from_bytes, motion_to_bytes, save_motion, MOTION_MAGIC, MOTION_VERSION};
pub use synthetic::{generate_synthetic_dataset, synthesize_clip, SyntheticClip, SyntheticSpec};
