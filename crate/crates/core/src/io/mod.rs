//! Clip ingestion and dataset construction.

mod bvh;
mod cache;
mod dataset;
pub mod synth;

pub use bvh::{parse_bvh, read_bvh, write_bvh, write_bvh_file};
pub use cache::{
    clips_from_json, clips_to_json, read_clip_cache, write_clip_cache, CACHE_FORMAT_VERSION,
};
pub use dataset::{
    apply_labels, downsample, read_label_sidecar, split_dataset, window_clip, window_clips,
    window_starts, ClipLabels, LabelSidecar, MotionClip, MotionWindow, WINDOW_LEN, WINDOW_OVERLAP,
};
pub use synth::{synth_dataset, synth_gait, synth_skeleton, SynthDatasetConfig, SynthStyleParams};
