//! JSON clip cache. Only rotations and root translations are stored;
//! positions and velocities are rederived on load.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::MotionClip;
use crate::motion::{MotionFrame, Quaternion, Skeleton, Vec3};
use crate::{Error, Result};

pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CachedClip {
    id: String,
    fps: f64,
    style: usize,
    content: usize,
    skeleton: Skeleton,
    rotations: Vec<Vec<[f64; 4]>>,
    roots: Vec<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format_version: u32,
    clips: Vec<CachedClip>,
}

pub fn clips_to_json(clips: &[MotionClip]) -> Result<String> {
    let file = CacheFile {
        format_version: CACHE_FORMAT_VERSION,
        clips: clips
            .iter()
            .map(|c| CachedClip {
                id: c.id.clone(),
                fps: c.fps,
                style: c.style,
                content: c.content,
                skeleton: (*c.skeleton).clone(),
                rotations: c
                    .frames
                    .iter()
                    .map(|f| f.rotations.iter().map(|q| q.to_array()).collect())
                    .collect(),
                roots: c.frames.iter().map(|f| f.root_translation).collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn clips_from_json(text: &str) -> Result<Vec<MotionClip>> {
    let file: CacheFile = serde_json::from_str(text)?;
    if file.format_version != CACHE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "clip cache version {} (supported: {CACHE_FORMAT_VERSION})",
            file.format_version
        )));
    }
    file.clips
        .into_iter()
        .map(|c| {
            let skeleton = Skeleton::with_layout(
                c.skeleton.names().to_vec(),
                c.skeleton.parents().to_vec(),
                c.skeleton.offsets().to_vec(),
                c.skeleton.euler_orders().to_vec(),
                c.skeleton.end_sites().to_vec(),
            )?;
            let rotations: Vec<Vec<Quaternion>> = c
                .rotations
                .iter()
                .map(|f| f.iter().map(|q| Quaternion::from_array(*q)).collect())
                .collect();
            let frames =
                MotionFrame::sequence_from_pose_track(&skeleton, &rotations, &c.roots, c.fps)?;
            let clip = MotionClip {
                id: c.id,
                skeleton: Arc::new(skeleton),
                frames,
                fps: c.fps,
                style: c.style,
                content: c.content,
            };
            clip.validate()?;
            Ok(clip)
        })
        .collect()
}

pub fn write_clip_cache(path: impl AsRef<Path>, clips: &[MotionClip]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, clips_to_json(clips)?).map_err(|e| Error::io(path, e))
}

pub fn read_clip_cache(path: impl AsRef<Path>) -> Result<Vec<MotionClip>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    clips_from_json(&text)
}
