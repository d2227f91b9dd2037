use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::motion::{finite_difference_velocities, MotionFrame, Skeleton};
use crate::nn::seeded_rng;
use crate::{Error, Result};

/// Default window length.
pub const WINDOW_LEN: usize = 24;
/// Default overlap between consecutive windows.
pub const WINDOW_OVERLAP: usize = 4;

/// A labeled motion clip. Labels are raw indices; index 0 is neutral.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub id: String,
    pub skeleton: Arc<Skeleton>,
    pub frames: Vec<MotionFrame>,
    pub fps: f64,
    pub style: usize,
    pub content: usize,
}

impl MotionClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::Domain(format!(
                "clip {} has fps {}",
                self.id, self.fps
            )));
        }
        if self.frames.is_empty() {
            return Err(Error::Length(format!("clip {} has no frames", self.id)));
        }
        let j = self.skeleton.joint_count();
        for f in &self.frames {
            if f.joint_count() != j {
                return Err(Error::shape(format!(
                    "clip {}: frame with {} joints",
                    self.id,
                    f.joint_count()
                )));
            }
            f.validate()?;
        }
        Ok(())
    }
}

/// `T` consecutive frames of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionWindow {
    pub frames: Vec<MotionFrame>,
    pub style: usize,
    pub content: usize,
    pub source_id: String,
    pub start_index: usize,
}

impl MotionWindow {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, MotionFrame::joint_count)
    }
}

/// Keeps every `fps / target_fps`-th frame from index 0 and recomputes
/// velocities at the new rate.
pub fn downsample(clip: &MotionClip, target_fps: f64) -> Result<MotionClip> {
    let ratio = clip.fps / target_fps;
    let step = ratio.round();
    if !(target_fps > 0.0) || step < 1.0 || (ratio - step).abs() > 1e-6 * ratio {
        return Err(Error::UnsupportedRate {
            from: clip.fps,
            to: target_fps,
        });
    }
    let step = step as usize;
    if step == 1 {
        return Ok(clip.clone());
    }
    let mut frames: Vec<MotionFrame> = clip.frames.iter().step_by(step).cloned().collect();
    if frames.len() >= 2 {
        let positions: Vec<_> = frames.iter().map(|f| f.positions.clone()).collect();
        let velocities = finite_difference_velocities(&positions, target_fps)?;
        for (f, v) in frames.iter_mut().zip(velocities) {
            f.velocities = v;
        }
    } else {
        for f in &mut frames {
            f.velocities.iter_mut().for_each(|v| *v = [0.0; 3]);
        }
    }
    Ok(MotionClip {
        frames,
        fps: target_fps,
        ..clip.clone()
    })
}

/// Start indices of the windows of a clip of `len` frames.
pub fn window_starts(len: usize, window: usize, overlap: usize) -> Result<Vec<usize>> {
    if window == 0 || overlap >= window {
        return Err(Error::Range(format!(
            "window {window} must exceed overlap {overlap}"
        )));
    }
    if len < window {
        return Ok(Vec::new());
    }
    let stride = window - overlap;
    let mut starts: Vec<usize> = (0..=len - window).step_by(stride).collect();
    let last = len - window;
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    Ok(starts)
}

/// Splits a clip into windows of `window` frames with stride
/// `window - overlap`; a final window aligned to the clip end covers any
/// remainder. Clips shorter than `window` yield nothing.
pub fn window_clip(clip: &MotionClip, window: usize, overlap: usize) -> Result<Vec<MotionWindow>> {
    let starts = window_starts(clip.len(), window, overlap)?;
    if starts.is_empty() {
        warn!(
            "clip {} has {} frames (< {window}); skipped",
            clip.id,
            clip.len()
        );
    }
    Ok(starts
        .into_iter()
        .map(|start| MotionWindow {
            frames: clip.frames[start..start + window].to_vec(),
            style: clip.style,
            content: clip.content,
            source_id: clip.id.clone(),
            start_index: start,
        })
        .collect())
}

/// Windows of many clips plus the number of clips too short to window.
pub fn window_clips(
    clips: &[MotionClip],
    window: usize,
    overlap: usize,
) -> Result<(Vec<MotionWindow>, usize)> {
    let mut out = Vec::new();
    let mut short = 0;
    for clip in clips {
        let w = window_clip(clip, window, overlap)?;
        if w.is_empty() {
            short += 1;
        }
        out.extend(w);
    }
    Ok((out, short))
}

/// Clip-level random partition; each side keeps the input order.
pub fn split_dataset(
    clips: Vec<MotionClip>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<MotionClip>, Vec<MotionClip>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Range(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = clips.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut is_test = vec![false; n];
    for &i in &order[..n_test.min(n)] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = clips.into_iter().zip(is_test).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(c, _)| c).collect(),
        test.into_iter().map(|(c, _)| c).collect(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipLabels {
    pub style: usize,
    pub content: usize,
}

/// Sidecar label file: `{clip_id: {"style": int, "content": int}}`.
pub type LabelSidecar = BTreeMap<String, ClipLabels>;

pub fn read_label_sidecar(path: impl AsRef<Path>) -> Result<LabelSidecar> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Overrides clip labels from a sidecar; clips without an entry are untouched.
pub fn apply_labels(clips: &mut [MotionClip], labels: &LabelSidecar) {
    for clip in clips {
        if let Some(l) = labels.get(&clip.id) {
            clip.style = l.style;
            clip.content = l.content;
        }
    }
}
