//! Procedural gaits on a 13-joint humanoid.
//!
//! Content 0 is a walk cycle, content 1 a jump cycle (other indices
//! alternate between the two). Style parameters scale amplitudes and tempo
//! and set the trunk posture, which is enough to make styles separable from
//! mean joint angles.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::MotionClip;
use crate::motion::{MotionFrame, Quaternion, Skeleton, Vec3};
use crate::nn::seeded_rng;
use crate::{Error, Result};

pub const SYNTH_JOINTS: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthStyleParams {
    pub amplitude_scale: f64,
    pub frequency_scale: f64,
    /// Forward trunk pitch in radians (negative leans back).
    pub lean_angle: f64,
    pub arm_swing_scale: f64,
    pub bounce_scale: f64,
}

impl SynthStyleParams {
    pub fn neutral() -> Self {
        Self {
            amplitude_scale: 1.0,
            frequency_scale: 1.0,
            lean_angle: 0.0,
            arm_swing_scale: 1.0,
            bounce_scale: 1.0,
        }
    }

    /// Built-in style table; index 0 is neutral and indices past the table
    /// wrap around to its non-neutral entries.
    pub fn preset(style: usize) -> Self {
        const TABLE: [SynthStyleParams; 5] = [
            SynthStyleParams {
                amplitude_scale: 1.0,
                frequency_scale: 1.0,
                lean_angle: 0.0,
                arm_swing_scale: 1.0,
                bounce_scale: 1.0,
            },
            // proud
            SynthStyleParams {
                amplitude_scale: 1.15,
                frequency_scale: 1.0,
                lean_angle: -0.2,
                arm_swing_scale: 1.6,
                bounce_scale: 1.3,
            },
            // depressed
            SynthStyleParams {
                amplitude_scale: 0.6,
                frequency_scale: 1.0,
                lean_angle: 0.35,
                arm_swing_scale: 0.4,
                bounce_scale: 0.5,
            },
            // hurried
            SynthStyleParams {
                amplitude_scale: 1.3,
                frequency_scale: 1.4,
                lean_angle: 0.15,
                arm_swing_scale: 1.2,
                bounce_scale: 1.5,
            },
            // sneaky
            SynthStyleParams {
                amplitude_scale: 0.8,
                frequency_scale: 0.7,
                lean_angle: 0.25,
                arm_swing_scale: 0.6,
                bounce_scale: 0.3,
            },
        ];
        if style < TABLE.len() {
            TABLE[style]
        } else {
            TABLE[1 + (style - 1) % (TABLE.len() - 1)]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scales = [
            self.amplitude_scale,
            self.frequency_scale,
            self.arm_swing_scale,
            self.bounce_scale,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Domain(format!(
                "style scales must be positive: {self:?}"
            )));
        }
        if !(self.lean_angle.abs() < PI / 4.0) {
            return Err(Error::Domain(format!(
                "lean angle {} outside (-pi/4, pi/4)",
                self.lean_angle
            )));
        }
        Ok(())
    }
}

/// The 13-joint humanoid used by every synthetic clip (Y up, metres).
pub fn synth_skeleton() -> Skeleton {
    let joints: [(&str, Option<usize>, Vec3); SYNTH_JOINTS] = [
        ("hips", None, [0.0, 0.0, 0.0]),
        ("spine", Some(0), [0.0, 0.25, 0.0]),
        ("head", Some(1), [0.0, 0.3, 0.0]),
        ("l_hip", Some(0), [0.1, -0.05, 0.0]),
        ("l_knee", Some(3), [0.0, -0.42, 0.0]),
        ("l_ankle", Some(4), [0.0, -0.42, 0.0]),
        ("r_hip", Some(0), [-0.1, -0.05, 0.0]),
        ("r_knee", Some(6), [0.0, -0.42, 0.0]),
        ("r_ankle", Some(7), [0.0, -0.42, 0.0]),
        ("l_shoulder", Some(1), [0.18, 0.22, 0.0]),
        ("l_elbow", Some(9), [0.0, -0.28, 0.0]),
        ("r_shoulder", Some(1), [-0.18, 0.22, 0.0]),
        ("r_elbow", Some(11), [0.0, -0.28, 0.0]),
    ];
    let mut end_sites = vec![None; SYNTH_JOINTS];
    end_sites[2] = Some([0.0, 0.15, 0.0]);
    end_sites[5] = Some([0.0, -0.05, 0.12]);
    end_sites[8] = Some([0.0, -0.05, 0.12]);
    end_sites[10] = Some([0.0, -0.25, 0.0]);
    end_sites[12] = Some([0.0, -0.25, 0.0]);
    Skeleton::with_layout(
        joints.iter().map(|j| j.0.to_string()).collect(),
        joints.iter().map(|j| j.1).collect(),
        joints.iter().map(|j| j.2).collect(),
        vec![Default::default(); SYNTH_JOINTS],
        end_sites,
    )
    .expect("static skeleton is valid")
}

fn rx(a: f64) -> Quaternion {
    Quaternion::from_axis_angle([1.0, 0.0, 0.0], a)
}

fn ry(a: f64) -> Quaternion {
    Quaternion::from_axis_angle([0.0, 1.0, 0.0], a)
}

fn rz(a: f64) -> Quaternion {
    Quaternion::from_axis_angle([0.0, 0.0, 1.0], a)
}

struct Jitter {
    phase: f64,
    freq: f64,
    amp: f64,
}

fn walk_pose(p: &SynthStyleParams, j: &Jitter, t: f64) -> (Vec<Quaternion>, Vec3) {
    let a = p.amplitude_scale * j.amp;
    let arm = p.arm_swing_scale * j.amp;
    let bounce = p.bounce_scale;
    let freq = 1.0 * p.frequency_scale * j.freq;
    let phi = TAU * freq * t + j.phase;
    let leg = |ph: f64| {
        let hip = rx(-0.45 * a * ph.sin());
        let knee = rx(0.35 * a * (1.0 - (ph + 0.6).cos()));
        let ankle = rx(0.2 * a * (ph + 0.5).sin());
        (hip, knee, ankle)
    };
    let (lh, lk, la) = leg(phi);
    let (rh, rk, ra) = leg(phi + PI);
    let shoulder = |ph: f64, side: f64| rz(side * 0.1) * rx(0.35 * arm * ph.sin());
    let elbow = |ph: f64| rx(-(0.2 + 0.2 * arm * (1.0 + ph.sin()) / 2.0));
    let rotations = vec![
        ry(0.08 * a * phi.sin()) * rz(0.05 * bounce * phi.sin()),
        rx(p.lean_angle + 0.03 * a * (2.0 * phi).sin()),
        rx(0.05 * a * (2.0 * phi).sin()),
        lh,
        lk,
        la,
        rh,
        rk,
        ra,
        shoulder(phi, 1.0),
        elbow(phi),
        shoulder(phi + PI, -1.0),
        elbow(phi + PI),
    ];
    let root = [
        0.0,
        0.9 + 0.03 * bounce * (2.0 * phi).cos(),
        1.2 * freq * a * t,
    ];
    (rotations, root)
}

fn jump_pose(p: &SynthStyleParams, j: &Jitter, t: f64) -> (Vec<Quaternion>, Vec3) {
    let a = p.amplitude_scale * j.amp;
    let arm = p.arm_swing_scale * j.amp;
    let freq = 0.8 * p.frequency_scale * j.freq;
    let phi = TAU * freq * t + j.phase;
    let crouch = (1.0 - phi.cos()) / 2.0;
    let hip = rx(-0.7 * a * crouch);
    let knee = rx(1.2 * a * crouch);
    let ankle = rx(-0.5 * a * crouch);
    let shoulder = |side: f64| rz(side * 0.15) * rx(-1.2 * arm * phi.sin());
    let elbow = rx(-0.3 * arm);
    let rotations = vec![
        rx(0.1 * crouch),
        rx(p.lean_angle + 0.3 * a * crouch),
        rx(-0.1 * a * crouch),
        hip,
        knee,
        ankle,
        hip,
        knee,
        ankle,
        shoulder(1.0),
        elbow,
        shoulder(-1.0),
        elbow,
    ];
    let air = 0.3 * p.bounce_scale * (-phi.sin()).max(0.0);
    let root = [0.0, 0.9 - 0.2 * crouch + air, 0.0];
    (rotations, root)
}

/// One deterministic clip; the seed jitters phase, tempo and amplitude.
/// The returned clip is labeled `(style 0, content)`.
pub fn synth_gait(
    content: usize,
    params: &SynthStyleParams,
    length: usize,
    fps: f64,
    seed: u64,
) -> MotionClip {
    let mut rng = seeded_rng(seed);
    let jitter = Jitter {
        phase: rng.gen_range(0.0..TAU),
        freq: rng.gen_range(0.95..1.05),
        amp: rng.gen_range(0.95..1.05),
    };
    let skeleton = synth_skeleton();
    let (rotations, roots): (Vec<_>, Vec<_>) = (0..length)
        .map(|i| {
            let t = i as f64 / fps;
            if content % 2 == 0 {
                walk_pose(params, &jitter, t)
            } else {
                jump_pose(params, &jitter, t)
            }
        })
        .unzip();
    let frames = MotionFrame::sequence_from_pose_track(&skeleton, &rotations, &roots, fps)
        .expect("synthetic tracks match the skeleton");
    MotionClip {
        id: format!("synth-c{content}-{seed}"),
        skeleton: Arc::new(skeleton),
        frames,
        fps,
        style: 0,
        content,
    }
}

/// Layout of a synthetic dataset: every (style, content) pair gets
/// `clips_per_pair` clips using the preset style table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetConfig {
    pub styles: usize,
    pub contents: usize,
    pub clips_per_pair: usize,
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        Self {
            styles: 3,
            contents: 2,
            clips_per_pair: 25,
            frames: 104,
            fps: 60.0,
            seed: 0,
        }
    }
}

pub fn synth_dataset(config: &SynthDatasetConfig) -> Vec<MotionClip> {
    let mut clips = Vec::with_capacity(config.styles * config.contents * config.clips_per_pair);
    for style in 0..config.styles {
        let params = SynthStyleParams::preset(style);
        for content in 0..config.contents {
            for k in 0..config.clips_per_pair {
                let seed = config.seed.wrapping_mul(1_000_003).wrapping_add(
                    ((style * config.contents + content) * config.clips_per_pair + k) as u64,
                );
                let mut clip = synth_gait(content, &params, config.frames, config.fps, seed);
                clip.id = format!("synth-s{style}-c{content}-{k}");
                clip.style = style;
                clip.content = content;
                clips.push(clip);
            }
        }
    }
    clips
}
