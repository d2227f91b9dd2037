//! BVH round trips on generated files and the malformed-file table.

use rand::seq::SliceRandom;
use rand::Rng;
use std::sync::Arc;
use style_erd::io::{parse_bvh, write_bvh, MotionClip};
use style_erd::motion::{Axis, EulerOrder, MotionFrame, Quaternion, Skeleton};
use style_erd::nn::seeded_rng;
use style_erd::Error;

use super::Check;

pub const ROUND_TRIP_TOL: f64 = 1e-5;

/// A random skeleton (random tree, offsets, Euler orders, end sites) with a
/// random motion, serialized to BVH text.
pub fn generated_bvh(seed: u64) -> String {
    let mut rng = seeded_rng(seed);
    let joints = rng.gen_range(2..9);
    let orders = [
        [Axis::Z, Axis::X, Axis::Y],
        [Axis::X, Axis::Y, Axis::Z],
        [Axis::Y, Axis::X, Axis::Z],
        [Axis::Z, Axis::Y, Axis::X],
    ];
    let skeleton = Skeleton::with_layout(
        (0..joints).map(|j| format!("j{j}")).collect(),
        (0..joints)
            .map(|j| {
                if j == 0 {
                    None
                } else {
                    Some(rng.gen_range(0..j))
                }
            })
            .collect(),
        (0..joints)
            .map(|j| {
                if j == 0 {
                    [0.0; 3]
                } else {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.1..2.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                }
            })
            .collect(),
        (0..joints)
            .map(|_| {
                EulerOrder::new(*orders.choose(&mut rng).expect("non-empty"))
                    .expect("distinct axes")
            })
            .collect(),
        (0..joints)
            .map(|_| {
                rng.gen_bool(0.5)
                    .then(|| [0.0, rng.gen_range(0.1..0.5), 0.0])
            })
            .collect(),
    )
    .expect("valid skeleton");
    let fps = *[30.0, 60.0, 120.0].choose(&mut rng).expect("non-empty");
    let frames = rng.gen_range(1..40);
    let rotations: Vec<Vec<Quaternion>> = (0..frames)
        .map(|_| {
            (0..joints)
                .map(|_| {
                    let axis = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ];
                    Quaternion::from_axis_angle(axis, rng.gen_range(-3.0..3.0))
                })
                .collect()
        })
        .collect();
    let roots: Vec<[f64; 3]> = (0..frames)
        .map(|_| {
            [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(-5.0..5.0),
            ]
        })
        .collect();
    let clip = MotionClip {
        id: format!("gen{seed}"),
        frames: MotionFrame::sequence_from_pose_track(&skeleton, &rotations, &roots, fps)
            .expect("valid track"),
        skeleton: Arc::new(skeleton),
        fps,
        style: 0,
        content: 0,
    };
    write_bvh(&clip)
}

fn max_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest field difference between two parsed clips, or a structural
/// mismatch.
pub fn clip_difference(a: &MotionClip, b: &MotionClip) -> Result<f64, String> {
    let (sa, sb) = (&a.skeleton, &b.skeleton);
    if sa.names() != sb.names()
        || sa.parents() != sb.parents()
        || sa.euler_orders() != sb.euler_orders()
    {
        return Err("skeleton structure changed".into());
    }
    if a.len() != b.len() {
        return Err(format!("frame count {} vs {}", a.len(), b.len()));
    }
    let mut worst = (a.fps - b.fps).abs();
    worst = worst.max(max_diff(
        sa.offsets().iter().flatten().copied(),
        sb.offsets().iter().flatten().copied(),
    ));
    for (x, y) in sa.end_sites().iter().zip(sb.end_sites()) {
        match (x, y) {
            (Some(x), Some(y)) => worst = worst.max(max_diff(*x, *y)),
            (None, None) => {}
            _ => return Err("end site presence changed".into()),
        }
    }
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for (qa, qb) in fa.rotations.iter().zip(&fb.rotations) {
            // q and -q are the same rotation.
            let plus = max_diff(qa.to_array(), qb.to_array());
            let minus = max_diff(qa.to_array(), qb.to_array().map(|v| -v));
            worst = worst.max(plus.min(minus));
        }
        worst = worst.max(max_diff(
            fa.positions.iter().flatten().copied(),
            fb.positions.iter().flatten().copied(),
        ));
        worst = worst.max(max_diff(
            fa.velocities.iter().flatten().copied(),
            fb.velocities.iter().flatten().copied(),
        ));
        worst = worst.max(max_diff(fa.root_translation, fb.root_translation));
    }
    Ok(worst)
}

pub fn round_trips(count: u64) -> Check {
    let mut worst = 0.0f64;
    for seed in 0..count {
        let text = generated_bvh(seed);
        let a = parse_bvh(&text).map_err(|e| format!("file {seed}: {e}"))?;
        let b = parse_bvh(&write_bvh(&a)).map_err(|e| format!("file {seed} reparse: {e}"))?;
        let d = clip_difference(&a, &b).map_err(|e| format!("file {seed}: {e}"))?;
        if d > ROUND_TRIP_TOL {
            return Err(format!(
                "file {seed}: field difference {d:e} exceeds {ROUND_TRIP_TOL:e}"
            ));
        }
        worst = worst.max(d);
    }
    Ok(format!(
        "{count} generated files, worst field difference {worst:.2e}"
    ))
}

const BASE: &str = "HIERARCHY
ROOT hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT chest
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
  }
}
MOTION
Frames: 10
Frame Time: 0.0166667
";

fn base_with_rows(rows: usize) -> String {
    let mut s = BASE.to_string();
    for i in 0..rows {
        s.push_str(&format!("0 {i} 0 1 2 3 4 5 6\n"));
    }
    s
}

/// `(name, text, expected line, expected message fragment)`.
pub fn malformed_cases() -> Vec<(&'static str, String, usize, &'static str)> {
    let good = base_with_rows(10);
    vec![
        (
            "malformed header",
            good.replace("HIERARCHY", "HIERARCHIES"),
            1,
            "malformed header",
        ),
        (
            "declared channel count",
            good.replace(
                "CHANNELS 3 Zrotation Xrotation Yrotation",
                "CHANNELS 2 Zrotation Xrotation",
            ),
            9,
            "declares 2 channels",
        ),
        (
            "motion row channel-count mismatch",
            good.replacen("0 3 0 1 2 3 4 5 6\n", "0 3 0 1 2 3 4 5\n", 1),
            18,
            "channel-count mismatch",
        ),
        (
            "frame-count mismatch",
            base_with_rows(9),
            12,
            "MOTION section declares 10 frames but 9 rows",
        ),
        (
            "bad frame count line",
            good.replace("Frames: 10", "Frames: ten"),
            13,
            "expected `Frames: <count>`",
        ),
    ]
}

pub fn malformed() -> Vec<Check> {
    malformed_cases()
        .into_iter()
        .map(|(name, text, line, fragment)| match parse_bvh(&text) {
            Err(Error::Parse { line: l, message }) if l == line && message.contains(fragment) => {
                Ok(format!("{name}: line {l}: {message}"))
            }
            Err(e) => Err(format!(
                "{name}: unexpected error `{e}` (want line {line}, `{fragment}`)"
            )),
            Ok(_) => Err(format!("{name}: parsed without error")),
        })
        .collect()
}
