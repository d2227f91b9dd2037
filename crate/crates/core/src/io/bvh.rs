//! A BVH subset: one root with six channels, three rotation channels on
//! every other joint, optional `End Site` blocks. Angles are degrees.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::dataset::MotionClip;
use crate::motion::{Axis, EulerOrder, MotionFrame, Quaternion, Skeleton, Vec3};
use crate::{Error, Result};

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

struct Cursor<'a> {
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let tok = self.tokens.get(self.pos).copied().ok_or_else(|| {
            perr(
                self.last_line,
                format!("unexpected end of hierarchy, expected {what}"),
            )
        })?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, keyword: &str) -> Result<usize> {
        let (line, tok) = self.next(keyword)?;
        if tok != keyword {
            return Err(perr(line, format!("expected `{keyword}`, found `{tok}`")));
        }
        Ok(line)
    }

    fn number(&mut self, what: &str) -> Result<f64> {
        let (line, tok) = self.next(what)?;
        let v: f64 = tok
            .parse()
            .map_err(|_| perr(line, format!("invalid number `{tok}` for {what}")))?;
        if !v.is_finite() {
            return Err(perr(line, format!("non-finite {what}")));
        }
        Ok(v)
    }

    fn vec3(&mut self, what: &str) -> Result<Vec3> {
        Ok([self.number(what)?, self.number(what)?, self.number(what)?])
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Channel {
    Position(usize),
    Rotation(Axis),
}

fn parse_channel(line: usize, tok: &str) -> Result<Channel> {
    Ok(match tok {
        "Xposition" => Channel::Position(0),
        "Yposition" => Channel::Position(1),
        "Zposition" => Channel::Position(2),
        "Xrotation" => Channel::Rotation(Axis::X),
        "Yrotation" => Channel::Rotation(Axis::Y),
        "Zrotation" => Channel::Rotation(Axis::Z),
        _ => return Err(perr(line, format!("unknown channel `{tok}`"))),
    })
}

struct JointDecl {
    name: String,
    parent: Option<usize>,
    offset: Vec3,
    channels: Vec<Channel>,
    order: EulerOrder,
    end_site: Option<Vec3>,
}

fn parse_joint(
    cur: &mut Cursor<'_>,
    joints: &mut Vec<JointDecl>,
    parent: Option<usize>,
) -> Result<()> {
    let (line, name) = cur.next("joint name")?;
    if name == "{" {
        return Err(perr(line, "missing joint name"));
    }
    cur.expect("{")?;
    cur.expect("OFFSET")?;
    let offset = cur.vec3("OFFSET")?;
    let chan_line = cur.expect("CHANNELS")?;
    let count = cur.number("channel count")?;
    if count.fract() != 0.0 || count < 0.0 {
        return Err(perr(chan_line, format!("invalid channel count {count}")));
    }
    let count = count as usize;
    let mut channels = Vec::with_capacity(count);
    for _ in 0..count {
        let (l, tok) = cur.next("channel name")?;
        channels.push(parse_channel(l, tok)?);
    }
    let rotations: Vec<Axis> = channels
        .iter()
        .filter_map(|c| match c {
            Channel::Rotation(a) => Some(*a),
            _ => None,
        })
        .collect();
    let positions = channels.len() - rotations.len();
    let expected_positions = if parent.is_none() { 3 } else { 0 };
    if rotations.len() != 3 || positions != expected_positions {
        let want = if parent.is_none() {
            "6 channels (3 position, 3 rotation)"
        } else {
            "3 rotation channels"
        };
        return Err(perr(
            chan_line,
            format!("joint `{name}` declares {count} channels; expected {want}"),
        ));
    }
    let mut seen = [false; 3];
    for c in &channels {
        if let Channel::Position(i) = c {
            if std::mem::replace(&mut seen[*i], true) {
                return Err(perr(
                    chan_line,
                    format!("joint `{name}` repeats a position channel"),
                ));
            }
        }
    }
    let order = EulerOrder::new([rotations[0], rotations[1], rotations[2]])
        .ok_or_else(|| perr(chan_line, format!("joint `{name}` repeats a rotation axis")))?;
    let index = joints.len();
    joints.push(JointDecl {
        name: name.to_string(),
        parent,
        offset,
        channels,
        order,
        end_site: None,
    });
    loop {
        let (line, tok) = cur.next("`JOINT`, `End Site` or `}`")?;
        match tok {
            "}" => return Ok(()),
            "JOINT" => parse_joint(cur, joints, Some(index))?,
            "End" => {
                cur.expect("Site")?;
                cur.expect("{")?;
                cur.expect("OFFSET")?;
                let site = cur.vec3("End Site OFFSET")?;
                cur.expect("}")?;
                if joints[index].end_site.replace(site).is_some() {
                    return Err(perr(
                        line,
                        format!("joint `{}` has two end sites", joints[index].name),
                    ));
                }
            }
            _ => {
                return Err(perr(
                    line,
                    format!("unexpected `{tok}` in joint `{}`", joints[index].name),
                ))
            }
        }
    }
}

/// Parses a BVH document. The clip is labeled neutral / content 0 with id
/// `"bvh"`; see [`read_bvh`] for file-based ids.
pub fn parse_bvh(text: &str) -> Result<MotionClip> {
    let lines: Vec<&str> = text.lines().collect();
    let motion_at = lines
        .iter()
        .position(|l| l.trim() == "MOTION")
        .ok_or_else(|| perr(lines.len().max(1), "missing MOTION section"))?;
    let mut tokens = Vec::new();
    for (i, line) in lines[..motion_at].iter().enumerate() {
        for tok in line.split_whitespace() {
            // Braces glued to names (`hips{`) are tolerated.
            let mut rest = tok;
            while !rest.is_empty() {
                if let Some(stripped) = rest.strip_prefix(['{', '}']) {
                    tokens.push((i + 1, &rest[..1]));
                    rest = stripped;
                } else {
                    let end = rest.find(['{', '}']).unwrap_or(rest.len());
                    tokens.push((i + 1, &rest[..end]));
                    rest = &rest[end..];
                }
            }
        }
    }
    let mut cur = Cursor {
        tokens,
        pos: 0,
        last_line: motion_at.max(1),
    };
    let (line, first) = cur.next("HIERARCHY")?;
    if first != "HIERARCHY" {
        return Err(perr(
            line,
            format!("malformed header: expected `HIERARCHY`, found `{first}`"),
        ));
    }
    cur.expect("ROOT")?;
    let mut joints = Vec::new();
    parse_joint(&mut cur, &mut joints, None)?;
    if let Some(&(line, tok)) = cur.tokens.get(cur.pos) {
        return Err(perr(
            line,
            format!("unexpected `{tok}` after the root joint (one root supported)"),
        ));
    }
    if joints.len() < 2 {
        return Err(perr(1, "skeleton needs at least 2 joints"));
    }

    let motion_line = motion_at + 1;
    let mut rest = lines[motion_at + 1..]
        .iter()
        .enumerate()
        .map(|(i, l)| (motion_at + 2 + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (frames_line, frames_text) = rest
        .next()
        .ok_or_else(|| perr(motion_line, "MOTION section is missing `Frames:`"))?;
    let declared: usize = frames_text
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| {
            perr(
                frames_line,
                format!("expected `Frames: <count>`, found `{frames_text}`"),
            )
        })?;
    let (time_line, time_text) = rest
        .next()
        .ok_or_else(|| perr(motion_line, "MOTION section is missing `Frame Time:`"))?;
    let frame_time: f64 = time_text
        .strip_prefix("Frame Time:")
        .and_then(|v| v.trim().parse().ok())
        .filter(|v: &f64| v.is_finite() && *v > 0.0)
        .ok_or_else(|| {
            perr(
                time_line,
                format!("expected `Frame Time: <seconds>`, found `{time_text}`"),
            )
        })?;
    if declared == 0 {
        return Err(perr(frames_line, "MOTION section declares 0 frames"));
    }

    let width: usize = joints.iter().map(|j| j.channels.len()).sum();
    let mut rotations = Vec::with_capacity(declared);
    let mut roots = Vec::with_capacity(declared);
    let mut rows = 0;
    for (line, row) in rest {
        rows += 1;
        if rows > declared {
            continue;
        }
        let values = row
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(line, format!("invalid motion value `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != width {
            return Err(perr(
                line,
                format!(
                    "channel-count mismatch: expected {width} values, found {}",
                    values.len()
                ),
            ));
        }
        let mut it = values.into_iter();
        let mut root = [0.0; 3];
        let mut pose = Vec::with_capacity(joints.len());
        for j in &joints {
            let mut angles = [0.0; 3];
            let mut k = 0;
            for c in &j.channels {
                let v = it.next().expect("row width checked");
                match c {
                    Channel::Position(i) => root[*i] = v,
                    Channel::Rotation(_) => {
                        angles[k] = v.to_radians();
                        k += 1;
                    }
                }
            }
            pose.push(j.order.to_quaternion(angles));
        }
        rotations.push(pose);
        roots.push(root);
    }
    if rows != declared {
        return Err(perr(
            motion_line,
            format!("MOTION section declares {declared} frames but {rows} rows follow"),
        ));
    }

    let skeleton = Skeleton::with_layout(
        joints.iter().map(|j| j.name.clone()).collect(),
        joints.iter().map(|j| j.parent).collect(),
        joints.iter().map(|j| j.offset).collect(),
        joints.iter().map(|j| j.order).collect(),
        joints.iter().map(|j| j.end_site).collect(),
    )
    .map_err(|e| perr(1, e.to_string()))?;
    let fps = 1.0 / frame_time;
    let frames = MotionFrame::sequence_from_pose_track(&skeleton, &rotations, &roots, fps)?;
    Ok(MotionClip {
        id: "bvh".into(),
        skeleton: Arc::new(skeleton),
        frames,
        fps,
        style: 0,
        content: 0,
    })
}

/// Reads and parses a BVH file; the clip id is the file stem.
pub fn read_bvh(path: impl AsRef<Path>) -> Result<MotionClip> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut clip = parse_bvh(&text)?;
    if let Some(stem) = path.file_stem() {
        clip.id = stem.to_string_lossy().into_owned();
    }
    Ok(clip)
}

fn depth_first(skeleton: &Skeleton) -> Vec<usize> {
    let mut order = Vec::with_capacity(skeleton.joint_count());
    let mut stack = vec![0];
    while let Some(j) = stack.pop() {
        order.push(j);
        let mut children: Vec<usize> = skeleton.children(j).collect();
        children.reverse();
        stack.extend(children);
    }
    order
}

fn fmt3(v: Vec3) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

/// Serializes a clip. Joints are emitted depth-first, so a skeleton whose
/// indices are not already depth-first is renumbered on the next parse.
pub fn write_bvh(clip: &MotionClip) -> String {
    let skel = &clip.skeleton;
    let order = depth_first(skel);
    let mut out = String::from("HIERARCHY\n");
    let mut depth_of = vec![0usize; skel.joint_count()];
    let mut open: Vec<usize> = Vec::new();
    let close_until =
        |out: &mut String, open: &mut Vec<usize>, parent: Option<usize>, depth_of: &[usize]| {
            while let Some(&top) = open.last() {
                if Some(top) == parent {
                    break;
                }
                open.pop();
                let _ = writeln!(out, "{}}}", "  ".repeat(depth_of[top]));
            }
        };
    for &j in &order {
        let parent = skel.parent(j);
        close_until(&mut out, &mut open, parent, &depth_of);
        let depth = parent.map_or(0, |p| depth_of[p] + 1);
        depth_of[j] = depth;
        let pad = "  ".repeat(depth);
        let kw = if parent.is_none() { "ROOT" } else { "JOINT" };
        let euler = skel.euler_orders()[j];
        let rot: Vec<String> = euler
            .0
            .iter()
            .map(|a| format!("{}rotation", a.letter()))
            .collect();
        let _ = writeln!(out, "{pad}{kw} {}", skel.names()[j]);
        let _ = writeln!(out, "{pad}{{");
        let _ = writeln!(out, "{pad}  OFFSET {}", fmt3(skel.offsets()[j]));
        if parent.is_none() {
            let _ = writeln!(
                out,
                "{pad}  CHANNELS 6 Xposition Yposition Zposition {}",
                rot.join(" ")
            );
        } else {
            let _ = writeln!(out, "{pad}  CHANNELS 3 {}", rot.join(" "));
        }
        if let Some(site) = skel.end_sites()[j] {
            let _ = writeln!(
                out,
                "{pad}  End Site\n{pad}  {{\n{pad}    OFFSET {}\n{pad}  }}",
                fmt3(site)
            );
        }
        open.push(j);
    }
    close_until(&mut out, &mut open, None, &depth_of);
    let _ = writeln!(
        out,
        "MOTION\nFrames: {}\nFrame Time: {}",
        clip.len(),
        1.0 / clip.fps
    );
    for frame in &clip.frames {
        let mut row: Vec<String> = frame
            .root_translation
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect();
        for &j in &order {
            let q: Quaternion = frame.rotations[j];
            let angles = skel.euler_orders()[j].from_quaternion(q);
            row.extend(angles.iter().map(|a| format!("{:.6}", a.to_degrees())));
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_bvh_file(path: impl AsRef<Path>, clip: &MotionClip) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_bvh(clip)).map_err(|e| Error::io(path, e))
}
