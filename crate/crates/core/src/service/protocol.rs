use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::model::{Generator, ModelConfig, StreamSession, TargetSpec};
use crate::motion::{forward_kinematics, root_relative, MotionFrame, Quaternion, Vec3};
use crate::{Error, Result};

/// Frame rate assumed for velocities when the hello does not name one.
pub const DEFAULT_FPS: f64 = 60.0;

/// Rounds to 9 significant digits, the precision used on the wire.
pub fn wire_float(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { 0.0 } else { v };
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn wire_vec(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| json!(wire_float(x))).collect())
}

/// Builds network features one frame at a time: FK positions made
/// root-relative and backward-difference velocities. The first frame of a
/// stream has zero velocity since no earlier frame exists.
#[derive(Clone, Debug)]
pub struct OnlineFeatureBuilder {
    fps: f64,
    previous: Option<Vec<Vec3>>,
}

impl OnlineFeatureBuilder {
    pub fn new(fps: f64) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Range(format!(
                "stream frame rate {fps} must be positive"
            )));
        }
        Ok(Self {
            fps,
            previous: None,
        })
    }

    pub fn push(
        &mut self,
        skeleton: &crate::motion::Skeleton,
        rotations: &[Quaternion],
        root: Vec3,
    ) -> Result<MotionFrame> {
        let rotations: Vec<Quaternion> = rotations
            .iter()
            .map(|q| q.ensure_unit().map(|q| q.normalized().canonical()))
            .collect::<Result<_>>()?;
        let positions = root_relative(&forward_kinematics(skeleton, &rotations, [0.0; 3])?);
        let velocities = match &self.previous {
            Some(prev) => positions
                .iter()
                .zip(prev)
                .map(|(a, b)| {
                    [
                        (a[0] - b[0]) * self.fps,
                        (a[1] - b[1]) * self.fps,
                        (a[2] - b[2]) * self.fps,
                    ]
                })
                .collect(),
            None => vec![[0.0; 3]; positions.len()],
        };
        self.previous = Some(positions.clone());
        Ok(MotionFrame {
            rotations,
            positions,
            velocities,
            root_translation: root,
        })
    }

    /// The features a stream of these rotation frames would produce.
    pub fn build_sequence(
        skeleton: &crate::motion::Skeleton,
        rotations: &[Vec<Quaternion>],
        roots: &[Vec3],
        fps: f64,
    ) -> Result<Vec<MotionFrame>> {
        if rotations.len() != roots.len() {
            return Err(Error::Length(
                "rotation and root tracks differ in length".into(),
            ));
        }
        let mut b = Self::new(fps)?;
        rotations
            .iter()
            .zip(roots)
            .map(|(r, root)| b.push(skeleton, r, *root))
            .collect()
    }
}

/// Control fields currently in force.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Steering {
    target_style: usize,
    second_style: Option<usize>,
    alpha: Option<f64>,
}

impl Steering {
    /// Single style at full strength; `alpha` alone scales over neutral;
    /// `alpha` with a second style blends the two.
    fn target(&self) -> TargetSpec {
        match (self.second_style, self.alpha) {
            (None, None) => TargetSpec::style(self.target_style),
            (None, Some(alpha)) => TargetSpec::Scaled {
                style: self.target_style,
                alpha,
            },
            (Some(second), alpha) => TargetSpec::Blend {
                first: self.target_style,
                second,
                alpha: alpha.unwrap_or(1.0),
            },
        }
    }
}

#[derive(Debug, Serialize)]
struct HelloEcho<'a> {
    kind: &'static str,
    config: &'a ModelConfig,
    styles: usize,
    contents: usize,
    joint_names: &'a [String],
    source_style: usize,
    content: usize,
    target: TargetSpec,
    fps: f64,
}

struct Open {
    session: StreamSession,
    steering: Steering,
    features: OnlineFeatureBuilder,
    last_index: Option<u64>,
    stats: bool,
}

/// The per-connection protocol state machine. Feed it one line at a time
/// and write back every returned line.
pub struct ProtocolSession<'m> {
    generator: &'m Generator,
    open: Option<Open>,
    closed: bool,
    frames: u64,
}

fn error_line(code: &str, message: &str, frame_index: Option<u64>, closed: bool) -> String {
    let mut m = Map::new();
    m.insert("kind".into(), json!("error"));
    m.insert("code".into(), json!(code));
    m.insert("message".into(), json!(message));
    if let Some(i) = frame_index {
        m.insert("frame_index".into(), json!(i));
    }
    m.insert("closed".into(), json!(closed));
    Value::Object(m).to_string()
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Range(_) => "range",
        Error::Domain(_) => "domain",
        Error::Shape(_) | Error::Length(_) => "shape",
        Error::Lifecycle(_) => "lifecycle",
        _ => "protocol",
    }
}

fn get_usize(obj: &Map<String, Value>, key: &str) -> Result<Option<usize>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| Error::Protocol(format!("`{key}` must be a non-negative integer"))),
    }
}

fn get_f64(obj: &Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::Protocol(format!("`{key}` must be a number"))),
    }
}

fn get_vec3(v: &Value, what: &str) -> Result<[f64; 3]> {
    let a = v
        .as_array()
        .filter(|a| a.len() == 3)
        .ok_or_else(|| Error::Protocol(format!("{what} must be 3 numbers")))?;
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(a) {
        *o = x
            .as_f64()
            .ok_or_else(|| Error::Protocol(format!("{what} must be 3 numbers")))?;
    }
    Ok(out)
}

fn get_rotations(obj: &Map<String, Value>, joints: usize) -> Result<Vec<Quaternion>> {
    let a = obj
        .get("rotations")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Protocol("frame needs `rotations`".into()))?;
    if a.len() != joints {
        return Err(Error::Protocol(format!(
            "frame has {} rotations, model has {joints} joints",
            a.len()
        )));
    }
    a.iter()
        .map(|q| {
            let q = q.as_array().filter(|q| q.len() == 4).ok_or_else(|| {
                Error::Protocol("a rotation must be 4 numbers (w, x, y, z)".into())
            })?;
            let mut c = [0.0; 4];
            for (o, x) in c.iter_mut().zip(q) {
                *o = x
                    .as_f64()
                    .ok_or_else(|| Error::Protocol("a rotation must be 4 numbers".into()))?;
            }
            Ok(Quaternion::from_array(c))
        })
        .collect()
}

impl<'m> ProtocolSession<'m> {
    pub fn new(generator: &'m Generator) -> Self {
        Self {
            generator,
            open: None,
            closed: false,
            frames: 0,
        }
    }

    /// True once a protocol violation has closed the session.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames
    }

    fn fail(&mut self, message: &str, frame_index: Option<u64>) -> Vec<String> {
        self.closed = true;
        if let Some(o) = self.open.as_mut() {
            o.session.close();
        }
        vec![error_line("protocol", message, frame_index, true)]
    }

    /// Handles one inbound line and returns the outbound lines.
    pub fn handle_line(&mut self, line: &str) -> Vec<String> {
        if self.closed {
            return vec![error_line("lifecycle", "session is closed", None, true)];
        }
        let line = line.trim();
        if line.is_empty() {
            return Vec::new();
        }
        let obj = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(o)) => o,
            Ok(_) => return self.fail("message must be a JSON object", None),
            Err(e) => return self.fail(&format!("malformed JSON: {e}"), None),
        };
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        match kind.as_str() {
            "hello" => self.hello(&obj),
            "frame" => self.frame(&obj),
            "control" => self.control(&obj),
            "" => self.fail("message has no `kind`", None),
            other => self.fail(&format!("unexpected message kind `{other}`"), None),
        }
    }

    fn hello(&mut self, obj: &Map<String, Value>) -> Vec<String> {
        if self.open.is_some() {
            return self.fail("second hello on an open session", None);
        }
        let parsed = (|| -> Result<(usize, usize, Steering, f64, bool)> {
            let source = get_usize(obj, "source_style")?
                .ok_or_else(|| Error::Protocol("hello needs `source_style`".into()))?;
            let content = get_usize(obj, "content")?
                .ok_or_else(|| Error::Protocol("hello needs `content`".into()))?;
            let target_style = get_usize(obj, "target_style")?
                .ok_or_else(|| Error::Protocol("hello needs `target_style`".into()))?;
            let steering = Steering {
                target_style,
                second_style: get_usize(obj, "second_style")?,
                alpha: get_f64(obj, "alpha")?,
            };
            let fps = get_f64(obj, "fps")?.unwrap_or(DEFAULT_FPS);
            let stats = obj.get("stats").and_then(Value::as_bool).unwrap_or(false);
            Ok((source, content, steering, fps, stats))
        })();
        let (source, content, steering, fps, stats) = match parsed {
            Ok(p) => p,
            Err(e) => return self.fail(&e.to_string(), None),
        };
        let opened = OnlineFeatureBuilder::new(fps).and_then(|features| {
            Ok((
                self.generator
                    .open_session(source, content, steering.target())?,
                features,
            ))
        });
        let (session, features) = match opened {
            Ok(s) => s,
            // Labels are checked before anything is opened, so an unknown
            // style leaves the connection waiting for a corrected hello.
            Err(e) => return vec![error_line(error_code(&e), &e.to_string(), None, false)],
        };
        let g = self.generator;
        let echo = HelloEcho {
            kind: "hello",
            config: g.config(),
            styles: g.config().styles,
            contents: g.config().contents,
            joint_names: g.skeleton().names(),
            source_style: source,
            content,
            target: session.target(),
            fps,
        };
        self.open = Some(Open {
            session,
            steering,
            features,
            last_index: None,
            stats,
        });
        vec![serde_json::to_string(&echo).expect("hello echo serializes")]
    }

    fn control(&mut self, obj: &Map<String, Value>) -> Vec<String> {
        if self.open.is_none() {
            return self.fail("control before hello", None);
        }
        let parsed = (|| -> Result<Steering> {
            let o = self.open.as_ref().expect("checked");
            let mut s = o.steering;
            if let Some(t) = get_usize(obj, "target_style")? {
                s.target_style = t;
            }
            match obj.get("second_style") {
                None => {}
                Some(Value::Null) => s.second_style = None,
                Some(_) => s.second_style = get_usize(obj, "second_style")?,
            }
            match obj.get("alpha") {
                None => {}
                Some(Value::Null) => s.alpha = None,
                Some(_) => s.alpha = get_f64(obj, "alpha")?,
            }
            Ok(s)
        })();
        let steering = match parsed {
            Ok(s) => s,
            Err(e) => return self.fail(&e.to_string(), None),
        };
        let g = self.generator;
        let o = self.open.as_mut().expect("checked");
        match g.set_target(&mut o.session, steering.target()) {
            Ok(()) => {
                o.steering = steering;
                Vec::new()
            }
            Err(e) => vec![error_line(error_code(&e), &e.to_string(), None, false)],
        }
    }

    fn frame(&mut self, obj: &Map<String, Value>) -> Vec<String> {
        if self.open.is_none() {
            return self.fail("frame before hello", None);
        }
        let index = match obj.get("frame_index").and_then(Value::as_u64) {
            Some(i) => i,
            None => return self.fail("frame needs a non-negative integer `frame_index`", None),
        };
        let last = self.open.as_ref().expect("checked").last_index;
        if last.is_some_and(|l| index <= l) {
            return self.fail(
                &format!(
                    "frame_index {index} does not increase (last {})",
                    last.expect("some")
                ),
                Some(index),
            );
        }
        let joints = self.generator.config().joints;
        let parsed = get_rotations(obj, joints).and_then(|r| {
            let root = match obj.get("root") {
                Some(v) => get_vec3(v, "root")?,
                None => [0.0; 3],
            };
            Ok((r, root))
        });
        let (rotations, root) = match parsed {
            Ok(p) => p,
            Err(e) => return self.fail(&e.to_string(), Some(index)),
        };
        let g = self.generator;
        let o = self.open.as_mut().expect("checked");
        o.last_index = Some(index);
        let started = Instant::now();
        let result = o
            .features
            .push(g.skeleton(), &rotations, root)
            .and_then(|frame| g.transfer_frame(&mut o.session, &frame));
        let elapsed = started.elapsed();
        match result {
            Ok(out) => {
                self.frames += 1;
                let mut lines = vec![frame_out_line(index, &out)];
                if o.stats {
                    lines.push(
                        json!({
                            "kind": "stats",
                            "frame_index": index,
                            "latency_us": elapsed.as_secs_f64() * 1e6,
                        })
                        .to_string(),
                    );
                }
                lines
            }
            Err(e) => vec![error_line(
                error_code(&e),
                &e.to_string(),
                Some(index),
                false,
            )],
        }
    }
}

fn frame_out_line(index: u64, frame: &MotionFrame) -> String {
    let rotations: Vec<Value> = frame
        .rotations
        .iter()
        .map(|q| wire_vec(&q.to_array()))
        .collect();
    let positions: Vec<Value> = frame.positions.iter().map(|p| wire_vec(p)).collect();
    json!({
        "kind": "frame_out",
        "frame_index": index,
        "rotations": rotations,
        "positions": positions,
        "root": wire_vec(&frame.root_translation),
    })
    .to_string()
}

/// A `frame` message for a rotation frame.
pub fn frame_message(index: u64, rotations: &[Quaternion], root: Vec3) -> String {
    let rotations: Vec<Value> = rotations.iter().map(|q| wire_vec(&q.to_array())).collect();
    json!({ "kind": "frame", "frame_index": index, "rotations": rotations, "root": wire_vec(&root) }).to_string()
}
