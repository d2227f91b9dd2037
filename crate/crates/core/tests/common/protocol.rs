//! The scripted stream conversation.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::Value;
use style_erd::io::{synth_gait, synth_skeleton, SynthStyleParams};
use style_erd::model::{Generator, ModelConfig};
use style_erd::service::{frame_message, run_session};

use super::Check;

pub fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_conversation.ndjson")
}

/// Hello, 24 frames, a style switch after frame 7, an out-of-range alpha
/// after frame 11 and a valid alpha change after frame 15.
pub fn golden_conversation() -> String {
    let clip = synth_gait(0, &SynthStyleParams::neutral(), 24, 60.0, 5);
    let mut lines =
        vec![r#"{"kind":"hello","source_style":0,"content":0,"target_style":1}"#.to_string()];
    for (i, f) in clip.frames.iter().enumerate() {
        lines.push(frame_message(i as u64, &f.rotations, f.root_translation));
        match i {
            7 => lines.push(r#"{"kind":"control","target_style":2}"#.into()),
            11 => lines.push(r#"{"kind":"control","alpha":1.5}"#.into()),
            15 => lines.push(r#"{"kind":"control","alpha":0.5}"#.into()),
            _ => {}
        }
    }
    lines.join("\n") + "\n"
}

pub fn golden_generator() -> Generator {
    Generator::new(ModelConfig::new(13, 3, 2), Arc::new(synth_skeleton()), 7)
        .expect("default generator")
}

fn replies(generator: &Generator, conversation: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    run_session(generator, Cursor::new(conversation), &mut out).map_err(|e| e.to_string())?;
    Ok(String::from_utf8(out)
        .map_err(|e| e.to_string())?
        .lines()
        .map(str::to_string)
        .collect())
}

fn kind(line: &str) -> String {
    serde_json::from_str::<Value>(line)
        .ok()
        .and_then(|v| v.get("kind").and_then(Value::as_str).map(str::to_string))
        .unwrap_or_default()
}

/// Runs the checked-in conversation twice against two loads of one saved
/// checkpoint and compares the `frame_out` payloads byte for byte.
pub fn golden_check() -> Check {
    let conversation =
        std::fs::read_to_string(golden_path()).map_err(|e| format!("golden file: {e}"))?;
    if conversation != golden_conversation() {
        return Err("checked-in golden conversation differs from its generator".into());
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("generator.ckpt");
    golden_generator().save(&path).map_err(|e| e.to_string())?;
    let runs = [(); 2].map(|_| {
        Generator::load(&path)
            .map_err(|e| e.to_string())
            .and_then(|g| replies(&g, &conversation))
    });
    let [a, b] = runs;
    let (a, b) = (a?, b?);
    let frames = |r: &[String]| {
        r.iter()
            .filter(|l| kind(l) == "frame_out")
            .cloned()
            .collect::<Vec<_>>()
    };
    let (fa, fb) = (frames(&a), frames(&b));
    if fa.len() != 24 {
        return Err(format!("expected 24 frame_out lines, got {}", fa.len()));
    }
    if fa != fb {
        return Err("frame_out payloads differ between runs".into());
    }
    let errors: Vec<Value> = a
        .iter()
        .filter(|l| kind(l) == "error")
        .map(|l| serde_json::from_str(l).expect("error line is JSON"))
        .collect();
    match errors.as_slice() {
        [e] if e["code"] == "range" && e["closed"] == false => {}
        _ => {
            return Err(format!(
                "expected one non-closing range error, got {errors:?}"
            ))
        }
    }
    if kind(&a[0]) != "hello" {
        return Err(format!("first reply is not the hello echo: {}", a[0]));
    }
    Ok(format!("{} frame_out lines byte-identical across two runs; invalid alpha answered with a range error", fa.len()))
}
