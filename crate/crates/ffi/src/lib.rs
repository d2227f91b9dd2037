//! C ABI over the style-erd streaming generator.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every call returns an [`SeStatus`]; on failure the
//! message is kept per thread and read with [`se_last_error`]. A session
//! keeps its generator alive, so the generator may be freed first.
//!
//! Frames cross the boundary as flat `double` arrays: `4 * J` rotation
//! components (`w, x, y, z` per joint), a 3-vector root translation and, on
//! output, `3 * J` root-relative positions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use style_erd::io::synth_skeleton;
use style_erd::model::{Generator, ModelConfig, StreamSession, TargetSpec};
use style_erd::motion::Quaternion;
use style_erd::service::{OnlineFeatureBuilder, DEFAULT_FPS};
use style_erd::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    Range = 5,
    Domain = 6,
    Shape = 7,
    Lifecycle = 8,
    Other = 9,
    Panic = 10,
}

impl From<&Error> for SeStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => SeStatus::Io,
            Error::Format(_) | Error::Json(_) | Error::Parse { .. } => SeStatus::Format,
            Error::Range(_) | Error::UnsupportedRate { .. } => SeStatus::Range,
            Error::Domain(_) => SeStatus::Domain,
            Error::Shape(_) | Error::Length(_) => SeStatus::Shape,
            Error::Lifecycle(_) => SeStatus::Lifecycle,
            _ => SeStatus::Other,
        }
    }
}

/// A loaded generator.
pub struct SeGenerator {
    inner: Arc<Generator>,
}

/// One stream: recurrent state plus the causal feature builder.
pub struct SeSession {
    generator: Arc<Generator>,
    session: StreamSession,
    features: OnlineFeatureBuilder,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn guard(f: impl FnOnce() -> Result<(), (SeStatus, String)>) -> SeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SeStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside style-erd".into());
            SeStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SeStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (SeStatus, String) {
    (SeStatus::NullPointer, format!("{what} is null"))
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn se_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a generator checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn se_generator_load(path: *const c_char, out: *mut *mut SeGenerator) -> SeStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| (SeStatus::InvalidUtf8, format!("path: {e}")))?;
        let g = Generator::load(path).map_err(lib)?;
        *out = Box::into_raw(Box::new(SeGenerator { inner: Arc::new(g) }));
        Ok(())
    })
}

/// An untrained generator of default size on the built-in 13-joint
/// skeleton. Useful for wiring tests.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn se_generator_new_untrained(
    styles: usize,
    contents: usize,
    seed: u64,
    out: *mut *mut SeGenerator,
) -> SeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let skeleton = synth_skeleton();
        let config = ModelConfig::new(skeleton.joint_count(), styles, contents);
        let g = Generator::new(config, Arc::new(skeleton), seed).map_err(lib)?;
        *out = Box::into_raw(Box::new(SeGenerator { inner: Arc::new(g) }));
        Ok(())
    })
}

/// # Safety
/// `generator` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn se_generator_free(generator: *mut SeGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

/// Joint, style and content counts; any output pointer may be null.
///
/// # Safety
/// `generator` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn se_generator_info(
    generator: *const SeGenerator,
    joints: *mut usize,
    styles: *mut usize,
    contents: *mut usize,
) -> SeStatus {
    guard(|| {
        let g = generator.as_ref().ok_or_else(|| null("generator"))?;
        let c = g.inner.config();
        for (ptr, v) in [(joints, c.joints), (styles, c.styles), (contents, c.contents)] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}

/// Opens a stream in `source_style`/`content` targeting `target_style`.
/// `fps <= 0` uses the default of 60.
///
/// # Safety
/// `generator` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn se_session_open(
    generator: *const SeGenerator,
    source_style: usize,
    content: usize,
    target_style: usize,
    fps: f64,
    out: *mut *mut SeSession,
) -> SeStatus {
    guard(|| {
        let g = generator.as_ref().ok_or_else(|| null("generator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let fps = if fps > 0.0 { fps } else { DEFAULT_FPS };
        let features = OnlineFeatureBuilder::new(fps).map_err(lib)?;
        let session = g
            .inner
            .open_session(source_style, content, TargetSpec::style(target_style))
            .map_err(lib)?;
        *out = Box::into_raw(Box::new(SeSession {
            generator: g.inner.clone(),
            session,
            features,
        }));
        Ok(())
    })
}

/// # Safety
/// `session` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn se_session_free(session: *mut SeSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

unsafe fn retarget(session: *mut SeSession, target: TargetSpec) -> SeStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        s.generator.set_target(&mut s.session, target).map_err(lib)
    })
}

/// Switches to a single style at full strength.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn se_session_set_style(session: *mut SeSession, style: usize) -> SeStatus {
    retarget(session, TargetSpec::style(style))
}

/// `(1 - alpha) * first + alpha * second`, `alpha` in `[0, 1]`. An invalid
/// target leaves the current one in force.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn se_session_set_blend(session: *mut SeSession, first: usize, second: usize, alpha: f64) -> SeStatus {
    retarget(session, TargetSpec::Blend { first, second, alpha })
}

/// `style` at strength `alpha` in `[0, 1]` over neutral.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn se_session_set_scaled(session: *mut SeSession, style: usize, alpha: f64) -> SeStatus {
    retarget(session, TargetSpec::Scaled { style, alpha })
}

/// Stylizes one frame. `rotations` holds `4 * J` values, `root` 3 values;
/// `out_rotations` receives `4 * J` values and `out_positions` (may be
/// null) `3 * J`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `session` must be live.
#[no_mangle]
pub unsafe extern "C" fn se_session_step(
    session: *mut SeSession,
    rotations: *const f64,
    root: *const f64,
    out_rotations: *mut f64,
    out_positions: *mut f64,
) -> SeStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        if rotations.is_null() || root.is_null() || out_rotations.is_null() {
            return Err(null("a frame buffer"));
        }
        let j = s.generator.config().joints;
        let input = std::slice::from_raw_parts(rotations, 4 * j);
        let quats: Vec<Quaternion> = input
            .chunks_exact(4)
            .map(|c| Quaternion::from_array([c[0], c[1], c[2], c[3]]))
            .collect();
        let root = std::slice::from_raw_parts(root, 3);
        let frame = s
            .features
            .push(s.generator.skeleton(), &quats, [root[0], root[1], root[2]])
            .map_err(lib)?;
        let out = s.generator.transfer_frame(&mut s.session, &frame).map_err(lib)?;
        let dst = std::slice::from_raw_parts_mut(out_rotations, 4 * j);
        for (d, q) in dst.chunks_exact_mut(4).zip(&out.rotations) {
            d.copy_from_slice(&q.to_array());
        }
        if !out_positions.is_null() {
            let dst = std::slice::from_raw_parts_mut(out_positions, 3 * j);
            for (d, p) in dst.chunks_exact_mut(3).zip(&out.positions) {
                d.copy_from_slice(p);
            }
        }
        Ok(())
    })
}
