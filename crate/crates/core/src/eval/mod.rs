//! Fréchet motion distance over denoising-autoencoder features.

mod extractor;
mod frechet;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use extractor::{
    add_rotation_noise, train_fmd_extractor, FmdConfig, FmdExtractor, FmdTraining,
    FMD_EXTRACTOR_KIND,
};
pub use frechet::{frechet_distance, GaussianSummary, PSD_TOLERANCE, SHRINKAGE};

use crate::io::MotionWindow;
use crate::model::{matrix_to_frames, Generator, RowCondition, TargetSpec};
use crate::nn::{Graph, Mat};
use crate::supervision::windows_to_matrix;
use crate::training::loss_quat;
use crate::{Error, Result};

/// FMD between two window sets under a frozen extractor.
pub fn compute_fmd(
    set_a: &[&MotionWindow],
    set_b: &[&MotionWindow],
    extractor: &FmdExtractor,
) -> Result<f64> {
    let a = GaussianSummary::fit(&extractor.features(set_a)?)?;
    let b = GaussianSummary::fit(&extractor.features(set_b)?)?;
    frechet_distance(&a, &b)
}

fn run_windows(
    generator: &Generator,
    windows: &[&MotionWindow],
    target: impl Fn(&MotionWindow) -> usize,
) -> Result<(Mat, Mat)> {
    let cfg = generator.config();
    let x = windows_to_matrix(windows, cfg.joints, cfg.window)?;
    let rows: Vec<RowCondition> = windows
        .iter()
        .map(|w| RowCondition {
            source_style: w.style,
            content: w.content,
            target: TargetSpec::style(target(w)),
        })
        .collect();
    let y = generator.transfer_sequences(&x, cfg.window, &rows)?;
    Ok((x, y))
}

/// Mean joint angle (radians) between each window and its reconstruction
/// in its own style.
pub fn reconstruction_error(generator: &Generator, windows: &[&MotionWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Coverage("no windows to reconstruct".into()));
    }
    let j = generator.config().joints;
    let mut total = 0.0;
    for chunk in windows.chunks(64) {
        let (x, y) = run_windows(generator, chunk, |w| w.style)?;
        let g = Graph::new();
        let r = |m: &Mat| g.constant(m.slice(ndarray::s![.., ..4 * j]).to_owned());
        total += loss_quat(r(&x), r(&y))?.item() * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Offline transfer of every window to `target_style`; results carry the
/// target label.
pub fn transfer_windows(
    generator: &Generator,
    windows: &[&MotionWindow],
    target_style: usize,
) -> Result<Vec<MotionWindow>> {
    let j = generator.config().joints;
    let t = generator.config().window;
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(64) {
        let (_, y) = run_windows(generator, chunk, |_| target_style)?;
        for (i, w) in chunk.iter().enumerate() {
            let roots: Vec<_> = w.frames.iter().map(|f| f.root_translation).collect();
            let rows = y.slice(ndarray::s![i * t..(i + 1) * t, ..]).to_owned();
            out.push(MotionWindow {
                frames: matrix_to_frames(&rows, j, &roots)?,
                style: target_style,
                content: w.content,
                source_id: format!("{}->s{target_style}", w.source_id),
                start_index: w.start_index,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetPair {
    pub set_a: String,
    pub set_b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmdReport {
    pub pair: SetPair,
    pub fmd: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub feature_dim: usize,
    pub extractor: FmdConfig,
}

impl FmdReport {
    pub fn compute(
        names: (&str, &str),
        set_a: &[&MotionWindow],
        set_b: &[&MotionWindow],
        extractor: &FmdExtractor,
    ) -> Result<Self> {
        Ok(Self {
            pair: SetPair {
                set_a: names.0.to_string(),
                set_b: names.1.to_string(),
            },
            fmd: compute_fmd(set_a, set_b, extractor)?,
            n_a: set_a.len(),
            n_b: set_b.len(),
            feature_dim: extractor.config().feature_dim()?,
            extractor: extractor.config().clone(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}
