//! Style critic with feature/temporal attention and the instance-normalized
//! content classifier.

mod classifier;
mod discriminator;

use serde::{Deserialize, Serialize};

pub use classifier::{
    pretrain_classifier, softmax_cross_entropy, Classifier, ClassifierTraining, CLASSIFIER_KIND,
};
pub use discriminator::{attention_score, Discriminator, DISCRIMINATOR_KIND};

use crate::io::MotionWindow;
use crate::motion::feature_width;
use crate::nn::{ConvGeometry, Mat};
use crate::{Error, Result};

/// Geometry shared by the critic and the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisionConfig {
    pub joints: usize,
    pub styles: usize,
    pub contents: usize,
    pub window: usize,
    /// Output channels of each temporal convolution; the last is `C'`.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub feature_hidden: usize,
    pub temporal_hidden: usize,
}

impl SupervisionConfig {
    pub fn new(joints: usize, styles: usize, contents: usize) -> Self {
        Self {
            joints,
            styles,
            contents,
            window: 24,
            channels: vec![96, 128, 160],
            kernel: 4,
            stride: 2,
            padding: 1,
            feature_hidden: 64,
            temporal_hidden: 16,
        }
    }

    pub(crate) fn geometries(&self, in_channels: usize) -> Vec<ConvGeometry> {
        let mut c = in_channels;
        self.channels
            .iter()
            .map(|&out| {
                let g = ConvGeometry {
                    in_channels: c,
                    out_channels: out,
                    kernel: self.kernel,
                    stride: self.stride,
                    padding: self.padding,
                };
                c = out;
                g
            })
            .collect()
    }

    /// `C'`.
    pub fn feature_channels(&self) -> usize {
        *self.channels.last().expect("validated non-empty")
    }

    /// `T'`, the temporal length of the last feature map.
    pub fn feature_len(&self) -> Result<usize> {
        self.geometries(1)
            .iter()
            .try_fold(self.window, |len, g| g.output_len(len))
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Range(
                "supervision needs at least one non-empty conv layer".into(),
            ));
        }
        if self.styles < 1 || self.contents < 1 || self.joints < 1 {
            return Err(Error::Range(format!("degenerate label space: {self:?}")));
        }
        self.feature_len()?;
        Ok(())
    }
}

/// Rows `n*T + t` of full frame features for a batch of windows.
pub fn windows_to_matrix(windows: &[&MotionWindow], joints: usize, window: usize) -> Result<Mat> {
    let width = feature_width(joints);
    let mut data = Vec::with_capacity(windows.len() * window * width);
    for w in windows {
        if w.len() != window {
            return Err(Error::shape(format!(
                "window of {} frames, expected {window}",
                w.len()
            )));
        }
        for f in &w.frames {
            if f.joint_count() != joints {
                return Err(Error::shape(format!(
                    "frame with {} joints, expected {joints}",
                    f.joint_count()
                )));
            }
            f.write_features(&mut data);
        }
    }
    Ok(Mat::from_shape_vec((windows.len() * window, width), data).expect("sized above"))
}

/// `(N*T') x C'` feature rows of one sample as the `C' x T'` matrix.
pub(crate) fn sample_map(rows: &Mat, sample: usize, len: usize) -> Mat {
    rows.slice(ndarray::s![sample * len..(sample + 1) * len, ..])
        .t()
        .to_owned()
}
