use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{sample_map, windows_to_matrix, SupervisionConfig};
use crate::io::MotionWindow;
use crate::nn::{
    instance_norm, seeded_rng, Activation, Adam, Bound, Checkpoint, Conv1d, CustomOp, Dense, Graph,
    Mat, ParamStore, Var, INSTANCE_NORM_EPS, LEAKY_SLOPE,
};
use crate::{Error, Result};

pub const CLASSIFIER_KIND: &str = "classifier";

struct SoftmaxCrossEntropy {
    labels: Vec<usize>,
}

fn softmax_rows(logits: &Mat) -> Mat {
    let mut p = logits.clone();
    for mut row in p.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

impl CustomOp for SoftmaxCrossEntropy {
    fn name(&self) -> &'static str {
        "softmax_cross_entropy"
    }

    fn backward(&self, inputs: &[Arc<Mat>], _output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let mut g = softmax_rows(&inputs[0]);
        let n = self.labels.len() as f64;
        for (r, &l) in self.labels.iter().enumerate() {
            g[[r, l]] -= 1.0;
        }
        g.mapv_inplace(|v| v * grad[[0, 0]] / n);
        vec![Some(g)]
    }
}

/// Mean negative log-likelihood of `labels` under row-wise softmax.
pub fn softmax_cross_entropy<'g>(logits: Var<'g>, labels: &[usize]) -> Result<Var<'g>> {
    let v = logits.value();
    if v.nrows() != labels.len() || labels.iter().any(|&l| l >= v.ncols()) {
        return Err(Error::shape(format!(
            "cross entropy: logits {:?} vs {} labels",
            v.dim(),
            labels.len()
        )));
    }
    let p = softmax_rows(&v);
    let loss = -labels
        .iter()
        .enumerate()
        .map(|(r, &l)| p[[r, l]].max(1e-300).ln())
        .sum::<f64>()
        / labels.len() as f64;
    Ok(logits.graph().custom(
        Arc::new(SoftmaxCrossEntropy {
            labels: labels.to_vec(),
        }),
        &[logits],
        Mat::from_elem((1, 1), loss),
    ))
}

/// Content classifier: temporal convolutions each followed by instance
/// normalization (no affine), leaky ReLU between layers. The last
/// normalized map is the perceptual feature `phi`.
#[derive(Clone, Debug)]
pub struct Classifier {
    config: SupervisionConfig,
    params: ParamStore,
    convs: Vec<Conv1d>,
    head: Dense,
}

impl Classifier {
    pub fn new(config: SupervisionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.feature_len()? < 2 {
            return Err(Error::Range(
                "classifier feature map needs a time axis of at least 2".into(),
            ));
        }
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let convs = config
            .geometries(10 * config.joints)
            .into_iter()
            .enumerate()
            .map(|(i, g)| Conv1d::new(&mut params, &mut rng, &format!("cls.conv{i}"), g))
            .collect();
        let head = Dense::new(
            &mut params,
            &mut rng,
            "cls.head",
            config.feature_channels(),
            config.contents,
            Activation::None,
        );
        Ok(Self {
            config,
            params,
            convs,
            head,
        })
    }

    pub fn config(&self) -> &SupervisionConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn stack<'g>(
        &self,
        p: &Bound<'g>,
        features: Var<'g>,
        batch: usize,
        last_scale: Option<Var<'g>>,
    ) -> Result<Var<'g>> {
        let mut x = features;
        let mut len = self.config.window;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            let (mut y, l) = conv.forward(p, x, batch, len)?;
            len = l;
            if i == last {
                if let Some(s) = last_scale {
                    y = y * s.broadcast_rows(y.shape().0);
                }
            }
            y = instance_norm(y, len, INSTANCE_NORM_EPS)?;
            x = if i == last {
                y
            } else {
                y.leaky_relu(LEAKY_SLOPE)
            };
        }
        Ok(x)
    }

    /// `phi` rows (`(N*T') x C'`) for full feature rows (`(N*T) x 10J`).
    pub fn content_feature_rows<'g>(
        &self,
        p: &Bound<'g>,
        features: Var<'g>,
        batch: usize,
    ) -> Result<Var<'g>> {
        self.stack(p, features, batch, None)
    }

    /// Class logits, `N x n_C`. The head averages `leaky_relu(phi)` over
    /// time (the plain average of a normalized map is zero).
    pub fn logits<'g>(&self, p: &Bound<'g>, features: Var<'g>, batch: usize) -> Result<Var<'g>> {
        let phi = self.content_feature_rows(p, features, batch)?;
        let len = self.config.feature_len()?;
        let pooled = phi.leaky_relu(LEAKY_SLOPE).segment_sum_rows(len) * (1.0 / len as f64);
        Ok(self.head.forward(p, pooled))
    }

    /// `phi` of one window as `C' x T'`.
    pub fn content_features(&self, window: &MotionWindow) -> Result<Mat> {
        self.content_features_scaled(window, None)
    }

    /// `phi` with each channel of the last convolution multiplied by
    /// `scale` before its normalization.
    pub fn content_features_scaled(
        &self,
        window: &MotionWindow,
        scale: Option<&[f64]>,
    ) -> Result<Mat> {
        let x = windows_to_matrix(&[window], self.config.joints, self.config.window)?;
        let graph = Graph::new();
        let p = self.params.bind(&graph, false);
        let scale = match scale {
            Some(s) if s.len() != self.config.feature_channels() => {
                return Err(Error::shape(format!(
                    "{} channel scales for {} channels",
                    s.len(),
                    self.config.feature_channels()
                )))
            }
            Some(s) => {
                Some(graph.constant(Mat::from_shape_vec((1, s.len()), s.to_vec()).expect("row")))
            }
            None => None,
        };
        let phi = self.stack(&p, graph.constant(x), 1, scale)?;
        Ok(sample_map(&phi.value(), 0, self.config.feature_len()?))
    }

    pub fn predict(&self, windows: &[&MotionWindow]) -> Result<Vec<usize>> {
        let x = windows_to_matrix(windows, self.config.joints, self.config.window)?;
        let graph = Graph::new();
        let p = self.params.bind(&graph, false);
        let logits = self.logits(&p, graph.constant(x), windows.len())?.value();
        Ok(logits
            .outer_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect())
    }

    pub fn accuracy(&self, windows: &[MotionWindow]) -> Result<f64> {
        if windows.is_empty() {
            return Ok(0.0);
        }
        let refs: Vec<&MotionWindow> = windows.iter().collect();
        let pred = self.predict(&refs)?;
        let hits = pred
            .iter()
            .zip(windows)
            .filter(|(p, w)| **p == w.content)
            .count();
        Ok(hits as f64 / windows.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            CLASSIFIER_KIND,
            serde_json::json!({ "config": self.config }),
        );
        ck.push_store("cls.", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CLASSIFIER_KIND)?;
        let config = serde_json::from_value(ck.meta["config"].clone())?;
        let mut c = Self::new(config, 0)?;
        ck.load_store("cls.", &mut c.params)?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierTraining {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Cross-entropy training of the content classifier on labeled windows.
pub fn pretrain_classifier(
    windows: &[MotionWindow],
    config: SupervisionConfig,
    training: &ClassifierTraining,
) -> Result<Classifier> {
    let mut seen = vec![false; config.contents];
    for w in windows {
        if w.content >= config.contents {
            return Err(Error::Range(format!(
                "content {} outside [0, {})",
                w.content, config.contents
            )));
        }
        seen[w.content] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Coverage(format!(
            "no training window has content {missing}"
        )));
    }
    if training.batch_size == 0 || !(training.lr > 0.0) {
        return Err(Error::Range(
            "classifier batch size and learning rate must be positive".into(),
        ));
    }
    let mut model = Classifier::new(config, training.seed)?;
    let mut adam = Adam::new(training.lr, 0.9, 0.999);
    let mut rng = seeded_rng(training.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..training.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(training.batch_size) {
            let batch: Vec<&MotionWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|w| w.content).collect();
            let x = windows_to_matrix(&batch, model.config.joints, model.config.window)?;
            let graph = Graph::new();
            let p = model.params.bind(&graph, true);
            let logits = model.logits(&p, graph.constant(x), batch.len())?;
            let loss = softmax_cross_entropy(logits, &labels)?;
            if !loss.item().is_finite() {
                return Err(Error::Numeric(format!("classifier loss at epoch {epoch}")));
            }
            let grads = p.gradients(&graph.backward(loss)?);
            adam.step(&mut model.params, &grads);
        }
    }
    Ok(model)
}
