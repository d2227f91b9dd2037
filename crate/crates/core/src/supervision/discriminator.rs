use std::path::Path;

use super::{sample_map, windows_to_matrix, SupervisionConfig};
use crate::io::MotionWindow;
use crate::nn::{
    seeded_rng, Activation, Bound, Checkpoint, Conv1d, Dense, Graph, Mat, ParamStore, Var,
    LEAKY_SLOPE,
};
use crate::{Error, Result};

pub const DISCRIMINATOR_KIND: &str = "discriminator";

/// `sum_ij (m_s o (w_f (x) w_t))_ij` per sample.
///
/// `m` holds `N*T'` rows of `C'` channels (row `n*T' + t`), `w_f` is
/// `N x C'` and `w_t` is `N x T'`. Returns `N x 1`.
pub fn attention_score<'g>(m: Var<'g>, w_f: Var<'g>, w_t: Var<'g>) -> Result<Var<'g>> {
    let (n, c) = w_f.shape();
    let (nt, t) = w_t.shape();
    if nt != n || m.shape() != (n * t, c) {
        return Err(Error::shape(format!(
            "attention: m {:?}, w_f {:?}, w_t {:?}",
            m.shape(),
            w_f.shape(),
            w_t.shape()
        )));
    }
    let w_s = w_f.repeat_rows(t).mul_col(w_t.reshape(n * t, 1));
    Ok((m * w_s).segment_sum_rows(t).sum_cols())
}

/// Temporal-convolution critic over positions and velocities, weighted by a
/// rank-1 attention map that depends only on the labels.
#[derive(Clone, Debug)]
pub struct Discriminator {
    config: SupervisionConfig,
    no_attention: bool,
    params: ParamStore,
    convs: Vec<Conv1d>,
    feature_attention: [Dense; 2],
    temporal_attention: [Dense; 2],
}

impl Discriminator {
    /// With `no_attention` the weight map is all ones.
    pub fn new(config: SupervisionConfig, no_attention: bool, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let convs = config
            .geometries(6 * config.joints)
            .into_iter()
            .enumerate()
            .map(|(i, g)| Conv1d::new(&mut params, &mut rng, &format!("dis.conv{i}"), g))
            .collect();
        let cond = config.styles + config.contents;
        let t_out = config.feature_len()?;
        let feature_attention = [
            Dense::new(
                &mut params,
                &mut rng,
                "dis.att_f.0",
                cond,
                config.feature_hidden,
                Activation::LeakyRelu,
            ),
            Dense::new(
                &mut params,
                &mut rng,
                "dis.att_f.1",
                config.feature_hidden,
                config.feature_channels(),
                Activation::Sigmoid,
            ),
        ];
        let temporal_attention = [
            Dense::new(
                &mut params,
                &mut rng,
                "dis.att_t.0",
                cond,
                config.temporal_hidden,
                Activation::LeakyRelu,
            ),
            Dense::new(
                &mut params,
                &mut rng,
                "dis.att_t.1",
                config.temporal_hidden,
                t_out,
                Activation::Sigmoid,
            ),
        ];
        Ok(Self {
            config,
            no_attention,
            params,
            convs,
            feature_attention,
            temporal_attention,
        })
    }

    pub fn config(&self) -> &SupervisionConfig {
        &self.config
    }

    pub fn no_attention(&self) -> bool {
        self.no_attention
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `m_s` rows for `N` windows of position/velocity channels
    /// (`(N*T) x 6J`).
    pub fn style_feature_rows<'g>(
        &self,
        p: &Bound<'g>,
        motion: Var<'g>,
        batch: usize,
    ) -> Result<Var<'g>> {
        let mut x = motion;
        let mut len = self.config.window;
        for conv in &self.convs {
            let (y, l) = conv.forward(p, x, batch, len)?;
            x = y.leaky_relu(LEAKY_SLOPE);
            len = l;
        }
        Ok(x)
    }

    fn condition<'g>(
        &self,
        graph: &'g Graph,
        styles: &[usize],
        contents: &[usize],
    ) -> Result<Var<'g>> {
        if styles.len() != contents.len() {
            return Err(Error::shape("style and content label counts differ"));
        }
        let (ns, nc) = (self.config.styles, self.config.contents);
        let mut m = Mat::zeros((styles.len(), ns + nc));
        for (r, (&s, &c)) in styles.iter().zip(contents).enumerate() {
            if s >= ns || c >= nc {
                return Err(Error::Range(format!(
                    "labels ({s}, {c}) outside ({ns}, {nc})"
                )));
            }
            m[[r, s]] = 1.0;
            m[[r, ns + c]] = 1.0;
        }
        Ok(graph.constant(m))
    }

    /// `(w_f, w_t)` as `N x C'` and `N x T'`.
    pub fn attention_vars<'g>(
        &self,
        p: &Bound<'g>,
        styles: &[usize],
        contents: &[usize],
    ) -> Result<(Var<'g>, Var<'g>)> {
        let graph = p.graph();
        let n = styles.len();
        if self.no_attention {
            let c = self.config.feature_channels();
            let t = self.config.feature_len()?;
            return Ok((
                graph.constant(Mat::ones((n, c))),
                graph.constant(Mat::ones((n, t))),
            ));
        }
        let cond = self.condition(graph, styles, contents)?;
        let wf = self.feature_attention[1].forward(p, self.feature_attention[0].forward(p, cond));
        let wt = self.temporal_attention[1].forward(p, self.temporal_attention[0].forward(p, cond));
        Ok((wf, wt))
    }

    /// Critic output (`N x 1`) for full feature rows (`(N*T) x 10J`).
    pub fn score<'g>(
        &self,
        p: &Bound<'g>,
        features: Var<'g>,
        styles: &[usize],
        contents: &[usize],
    ) -> Result<Var<'g>> {
        let j = self.config.joints;
        self.score_motion(p, features.slice_cols(4 * j, 6 * j), styles, contents)
    }

    /// Critic output for position/velocity rows (`(N*T) x 6J`).
    pub fn score_motion<'g>(
        &self,
        p: &Bound<'g>,
        motion: Var<'g>,
        styles: &[usize],
        contents: &[usize],
    ) -> Result<Var<'g>> {
        let n = styles.len();
        if motion.shape() != (n * self.config.window, 6 * self.config.joints) {
            return Err(Error::shape(format!(
                "critic input {:?}, expected ({}, {})",
                motion.shape(),
                n * self.config.window,
                6 * self.config.joints
            )));
        }
        let m = self.style_feature_rows(p, motion, n)?;
        let (wf, wt) = self.attention_vars(p, styles, contents)?;
        attention_score(m, wf, wt)
    }

    /// `m_s` of one window as `C' x T'`.
    pub fn style_features(&self, window: &MotionWindow) -> Result<Mat> {
        let x = windows_to_matrix(&[window], self.config.joints, self.config.window)?;
        let graph = Graph::new();
        let p = self.params.bind(&graph, false);
        let j = self.config.joints;
        let m = self.style_feature_rows(&p, graph.constant(x).slice_cols(4 * j, 6 * j), 1)?;
        Ok(sample_map(&m.value(), 0, self.config.feature_len()?))
    }

    /// `(w_f, w_t, w_s)` for one label pair.
    pub fn attention(&self, style: usize, content: usize) -> Result<(Vec<f64>, Vec<f64>, Mat)> {
        let graph = Graph::new();
        let p = self.params.bind(&graph, false);
        let (wf, wt) = self.attention_vars(&p, &[style], &[content])?;
        let wf: Vec<f64> = wf.value().iter().copied().collect();
        let wt: Vec<f64> = wt.value().iter().copied().collect();
        let ws = Mat::from_shape_fn((wf.len(), wt.len()), |(i, j)| wf[i] * wt[j]);
        Ok((wf, wt, ws))
    }

    pub fn discriminate(&self, window: &MotionWindow, style: usize, content: usize) -> Result<f64> {
        let x = windows_to_matrix(&[window], self.config.joints, self.config.window)?;
        let graph = Graph::new();
        let p = self.params.bind(&graph, false);
        Ok(self
            .score(&p, graph.constant(x), &[style], &[content])?
            .item())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            DISCRIMINATOR_KIND,
            serde_json::json!({ "config": self.config, "no_attention": self.no_attention }),
        );
        ck.push_store("dis.", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(DISCRIMINATOR_KIND)?;
        let config = serde_json::from_value(ck.meta["config"].clone())?;
        let no_attention = ck.meta["no_attention"].as_bool().unwrap_or(false);
        let mut d = Self::new(config, no_attention, 0)?;
        ck.load_store("dis.", &mut d.params)?;
        Ok(d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
