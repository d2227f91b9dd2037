use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::kinematics::{ForwardKinematics, NormalizeQuaternions};
use super::target::TargetSpec;
use crate::motion::{feature_width, MotionFrame, Skeleton, Vec3, NEUTRAL};
use crate::nn::{
    concat_cols, interleave_rows, seeded_rng, Activation, Bound, Checkpoint, Dense, Graph,
    LstmCell, LstmState, Mat, ParamId, ParamStore, Var,
};
use crate::{Error, Result};

pub const GENERATOR_KIND: &str = "generator";

/// Sizes of the generator. `hidden` is both the latent width and the LSTM
/// hidden size, so residual branch outputs add without a projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub joints: usize,
    pub styles: usize,
    pub contents: usize,
    pub hidden: usize,
    pub encoder_hidden: usize,
    pub neutral_layers: usize,
    pub style_layers: usize,
    pub decoder_hidden: Vec<usize>,
    pub window: usize,
}

impl ModelConfig {
    pub fn new(joints: usize, styles: usize, contents: usize) -> Self {
        Self {
            joints,
            styles,
            contents,
            hidden: 32,
            encoder_hidden: 64,
            neutral_layers: 6,
            style_layers: 4,
            decoder_hidden: vec![58, 86, 128, 184],
            window: 24,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints < 2 || self.styles < 2 || self.contents < 1 {
            return Err(Error::Range(format!(
                "model needs J >= 2, n_S >= 2, n_C >= 1 (got {}, {}, {})",
                self.joints, self.styles, self.contents
            )));
        }
        if self.hidden == 0
            || self.encoder_hidden == 0
            || self.neutral_layers == 0
            || self.style_layers == 0
            || self.decoder_hidden.contains(&0)
            || self.window < 2
        {
            return Err(Error::Range(format!("degenerate model size: {self:?}")));
        }
        Ok(())
    }

    pub fn feature_width(&self) -> usize {
        feature_width(self.joints)
    }
}

/// Conditioning of one batch row (one sequence).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowCondition {
    pub source_style: usize,
    pub content: usize,
    pub target: TargetSpec,
}

#[derive(Clone, Debug)]
pub(crate) struct Branch {
    pub(crate) cells: Vec<LstmCell>,
    pub(crate) init_h: Vec<ParamId>,
    pub(crate) init_c: Vec<ParamId>,
}

/// Encoder, neutral basis `r0`, one residual LSTM stack per non-neutral
/// style and the conditional decoder.
#[derive(Clone)]
pub struct Generator {
    config: ModelConfig,
    skeleton: Arc<Skeleton>,
    params: ParamStore,
    encoder: Vec<Dense>,
    pub(crate) branches: Vec<Branch>,
    decoder: Vec<Dense>,
    fk: Arc<ForwardKinematics>,
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generator")
            .field("config", &self.config)
            .field("parameters", &self.params.scalar_count())
            .finish()
    }
}

impl Generator {
    pub fn new(config: ModelConfig, skeleton: Arc<Skeleton>, seed: u64) -> Result<Self> {
        config.validate()?;
        if skeleton.joint_count() != config.joints {
            return Err(Error::shape(format!(
                "skeleton has {} joints, config says {}",
                skeleton.joint_count(),
                config.joints
            )));
        }
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let h = config.hidden;
        let cond = config.styles + config.contents;
        let encoder = vec![
            Dense::new(
                &mut params,
                &mut rng,
                "enc.0",
                config.feature_width() + cond,
                config.encoder_hidden,
                Activation::Relu,
            ),
            Dense::new(
                &mut params,
                &mut rng,
                "enc.1",
                config.encoder_hidden,
                h,
                Activation::Relu,
            ),
        ];
        let mut branches = Vec::with_capacity(config.styles);
        for b in 0..config.styles {
            let (layers, bank) = if b == NEUTRAL {
                (config.neutral_layers, config.contents)
            } else {
                (config.style_layers, 1)
            };
            let cells = (0..layers)
                .map(|l| LstmCell::new(&mut params, &mut rng, &format!("r{b}.l{l}"), h, h))
                .collect();
            let init_h = (0..layers)
                .map(|l| params.add(format!("r{b}.h0.{l}"), Mat::zeros((bank, h))))
                .collect();
            let init_c = (0..layers)
                .map(|l| params.add(format!("r{b}.c0.{l}"), Mat::zeros((bank, h))))
                .collect();
            branches.push(Branch {
                cells,
                init_h,
                init_c,
            });
        }
        let mut decoder = Vec::new();
        let mut width = h + config.styles;
        for (i, &n) in config.decoder_hidden.iter().enumerate() {
            decoder.push(Dense::new(
                &mut params,
                &mut rng,
                &format!("dec.{i}"),
                width,
                n,
                Activation::Relu,
            ));
            width = n;
        }
        decoder.push(Dense::new(
            &mut params,
            &mut rng,
            &format!("dec.{}", config.decoder_hidden.len()),
            width,
            7 * config.joints,
            Activation::None,
        ));
        let fk = ForwardKinematics::new(&skeleton);
        Ok(Self {
            config,
            skeleton,
            params,
            encoder,
            branches,
            decoder,
            fk,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn skeleton(&self) -> &Arc<Skeleton> {
        &self.skeleton
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Every learned initial hidden/cell state tensor.
    pub fn initial_state_params(&self) -> Vec<ParamId> {
        self.branches
            .iter()
            .flat_map(|b| b.init_h.iter().chain(&b.init_c).copied())
            .collect()
    }

    pub(crate) fn validate_row(&self, row: &RowCondition) -> Result<()> {
        if row.source_style >= self.config.styles {
            return Err(Error::Range(format!(
                "source style {} outside [0, {})",
                row.source_style, self.config.styles
            )));
        }
        if row.content >= self.config.contents {
            return Err(Error::Range(format!(
                "content {} outside [0, {})",
                row.content, self.config.contents
            )));
        }
        row.target.validate(self.config.styles)
    }

    pub(crate) fn encoder_condition(&self, source_style: usize, content: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.config.styles + self.config.contents];
        c[source_style] = 1.0;
        c[self.config.styles + content] = 1.0;
        c
    }

    pub(crate) fn encode_var<'g>(&self, p: &Bound<'g>, x: Var<'g>, cond: Var<'g>) -> Var<'g> {
        let mut h = concat_cols(&[x, cond]);
        for layer in &self.encoder {
            h = layer.forward(p, h);
        }
        h
    }

    /// Initial states of branch `b` for a batch. `r0` selects one bank row
    /// per content; style branches have a single learned state.
    pub(crate) fn initial_states<'g>(
        &self,
        p: &Bound<'g>,
        b: usize,
        contents: &[usize],
    ) -> Vec<LstmState<'g>> {
        let branch = &self.branches[b];
        let rows: Arc<Vec<usize>> = Arc::new(if b == NEUTRAL {
            contents.to_vec()
        } else {
            vec![0; contents.len()]
        });
        branch
            .init_h
            .iter()
            .zip(&branch.init_c)
            .map(|(&h, &c)| LstmState {
                h: p.get(h).gather_rows(rows.clone()),
                c: p.get(c).gather_rows(rows.clone()),
            })
            .collect()
    }

    pub(crate) fn branch_step<'g>(
        &self,
        p: &Bound<'g>,
        b: usize,
        z: Var<'g>,
        states: &mut [LstmState<'g>],
    ) -> Var<'g> {
        let mut x = z;
        for (cell, state) in self.branches[b].cells.iter().zip(states.iter_mut()) {
            *state = cell.step(p, x, *state);
            x = state.h;
        }
        x
    }

    /// Decoded feature rows `[rotations, positions, velocities]`: unit
    /// `w >= 0` quaternions, FK root-relative positions and the decoded
    /// velocities.
    pub(crate) fn decode_var<'g>(&self, p: &Bound<'g>, z: Var<'g>, cond: Var<'g>) -> Var<'g> {
        let j = self.config.joints;
        let mut h = concat_cols(&[z, cond]);
        for layer in &self.decoder {
            h = layer.forward(p, h);
        }
        let quats = NormalizeQuaternions::apply(h.slice_cols(0, 4 * j));
        let positions = self.fk.apply(quats);
        let velocities = h.slice_cols(4 * j, 3 * j);
        concat_cols(&[quats, positions, velocities])
    }

    /// Runs `N` sequences of `len` frames, stored as `(N*len) x 10J` rows
    /// (row `n*len + t`), through encoder, recurrence and decoder.
    pub fn unroll<'g>(
        &self,
        p: &Bound<'g>,
        x: Var<'g>,
        len: usize,
        rows: &[RowCondition],
    ) -> Result<Var<'g>> {
        let graph = p.graph();
        let n = rows.len();
        if n == 0 || len == 0 {
            return Err(Error::Contract(
                "unroll needs at least one sequence of one frame".into(),
            ));
        }
        if x.shape() != (n * len, self.config.feature_width()) {
            return Err(Error::shape(format!(
                "generator input {:?}, expected ({}, {})",
                x.shape(),
                n * len,
                self.config.feature_width()
            )));
        }
        for row in rows {
            self.validate_row(row)?;
        }
        let enc_width = self.config.styles + self.config.contents;
        let mut enc = Mat::zeros((n * len, enc_width));
        let mut dec = Mat::zeros((n * len, self.config.styles));
        for (i, row) in rows.iter().enumerate() {
            let e = self.encoder_condition(row.source_style, row.content);
            let d = row.target.decoder_condition(self.config.styles);
            for t in 0..len {
                enc.row_mut(i * len + t)
                    .assign(&ndarray::ArrayView1::from(&e));
                dec.row_mut(i * len + t)
                    .assign(&ndarray::ArrayView1::from(&d));
            }
        }
        let z_all = self.encode_var(p, x, graph.constant(enc));

        let contents: Vec<usize> = rows.iter().map(|r| r.content).collect();
        let mut neutral_states = self.initial_states(p, NEUTRAL, &contents);
        struct Lane<'g> {
            branch: usize,
            rows: Option<Arc<Vec<usize>>>,
            weights: Option<Var<'g>>,
            states: Vec<LstmState<'g>>,
        }
        let mut lanes = Vec::new();
        for b in 1..self.config.styles {
            let members: Vec<(usize, f64)> = rows
                .iter()
                .enumerate()
                .filter_map(|(i, r)| {
                    r.target
                        .residual_weights()
                        .into_iter()
                        .find(|(s, _)| *s == b)
                        .map(|(_, w)| (i, w))
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let idx: Vec<usize> = members.iter().map(|m| m.0).collect();
            let weights = members.iter().any(|m| m.1 != 1.0).then(|| {
                graph.constant(
                    Mat::from_shape_vec((members.len(), 1), members.iter().map(|m| m.1).collect())
                        .expect("column"),
                )
            });
            lanes.push(Lane {
                branch: b,
                rows: (idx.len() != n).then(|| Arc::new(idx.clone())),
                weights,
                states: self.initial_states(p, b, &vec![0; idx.len()]),
            });
        }

        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let z = if len == 1 {
                z_all
            } else {
                z_all.gather_rows(Arc::new((0..n).map(|i| i * len + t).collect()))
            };
            let mut zp = self.branch_step(p, NEUTRAL, z, &mut neutral_states);
            for lane in &mut lanes {
                let input = match &lane.rows {
                    Some(idx) => z.gather_rows(idx.clone()),
                    None => z,
                };
                let mut out = self.branch_step(p, lane.branch, input, &mut lane.states);
                if let Some(w) = lane.weights {
                    out = out.mul_col(w);
                }
                if let Some(idx) = &lane.rows {
                    out = out.scatter_rows(idx.clone(), n);
                }
                zp = zp + out;
            }
            steps.push(zp);
        }
        let zp_all = if len == 1 {
            steps[0]
        } else {
            interleave_rows(&steps)
        };
        Ok(self.decode_var(p, zp_all, graph.constant(dec)))
    }

    /// Inference-only [`Generator::unroll`] on a feature matrix.
    pub fn transfer_sequences(
        &self,
        features: &Mat,
        len: usize,
        rows: &[RowCondition],
    ) -> Result<Mat> {
        let graph = Graph::new();
        let p = self.params.bind(&graph, false);
        let out = self.unroll(&p, graph.constant(features.clone()), len, rows)?;
        Ok((*out.value()).clone())
    }

    /// Offline transfer of a whole clip in one pass. Root translations pass
    /// through unchanged.
    pub fn transfer_clip(
        &self,
        frames: &[MotionFrame],
        source_style: usize,
        content: usize,
        target: TargetSpec,
    ) -> Result<Vec<MotionFrame>> {
        let x = frames_to_matrix(frames, self.config.joints)?;
        let row = RowCondition {
            source_style,
            content,
            target,
        };
        let out = self.transfer_sequences(&x, frames.len(), &[row])?;
        let roots: Vec<Vec3> = frames.iter().map(|f| f.root_translation).collect();
        matrix_to_frames(&out, self.config.joints, &roots)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            GENERATOR_KIND,
            serde_json::json!({ "config": self.config, "skeleton": *self.skeleton }),
        );
        ck.push_store("gen.", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(GENERATOR_KIND)?;
        let config: ModelConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let skeleton: Skeleton = serde_json::from_value(ck.meta["skeleton"].clone())?;
        let skeleton = Skeleton::with_layout(
            skeleton.names().to_vec(),
            skeleton.parents().to_vec(),
            skeleton.offsets().to_vec(),
            skeleton.euler_orders().to_vec(),
            skeleton.end_sites().to_vec(),
        )?;
        let mut g = Self::new(config, Arc::new(skeleton), 0)?;
        ck.load_store("gen.", &mut g.params)?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Stacks frame feature vectors as rows.
pub fn frames_to_matrix(frames: &[MotionFrame], joints: usize) -> Result<Mat> {
    let width = feature_width(joints);
    let mut data = Vec::with_capacity(frames.len() * width);
    for f in frames {
        if f.joint_count() != joints {
            return Err(Error::shape(format!(
                "frame has {} joints, model has {joints}",
                f.joint_count()
            )));
        }
        f.write_features(&mut data);
    }
    Mat::from_shape_vec((frames.len(), width), data).map_err(|e| Error::shape(e.to_string()))
}

/// Inverse of [`frames_to_matrix`] with the given root translations.
pub fn matrix_to_frames(m: &Mat, joints: usize, roots: &[Vec3]) -> Result<Vec<MotionFrame>> {
    if m.nrows() != roots.len() {
        return Err(Error::Length(format!(
            "{} rows but {} root translations",
            m.nrows(),
            roots.len()
        )));
    }
    m.outer_iter()
        .zip(roots)
        .map(|(row, root)| MotionFrame::from_features(&row.to_vec(), joints, *root))
        .collect()
}
