use std::collections::BTreeMap;
use std::sync::Arc;

use super::generator::{Generator, RowCondition};
use super::target::TargetSpec;
use crate::motion::{MotionFrame, NEUTRAL};
use crate::nn::{Bound, Graph, LstmState, Mat, Var};
use crate::{Error, Result};

type StackState = Vec<(Arc<Mat>, Arc<Mat>)>;

/// Live recurrent state of one stream.
///
/// `r0` is opened from the bank entry of the stream's content and is never
/// reset. Residual branches are engaged by the current target: a newly
/// engaged branch starts from its learned initial state, a branch that is
/// no longer engaged is dropped.
#[derive(Clone, Debug)]
pub struct StreamSession {
    source_style: usize,
    content: usize,
    target: TargetSpec,
    frame_index: u64,
    open: bool,
    neutral: StackState,
    residual: BTreeMap<usize, StackState>,
}

impl StreamSession {
    pub fn source_style(&self) -> usize {
        self.source_style
    }

    pub fn content(&self) -> usize {
        self.content
    }

    pub fn target(&self) -> TargetSpec {
        self.target
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn close(&mut self) {
        self.open = false;
    }

    /// `(h, c)` per layer of the neutral branch.
    pub fn neutral_state(&self) -> &[(Arc<Mat>, Arc<Mat>)] {
        &self.neutral
    }

    /// `(h, c)` per layer of an engaged residual branch.
    pub fn branch_state(&self, style: usize) -> Option<&[(Arc<Mat>, Arc<Mat>)]> {
        self.residual.get(&style).map(Vec::as_slice)
    }

    pub fn engaged_styles(&self) -> Vec<usize> {
        self.residual.keys().copied().collect()
    }

    fn ensure_open(&self) -> Result<()> {
        if self.open {
            Ok(())
        } else {
            Err(Error::Lifecycle("stream session is closed".into()))
        }
    }
}

fn snapshot(states: &[LstmState<'_>]) -> StackState {
    states.iter().map(|s| (s.h.value(), s.c.value())).collect()
}

fn restore<'g>(graph: &'g Graph, states: &StackState) -> Vec<LstmState<'g>> {
    states
        .iter()
        .map(|(h, c)| LstmState {
            h: graph.constant(h.clone()),
            c: graph.constant(c.clone()),
        })
        .collect()
}

impl Generator {
    fn initial_stack(&self, branch: usize, content: usize) -> StackState {
        let graph = Graph::new();
        let p = self.params().bind(&graph, false);
        snapshot(&self.initial_states(&p, branch, &[content]))
    }

    pub fn open_session(
        &self,
        source_style: usize,
        content: usize,
        target: TargetSpec,
    ) -> Result<StreamSession> {
        self.validate_row(&RowCondition {
            source_style,
            content,
            target,
        })?;
        let residual = target
            .residual_weights()
            .into_iter()
            .map(|(s, _)| (s, self.initial_stack(s, 0)))
            .collect();
        Ok(StreamSession {
            source_style,
            content,
            target,
            frame_index: 0,
            open: true,
            neutral: self.initial_stack(NEUTRAL, content),
            residual,
        })
    }

    /// Changes the target from the next frame on. On error the session is
    /// left untouched.
    pub fn set_target(&self, session: &mut StreamSession, target: TargetSpec) -> Result<()> {
        session.ensure_open()?;
        target.validate(self.config().styles)?;
        let engaged: Vec<usize> = target
            .residual_weights()
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        session.residual.retain(|s, _| engaged.contains(s));
        for s in engaged {
            if !session.residual.contains_key(&s) {
                let init = self.initial_stack(s, 0);
                session.residual.insert(s, init);
            }
        }
        session.target = target;
        Ok(())
    }

    /// Latent code of one frame.
    pub fn encode(
        &self,
        frame: &MotionFrame,
        source_style: usize,
        content: usize,
    ) -> Result<Vec<f64>> {
        self.validate_row(&RowCondition {
            source_style,
            content,
            target: TargetSpec::style(source_style),
        })?;
        let graph = Graph::new();
        let p = self.params().bind(&graph, false);
        let z = self.encode_frame(&p, frame, source_style, content)?;
        Ok(z.value().iter().copied().collect())
    }

    fn encode_frame<'g>(
        &self,
        p: &Bound<'g>,
        frame: &MotionFrame,
        source_style: usize,
        content: usize,
    ) -> Result<Var<'g>> {
        let x =
            super::generator::frames_to_matrix(std::slice::from_ref(frame), self.config().joints)?;
        let cond = self.encoder_condition(source_style, content);
        let graph = p.graph();
        let cond = graph.constant(Mat::from_shape_vec((1, cond.len()), cond).expect("row"));
        Ok(self.encode_var(p, graph.constant(x), cond))
    }

    fn recurrent_var<'g>(&self, p: &Bound<'g>, z: Var<'g>, session: &mut StreamSession) -> Var<'g> {
        let graph = p.graph();
        let mut neutral = restore(graph, &session.neutral);
        let mut zp = self.branch_step(p, NEUTRAL, z, &mut neutral);
        let weights = session.target.residual_weights();
        let mut updated = Vec::with_capacity(weights.len());
        for (style, w) in weights {
            let mut states = restore(graph, &session.residual[&style]);
            let mut out = self.branch_step(p, style, z, &mut states);
            if w != 1.0 {
                out = out.mul_col(graph.scalar(w));
            }
            zp = zp + out;
            updated.push((style, snapshot(&states)));
        }
        session.neutral = snapshot(&neutral);
        for (style, s) in updated {
            session.residual.insert(style, s);
        }
        zp
    }

    /// Advances every engaged branch by one step and returns the combined
    /// latent `r0(z) + sum_k w_k r_k(z)`.
    pub fn recurrent_step(&self, z: &[f64], session: &mut StreamSession) -> Result<Vec<f64>> {
        session.ensure_open()?;
        let h = self.config().hidden;
        if z.len() != h {
            return Err(Error::shape(format!(
                "latent of length {}, expected {h}",
                z.len()
            )));
        }
        let graph = Graph::new();
        let p = self.params().bind(&graph, false);
        let z = graph.constant(Mat::from_shape_vec((1, h), z.to_vec()).expect("row"));
        let zp = self.recurrent_var(&p, z, session);
        Ok(zp.value().iter().copied().collect())
    }

    /// Decodes a combined latent under a target.
    pub fn decode(
        &self,
        z: &[f64],
        target: &TargetSpec,
        root_translation: [f64; 3],
    ) -> Result<MotionFrame> {
        target.validate(self.config().styles)?;
        let h = self.config().hidden;
        if z.len() != h {
            return Err(Error::shape(format!(
                "latent of length {}, expected {h}",
                z.len()
            )));
        }
        let graph = Graph::new();
        let p = self.params().bind(&graph, false);
        let z = graph.constant(Mat::from_shape_vec((1, h), z.to_vec()).expect("row"));
        let out = self.decode_var(&p, z, self.decoder_condition_var(&graph, target));
        MotionFrame::from_features(
            &out.value().iter().copied().collect::<Vec<_>>(),
            self.config().joints,
            root_translation,
        )
    }

    fn decoder_condition_var<'g>(&self, graph: &'g Graph, target: &TargetSpec) -> Var<'g> {
        let c = target.decoder_condition(self.config().styles);
        graph.constant(Mat::from_shape_vec((1, c.len()), c).expect("row"))
    }

    /// Stylizes one frame using only that frame and the session state.
    pub fn transfer_frame(
        &self,
        session: &mut StreamSession,
        frame: &MotionFrame,
    ) -> Result<MotionFrame> {
        session.ensure_open()?;
        let graph = Graph::new();
        let p = self.params().bind(&graph, false);
        let z = self.encode_frame(&p, frame, session.source_style, session.content)?;
        let zp = self.recurrent_var(&p, z, session);
        let out = self.decode_var(&p, zp, self.decoder_condition_var(&graph, &session.target));
        session.frame_index += 1;
        let row: Vec<f64> = out.value().iter().copied().collect();
        MotionFrame::from_features(&row, self.config().joints, frame.root_translation)
    }
}
