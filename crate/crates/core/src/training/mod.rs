//! Loss terms, task sampling and the alternating least-squares GAN loop.

mod losses;
mod tasks;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use losses::{loss_adv, loss_cri, loss_gp, loss_per, loss_quat, loss_rec};
pub use tasks::{sample_tasks, TaskKind, TrainingTask};

use crate::io::MotionWindow;
use crate::model::{Generator, ModelConfig, RowCondition, TargetSpec};
use crate::motion::Skeleton;
use crate::nn::{Adam, Bound, Graph, Mat, Var};
use crate::supervision::{windows_to_matrix, Classifier, Discriminator, SupervisionConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_adv: f64,
    pub w_per: f64,
    pub w_gp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_adv: 1.0,
            w_per: 0.1,
            w_gp: 128.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_adv, self.w_per, self.w_gp]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
        {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )))
        }
    }
}

/// Ablation switches. `no_attention` only matters when the critic is built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub no_adv: bool,
    pub no_per: bool,
    pub no_attention: bool,
    pub zero_init_states: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub critic: SupervisionConfig,
    pub epochs: usize,
    /// Windows per batch; each window yields two tasks.
    pub batch_size: usize,
    pub lr_gen: f64,
    pub lr_dis: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub ablation: Ablation,
    pub clip_norm: Option<f64>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Epochs between intermediate checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub log_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(joints: usize, styles: usize, contents: usize) -> Self {
        Self {
            model: ModelConfig::new(joints, styles, contents),
            critic: SupervisionConfig::new(joints, styles, contents),
            epochs: 2000,
            batch_size: 16,
            lr_gen: 1e-4,
            lr_dis: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            weights: LossWeights::default(),
            ablation: Ablation::default(),
            clip_norm: None,
            checkpoint_dir: None,
            checkpoint_every: 0,
            log_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.critic.validate()?;
        self.weights.validate()?;
        if self.batch_size == 0 || !(self.lr_gen > 0.0) || !(self.lr_dis > 0.0) {
            return Err(Error::Range(
                "batch size and learning rates must be positive".into(),
            ));
        }
        let (m, c) = (&self.model, &self.critic);
        if (m.joints, m.styles, m.contents, m.window) != (c.joints, c.styles, c.contents, c.window)
        {
            return Err(Error::Contract(
                "generator and critic disagree on joints, labels or window".into(),
            ));
        }
        Ok(())
    }
}

/// Per-batch (or per-epoch mean) loss values. Components are batch
/// averages, so `L_gen = L_rec + w_adv L_adv + w_per L_per` and
/// `L_dis = L_cri + w_gp L_gp`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    #[serde(rename = "L_rec")]
    pub rec: f64,
    #[serde(rename = "L_adv")]
    pub adv: f64,
    #[serde(rename = "L_per")]
    pub per: f64,
    #[serde(rename = "L_cri")]
    pub cri: f64,
    #[serde(rename = "L_gp")]
    pub gp: f64,
    #[serde(rename = "L_gen")]
    pub gen: f64,
    #[serde(rename = "L_dis")]
    pub dis: f64,
}

impl LossBundle {
    fn terms(&self) -> [(&'static str, f64); 7] {
        [
            ("L_rec", self.rec),
            ("L_adv", self.adv),
            ("L_per", self.per),
            ("L_cri", self.cri),
            ("L_gp", self.gp),
            ("L_gen", self.gen),
            ("L_dis", self.dis),
        ]
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        self.terms()
            .into_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(n, _)| n)
    }

    fn accumulate(&mut self, other: &LossBundle, scale: f64) {
        self.rec += other.rec * scale;
        self.adv += other.adv * scale;
        self.per += other.per * scale;
        self.cri += other.cri * scale;
        self.gp += other.gp * scale;
        self.gen += other.gen * scale;
        self.dis += other.dis * scale;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBundle,
}

/// Generator output for a batch of tasks, rows in task order.
pub struct BatchForward<'g> {
    pub input: Var<'g>,
    pub output: Var<'g>,
    window: usize,
    reconstruction: Vec<usize>,
    transfer: Vec<usize>,
}

impl<'g> BatchForward<'g> {
    fn rows(&self, tasks: &[usize]) -> Arc<Vec<usize>> {
        let t = self.window;
        Arc::new(tasks.iter().flat_map(|&i| i * t..(i + 1) * t).collect())
    }

    pub fn transfer_output(&self) -> Var<'g> {
        self.output.gather_rows(self.rows(&self.transfer))
    }
}

/// Unrolls the generator over every task window.
pub fn generator_forward<'g>(
    generator: &Generator,
    p: &Bound<'g>,
    tasks: &[TrainingTask<'_>],
) -> Result<BatchForward<'g>> {
    if tasks.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let window = generator.config().window;
    let refs: Vec<&MotionWindow> = tasks.iter().map(|t| t.window).collect();
    let x = windows_to_matrix(&refs, generator.config().joints, window)?;
    let rows: Vec<RowCondition> = tasks
        .iter()
        .map(|t| RowCondition {
            source_style: t.window.style,
            content: t.window.content,
            target: TargetSpec::style(t.target_style),
        })
        .collect();
    let input = p.graph().constant(x);
    let output = generator.unroll(p, input, window, &rows)?;
    let (mut reconstruction, mut transfer) = (Vec::new(), Vec::new());
    for (i, t) in tasks.iter().enumerate() {
        t.validate()?;
        match t.kind {
            TaskKind::Reconstruction => reconstruction.push(i),
            TaskKind::Transfer => transfer.push(i),
        }
    }
    Ok(BatchForward {
        input,
        output,
        window,
        reconstruction,
        transfer,
    })
}

fn transfer_labels(
    tasks: &[TrainingTask<'_>],
    idx: &[usize],
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let source = idx.iter().map(|&i| tasks[i].window.style).collect();
    let target = idx.iter().map(|&i| tasks[i].target_style).collect();
    let content = idx.iter().map(|&i| tasks[i].window.content).collect();
    (source, target, content)
}

/// `(sum L_rec + w_adv L_adv + w_per L_per) / N` with the reconstruction
/// term over reconstruction tasks and the other two over transfer tasks.
/// Disabled terms are skipped (and their model may be `None`).
pub fn generator_loss<'g>(
    fwd: &BatchForward<'g>,
    tasks: &[TrainingTask<'_>],
    critic: Option<(&Discriminator, &Bound<'g>)>,
    classifier: Option<(&Classifier, &Bound<'g>)>,
    weights: &LossWeights,
    ablation: &Ablation,
) -> Result<(Var<'g>, LossBundle)> {
    let graph = fwd.output.graph();
    let n = tasks.len() as f64;
    let joints = fwd.input.shape().1 / 10;
    let mut bundle = LossBundle::default();

    let mut total = graph.scalar(0.0);
    if !fwd.reconstruction.is_empty() {
        let rows = fwd.rows(&fwd.reconstruction);
        let rec = loss_rec(
            fwd.input.gather_rows(rows.clone()),
            fwd.output.gather_rows(rows),
            joints,
        )? * (1.0 / n);
        bundle.rec = rec.item();
        total = total + rec;
    }
    if !fwd.transfer.is_empty() {
        let fake = fwd.transfer_output();
        let (_, target, content) = transfer_labels(tasks, &fwd.transfer);
        if !ablation.no_adv {
            let (dis, dp) = critic
                .ok_or_else(|| Error::Contract("adversarial term needs the critic".into()))?;
            let adv = loss_adv(dis.score(dp, fake, &target, &content)?) * (1.0 / n);
            bundle.adv = adv.item();
            total = total + adv * weights.w_adv;
        }
        if !ablation.no_per {
            let (cls, cp) = classifier
                .ok_or_else(|| Error::Contract("perceptual term needs the classifier".into()))?;
            let batch = fwd.transfer.len();
            let real = fwd.input.gather_rows(fwd.rows(&fwd.transfer));
            let phi = cls.content_feature_rows(cp, real, batch)?;
            let phi_fake = cls.content_feature_rows(cp, fake, batch)?;
            let per = loss_per(graph.constant(phi.value()), phi_fake)? * (1.0 / n);
            bundle.per = per.item();
            total = total + per * weights.w_per;
        }
    }
    bundle.gen = total.item();
    Ok((total, bundle))
}

/// `(L_cri + w_gp L_gp) / N_transfer`. Reals are the source windows of the
/// transfer tasks under their own labels; fakes are the matching rows of
/// `generated` (the full batch output) under the target labels.
pub fn discriminator_loss<'g>(
    dis: &Discriminator,
    dp: &Bound<'g>,
    tasks: &[TrainingTask<'_>],
    generated: &Mat,
    w_gp: f64,
) -> Result<(Var<'g>, LossBundle)> {
    let graph = dp.graph();
    let window = dis.config().window;
    let joints = dis.config().joints;
    let idx: Vec<usize> = (0..tasks.len())
        .filter(|&i| tasks[i].kind == TaskKind::Transfer)
        .collect();
    if idx.is_empty() {
        return Err(Error::Contract("critic batch has no transfer tasks".into()));
    }
    if generated.dim() != (tasks.len() * window, 10 * joints) {
        return Err(Error::shape(format!(
            "generated batch {:?}",
            generated.dim()
        )));
    }
    let (source, target, content) = transfer_labels(tasks, &idx);
    let refs: Vec<&MotionWindow> = idx.iter().map(|&i| tasks[i].window).collect();
    let real = windows_to_matrix(&refs, joints, window)?;
    let real_motion = graph.variable(real.slice(ndarray::s![.., 4 * joints..]).to_owned());
    let fake_rows: Vec<usize> = idx
        .iter()
        .flat_map(|&i| i * window..(i + 1) * window)
        .collect();
    let fake = graph.constant(
        generated
            .select(ndarray::Axis(0), &fake_rows)
            .slice(ndarray::s![.., 4 * joints..])
            .to_owned(),
    );

    let n = idx.len() as f64;
    let real_scores = dis.score_motion(dp, real_motion, &source, &content)?;
    let fake_scores = dis.score_motion(dp, fake, &target, &content)?;
    let cri = loss_cri(real_scores, fake_scores)? * (1.0 / n);
    let mut bundle = LossBundle {
        cri: cri.item(),
        ..Default::default()
    };
    let mut total = cri;
    if w_gp > 0.0 {
        let gp = loss_gp(real_scores, real_motion)? * (1.0 / n);
        bundle.gp = gp.item();
        total = total + gp * w_gp;
    }
    bundle.dis = total.item();
    Ok((total, bundle))
}

/// Generator, critic and their optimizers. The classifier is borrowed and
/// never updated.
pub struct Trainer<'c> {
    config: TrainConfig,
    generator: Generator,
    discriminator: Discriminator,
    classifier: Option<&'c Classifier>,
    opt_gen: Adam,
    opt_dis: Adam,
    epoch: usize,
}

impl<'c> Trainer<'c> {
    pub fn new(
        skeleton: Arc<Skeleton>,
        config: TrainConfig,
        classifier: Option<&'c Classifier>,
    ) -> Result<Self> {
        config.validate()?;
        if !config.ablation.no_per {
            let cls = classifier.ok_or_else(|| {
                Error::Contract("perceptual loss needs a pretrained classifier".into())
            })?;
            let c = cls.config();
            if (c.joints, c.window) != (config.model.joints, config.model.window) {
                return Err(Error::Contract(
                    "classifier was trained for a different joint count or window".into(),
                ));
            }
        }
        let mut generator = Generator::new(config.model.clone(), skeleton, config.seed)?;
        let discriminator = Discriminator::new(
            config.critic.clone(),
            config.ablation.no_attention,
            config.seed.wrapping_add(1),
        )?;
        let mut opt_gen = Adam::new(config.lr_gen, config.beta1, config.beta2);
        let mut opt_dis = Adam::new(config.lr_dis, config.beta1, config.beta2);
        opt_gen.clip_norm = config.clip_norm;
        opt_dis.clip_norm = config.clip_norm;
        if config.ablation.zero_init_states {
            for id in generator.initial_state_params() {
                generator.params_mut().get_mut(id).fill(0.0);
                opt_gen.freeze(id);
            }
        }
        Ok(Self {
            config,
            generator,
            discriminator,
            classifier,
            opt_gen,
            opt_dis,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn into_parts(self) -> (Generator, Discriminator) {
        (self.generator, self.discriminator)
    }

    /// One critic step followed by one generator step on the same tasks.
    pub fn train_batch(&mut self, tasks: &[TrainingTask<'_>]) -> Result<LossBundle> {
        let ablation = self.config.ablation;
        let weights = self.config.weights;
        let graph = Graph::new();
        let gp = self.generator.params().bind(&graph, true);
        let fwd = generator_forward(&self.generator, &gp, tasks)?;

        let mut bundle = LossBundle::default();
        if !ablation.no_adv {
            let dgraph = Graph::new();
            let dp = self.discriminator.params().bind(&dgraph, true);
            let (loss, b) = discriminator_loss(
                &self.discriminator,
                &dp,
                tasks,
                &fwd.output.value(),
                weights.w_gp,
            )?;
            if let Some(term) = b.non_finite() {
                return Err(Error::Numeric(term.to_string()));
            }
            let grads = dp.gradients(&dgraph.backward(loss)?);
            self.opt_dis.step(self.discriminator.params_mut(), &grads);
            bundle = b;
        }

        let dp = self.discriminator.params().bind(&graph, false);
        let cp = self.classifier.map(|c| (c, c.params().bind(&graph, false)));
        let (loss, b) = generator_loss(
            &fwd,
            tasks,
            Some((&self.discriminator, &dp)),
            cp.as_ref().map(|(c, p)| (*c, p)),
            &weights,
            &ablation,
        )?;
        if let Some(term) = b.non_finite() {
            return Err(Error::Numeric(term.to_string()));
        }
        let grads = gp.gradients(&graph.backward(loss)?);
        self.opt_gen.step(self.generator.params_mut(), &grads);
        bundle.rec = b.rec;
        bundle.adv = b.adv;
        bundle.per = b.per;
        bundle.gen = b.gen;
        Ok(bundle)
    }

    /// One pass over `windows`; returns the mean of the batch bundles.
    pub fn train_epoch(&mut self, windows: &[MotionWindow]) -> Result<EpochRecord> {
        let seed = self
            .config
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.epoch as u64);
        let batches = sample_tasks(windows, self.config.batch_size, seed)?;
        let mut mean = LossBundle::default();
        let scale = 1.0 / batches.len() as f64;
        for (b, tasks) in batches.iter().enumerate() {
            let bundle = self.train_batch(tasks).map_err(|e| match e {
                Error::Numeric(m) => {
                    Error::Numeric(format!("{m} at epoch {} batch {b}", self.epoch))
                }
                other => other,
            })?;
            mean.accumulate(&bundle, scale);
        }
        let record = EpochRecord {
            epoch: self.epoch,
            losses: mean,
        };
        self.epoch += 1;
        Ok(record)
    }
}

pub struct TrainOutcome {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub log: Vec<EpochRecord>,
}

/// Runs `config.epochs` epochs, writing the NDJSON log and checkpoints when
/// configured. `on_epoch` sees every record as it is produced.
pub fn train(
    skeleton: Arc<Skeleton>,
    windows: &[MotionWindow],
    classifier: Option<&Classifier>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let checksum = classifier.map(|c| c.params().checksum());
    let mut trainer = Trainer::new(skeleton, config.clone(), classifier)?;
    let mut log_file = match &config.log_path {
        Some(p) => Some(BufWriter::new(
            File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let record = trainer.train_epoch(windows)?;
        if let (Some(f), Some(p)) = (log_file.as_mut(), &config.log_path) {
            let line = serde_json::to_string(&record)?;
            writeln!(f, "{line}").map_err(|e| Error::io(p, e))?;
        }
        on_epoch(&record);
        log.push(record);
        let done = trainer.epochs_done();
        if let (Some(dir), true) = (&config.checkpoint_dir, config.checkpoint_every > 0) {
            if done % config.checkpoint_every == 0 && done < config.epochs {
                trainer
                    .generator
                    .save(dir.join(format!("generator-epoch{done}.ckpt")))?;
                trainer
                    .discriminator
                    .save(dir.join(format!("discriminator-epoch{done}.ckpt")))?;
            }
        }
    }
    if let (Some(f), Some(p)) = (log_file.as_mut(), &config.log_path) {
        f.flush().map_err(|e| Error::io(p, e))?;
    }
    if let Some(dir) = &config.checkpoint_dir {
        trainer.generator.save(dir.join("generator.ckpt"))?;
        trainer.discriminator.save(dir.join("discriminator.ckpt"))?;
    }
    if let (Some(before), Some(c)) = (checksum, classifier) {
        debug_assert_eq!(before, c.params().checksum());
    }
    let (generator, discriminator) = trainer.into_parts();
    Ok(TrainOutcome {
        generator,
        discriminator,
        log,
    })
}
