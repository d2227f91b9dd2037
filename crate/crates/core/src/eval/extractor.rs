use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::io::MotionWindow;
use crate::model::kinematics::NormalizeQuaternions;
use crate::nn::{
    seeded_rng, Adam, Bound, Checkpoint, Conv1d, ConvGeometry, ConvTranspose1d, Graph, Mat,
    ParamStore, Var,
};
use crate::supervision::windows_to_matrix;
use crate::training::loss_quat;
use crate::{Error, Result};

pub const FMD_EXTRACTOR_KIND: &str = "fmd_extractor";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmdConfig {
    pub joints: usize,
    pub window: usize,
    pub channels: [usize; 2],
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl FmdConfig {
    pub fn new(joints: usize) -> Self {
        Self {
            joints,
            window: 24,
            channels: [64, 96],
            kernel: 4,
            stride: 2,
            padding: 1,
        }
    }

    fn geometries(&self) -> [ConvGeometry; 2] {
        let g = |i, o| ConvGeometry {
            in_channels: i,
            out_channels: o,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
        };
        [
            g(4 * self.joints, self.channels[0]),
            g(self.channels[0], self.channels[1]),
        ]
    }

    fn lengths(&self) -> Result<[usize; 3]> {
        let [a, b] = self.geometries();
        let l1 = a.output_len(self.window)?;
        let l2 = b.output_len(l1)?;
        Ok([self.window, l1, l2])
    }

    /// Width of the flattened feature of one window.
    pub fn feature_dim(&self) -> Result<usize> {
        Ok(self.lengths()?[2] * self.channels[1])
    }
}

/// Denoising autoencoder over joint rotations; the last encoder activation,
/// flattened, is the feature for the Fréchet distance.
pub struct FmdExtractor {
    config: FmdConfig,
    params: ParamStore,
    encoder: [Conv1d; 2],
    decoder: [ConvTranspose1d; 2],
}

impl FmdExtractor {
    pub fn new(config: FmdConfig, seed: u64) -> Result<Self> {
        config.lengths()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        let [g0, g1] = config.geometries();
        let encoder = [
            Conv1d::new(&mut params, &mut rng, "fmd.enc0", g0),
            Conv1d::new(&mut params, &mut rng, "fmd.enc1", g1),
        ];
        let decoder = [
            ConvTranspose1d::new(&mut params, &mut rng, "fmd.dec0", g1),
            ConvTranspose1d::new(&mut params, &mut rng, "fmd.dec1", g0),
        ];
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &FmdConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn encode_var<'g>(&self, p: &Bound<'g>, rotations: Var<'g>, batch: usize) -> Result<Var<'g>> {
        let [l0, l1, _] = self.config.lengths()?;
        let (h, _) = self.encoder[0].forward(p, rotations, batch, l0)?;
        let (h, _) = self.encoder[1].forward(p, h.relu(), batch, l1)?;
        Ok(h.relu())
    }

    fn reconstruct_var<'g>(
        &self,
        p: &Bound<'g>,
        rotations: Var<'g>,
        batch: usize,
    ) -> Result<Var<'g>> {
        let [l0, l1, _] = self.config.lengths()?;
        let h = self.encode_var(p, rotations, batch)?;
        let h = self.decoder[0].forward(p, h, batch, l1)?.relu();
        let out = self.decoder[1].forward(p, h, batch, l0)?;
        Ok(NormalizeQuaternions::apply(out))
    }

    fn rotations(&self, windows: &[&MotionWindow]) -> Result<Mat> {
        let x = windows_to_matrix(windows, self.config.joints, self.config.window)?;
        Ok(x.slice(ndarray::s![.., ..4 * self.config.joints])
            .to_owned())
    }

    /// One flattened feature row per window.
    pub fn features(&self, windows: &[&MotionWindow]) -> Result<Mat> {
        let dim = self.config.feature_dim()?;
        let mut out = Mat::zeros((windows.len(), dim));
        for (k, chunk) in windows.chunks(128).enumerate() {
            let graph = Graph::new();
            let p = self.params.bind(&graph, false);
            let h = self
                .encode_var(&p, graph.constant(self.rotations(chunk)?), chunk.len())?
                .value();
            let flat = h.as_slice().expect("standard layout");
            for (i, row) in flat.chunks_exact(dim).enumerate() {
                out.row_mut(k * 128 + i)
                    .assign(&ndarray::ArrayView1::from(row));
            }
        }
        Ok(out)
    }

    /// Denoised rotations, `(N*T) x 4J`.
    pub fn denoise(&self, rotations: &Mat, batch: usize) -> Result<Mat> {
        let graph = Graph::new();
        let p = self.params.bind(&graph, false);
        Ok((*self
            .reconstruct_var(&p, graph.constant(rotations.clone()), batch)?
            .value())
        .clone())
    }

    /// `(noisy error, denoised error)`: mean joint angle to the clean
    /// rotations before and after denoising.
    pub fn denoising_errors(
        &self,
        windows: &[MotionWindow],
        noise_std: f64,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let refs: Vec<&MotionWindow> = windows.iter().collect();
        let clean = self.rotations(&refs)?;
        let noisy = add_rotation_noise(&clean, noise_std, &mut seeded_rng(seed))?;
        let denoised = self.denoise(&noisy, windows.len())?;
        let g = Graph::new();
        let err =
            |m: &Mat| loss_quat(g.constant(clean.clone()), g.constant(m.clone())).map(|v| v.item());
        Ok((err(&noisy)?, err(&denoised)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            FMD_EXTRACTOR_KIND,
            serde_json::json!({ "config": self.config }),
        );
        ck.push_store("fmd.", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(FMD_EXTRACTOR_KIND)?;
        let config = serde_json::from_value(ck.meta["config"].clone())?;
        let mut e = Self::new(config, 0)?;
        ck.load_store("fmd.", &mut e.params)?;
        Ok(e)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Adds `N(0, std)` to every component and renormalizes each quaternion.
pub fn add_rotation_noise(rotations: &Mat, std: f64, rng: &mut impl rand::Rng) -> Result<Mat> {
    let normal =
        Normal::new(0.0, std).map_err(|e| Error::Range(format!("noise std {std}: {e}")))?;
    let mut out = rotations.mapv(|v| v + normal.sample(rng));
    for mut row in out.outer_iter_mut() {
        for q in row.as_slice_mut().expect("row").chunks_exact_mut(4) {
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            q.iter_mut().for_each(|v| *v /= n);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmdTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for FmdTraining {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            noise_std: 0.03,
            seed: 0,
        }
    }
}

/// Trains the denoising autoencoder with the joint-angle loss.
pub fn train_fmd_extractor(
    windows: &[MotionWindow],
    config: FmdConfig,
    training: &FmdTraining,
) -> Result<FmdExtractor> {
    if windows.is_empty() {
        return Err(Error::Coverage(
            "no windows to train the feature extractor on".into(),
        ));
    }
    if training.batch_size == 0 || !(training.lr > 0.0) {
        return Err(Error::Range(
            "extractor batch size and learning rate must be positive".into(),
        ));
    }
    let mut model = FmdExtractor::new(config, training.seed)?;
    let mut adam = Adam::new(training.lr, 0.9, 0.999);
    let mut rng = seeded_rng(training.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..training.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(training.batch_size) {
            let batch: Vec<&MotionWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let clean = model.rotations(&batch)?;
            let noisy = add_rotation_noise(&clean, training.noise_std, &mut rng)?;
            let graph = Graph::new();
            let p = model.params.bind(&graph, true);
            let recon = model.reconstruct_var(&p, graph.constant(noisy), batch.len())?;
            let loss = loss_quat(graph.constant(clean), recon)?;
            if !loss.item().is_finite() {
                return Err(Error::Numeric(format!("extractor loss at epoch {epoch}")));
            }
            let grads = p.gradients(&graph.backward(loss)?);
            adam.step(&mut model.params, &grads);
        }
    }
    Ok(model)
}
