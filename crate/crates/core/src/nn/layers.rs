use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{CellMap, Graph, Var, NO_CELL};
use super::params::{Bound, ParamId, ParamStore};
use crate::{Error, Result};

/// Negative slope of every leaky ReLU in the crate.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Epsilon of every instance normalization in the crate.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<'g>(self, x: Var<'g>) -> Var<'g> {
        match self {
            Activation::None => x,
            Activation::Relu => x.relu(),
            Activation::LeakyRelu => x.leaky_relu(LEAKY_SLOPE),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// `act(x W + b)` with `W: I x O`, `b: 1 x O`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        inputs: usize,
        outputs: usize,
        activation: Activation,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.w"), (inputs, outputs), inputs, rng);
        let bias = store.add_uniform(format!("{name}.b"), (1, outputs), inputs, rng);
        Self {
            weight,
            bias,
            activation,
            inputs,
            outputs,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Var<'g> {
        let y = x.matmul(p.get(self.weight)).add_row(p.get(self.bias));
        self.activation.apply(y)
    }
}

/// Checked dense layer on explicit tensors.
pub fn dense<'g>(x: Var<'g>, w: Var<'g>, b: Var<'g>, activation: Activation) -> Result<Var<'g>> {
    let (_, i) = x.shape();
    let (wi, o) = w.shape();
    if i != wi || b.shape() != (1, o) {
        return Err(Error::shape(format!(
            "dense: x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    Ok(activation.apply(x.matmul(w).add_row(b)))
}

/// Hidden and cell state of one LSTM layer, one row per batch element.
#[derive(Clone, Copy, Debug)]
pub struct LstmState<'g> {
    pub h: Var<'g>,
    pub c: Var<'g>,
}

/// LSTM cell with gate order `[i, f, g, o]` in the columns of `W_x: I x 4H`,
/// `W_h: H x 4H` and `b: 1 x 4H`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input_weight: ParamId,
    pub hidden_weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        inputs: usize,
        hidden: usize,
    ) -> Self {
        let fan_in = inputs + hidden;
        Self {
            input_weight: store.add_uniform(
                format!("{name}.wx"),
                (inputs, 4 * hidden),
                fan_in,
                rng,
            ),
            hidden_weight: store.add_uniform(
                format!("{name}.wh"),
                (hidden, 4 * hidden),
                fan_in,
                rng,
            ),
            bias: store.add_uniform(format!("{name}.b"), (1, 4 * hidden), fan_in, rng),
            inputs,
            hidden,
        }
    }

    pub fn step<'g>(&self, p: &Bound<'g>, x: Var<'g>, state: LstmState<'g>) -> LstmState<'g> {
        lstm_step(
            x,
            state,
            p.get(self.input_weight),
            p.get(self.hidden_weight),
            p.get(self.bias),
        )
        .expect("LSTM shapes are fixed at construction")
    }
}

/// One LSTM step: `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_step<'g>(
    x: Var<'g>,
    state: LstmState<'g>,
    wx: Var<'g>,
    wh: Var<'g>,
    b: Var<'g>,
) -> Result<LstmState<'g>> {
    let hidden = state.h.shape().1;
    if state.c.shape() != state.h.shape()
        || wx.shape() != (x.shape().1, 4 * hidden)
        || wh.shape() != (hidden, 4 * hidden)
        || b.shape() != (1, 4 * hidden)
        || x.shape().0 != state.h.shape().0
    {
        return Err(Error::shape(format!(
            "lstm: x {:?}, h {:?}, c {:?}, Wx {:?}, Wh {:?}, b {:?}",
            x.shape(),
            state.h.shape(),
            state.c.shape(),
            wx.shape(),
            wh.shape(),
            b.shape()
        )));
    }
    let gates = (x.matmul(wx) + state.h.matmul(wh)).add_row(b);
    let i = gates.slice_cols(0, hidden).sigmoid();
    let f = gates.slice_cols(hidden, hidden).sigmoid();
    let g = gates.slice_cols(2 * hidden, hidden).tanh();
    let o = gates.slice_cols(3 * hidden, hidden).sigmoid();
    let c = f * state.c + i * g;
    let h = o * c.tanh();
    Ok(LstmState { h, c })
}

/// Temporal convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    /// `floor((T + 2p - K) / s) + 1`.
    pub fn output_len(&self, len: usize) -> Result<usize> {
        let padded = len + 2 * self.padding;
        if self.stride == 0 || self.kernel == 0 || padded < self.kernel {
            return Err(Error::shape(format!(
                "conv1d: length {len} with kernel {}, stride {}, padding {}",
                self.kernel, self.stride, self.padding
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Map from `(N*T) x C_in` to the unfolded `(N*T') x (K*C_in)` layout
    /// where column `k*C_in + c` holds input time `t'*s + k - p`.
    pub fn unfold_map(&self, batch: usize, len: usize) -> Result<Arc<CellMap>> {
        let out_len = self.output_len(len)?;
        let c = self.in_channels;
        let k = self.kernel;
        let mut sources = Vec::with_capacity(batch * out_len * k * c);
        for n in 0..batch {
            for t_out in 0..out_len {
                for kk in 0..k {
                    let t = (t_out * self.stride + kk) as isize - self.padding as isize;
                    for ch in 0..c {
                        sources.push(if t >= 0 && (t as usize) < len {
                            ((n * len + t as usize) * c + ch) as u32
                        } else {
                            NO_CELL
                        });
                    }
                }
            }
        }
        Ok(Arc::new(CellMap {
            sources,
            input_shape: (batch * len, c),
            output_shape: (batch * out_len, k * c),
        }))
    }
}

/// Cross-correlation over time for a batch stored as `(N*T) x C_in`.
/// Weights are `(K*C_in) x C_out` matching the unfolded column order.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geometry: ConvGeometry,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        geometry: ConvGeometry,
    ) -> Self {
        let fan_in = geometry.kernel * geometry.in_channels;
        Self {
            weight: store.add_uniform(
                format!("{name}.w"),
                (fan_in, geometry.out_channels),
                fan_in,
                rng,
            ),
            bias: store.add_uniform(format!("{name}.b"), (1, geometry.out_channels), fan_in, rng),
            geometry,
        }
    }

    /// Returns the output and its length per sample.
    pub fn forward<'g>(
        &self,
        p: &Bound<'g>,
        x: Var<'g>,
        batch: usize,
        len: usize,
    ) -> Result<(Var<'g>, usize)> {
        conv1d(
            x,
            p.get(self.weight),
            p.get(self.bias),
            &self.geometry,
            batch,
            len,
        )
    }
}

pub fn conv1d<'g>(
    x: Var<'g>,
    weight: Var<'g>,
    bias: Var<'g>,
    geometry: &ConvGeometry,
    batch: usize,
    len: usize,
) -> Result<(Var<'g>, usize)> {
    if x.shape() != (batch * len, geometry.in_channels) {
        return Err(Error::shape(format!(
            "conv1d input {:?}, expected ({}, {})",
            x.shape(),
            batch * len,
            geometry.in_channels
        )));
    }
    if weight.shape()
        != (
            geometry.kernel * geometry.in_channels,
            geometry.out_channels,
        )
        || bias.shape() != (1, geometry.out_channels)
    {
        return Err(Error::shape(format!(
            "conv1d weight {:?} / bias {:?} do not match {geometry:?}",
            weight.shape(),
            bias.shape()
        )));
    }
    let map = geometry.unfold_map(batch, len)?;
    let out_len = map.output_shape.0 / batch;
    let cols = x.gather(map);
    Ok((cols.matmul(weight).add_row(bias), out_len))
}

/// Adjoint-geometry convolution: maps length `T'` back to the `T` for which
/// `geometry.output_len(T) == T'`. Weights are `C_out_of_forward x
/// (K*C_in_of_forward)`; `geometry` describes the forward convolution being
/// transposed.
#[derive(Clone, Debug)]
pub struct ConvTranspose1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub geometry: ConvGeometry,
}

impl ConvTranspose1d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        geometry: ConvGeometry,
    ) -> Self {
        let fan_in = geometry.out_channels * geometry.kernel / geometry.stride.max(1);
        Self {
            weight: store.add_uniform(
                format!("{name}.w"),
                (
                    geometry.out_channels,
                    geometry.kernel * geometry.in_channels,
                ),
                fan_in,
                rng,
            ),
            bias: store.add_uniform(format!("{name}.b"), (1, geometry.in_channels), fan_in, rng),
            geometry,
        }
    }

    pub fn forward<'g>(
        &self,
        p: &Bound<'g>,
        x: Var<'g>,
        batch: usize,
        out_len: usize,
    ) -> Result<Var<'g>> {
        let map = self.geometry.unfold_map(batch, out_len)?;
        if x.shape() != (map.output_shape.0, self.geometry.out_channels) {
            return Err(Error::shape(format!(
                "conv_transpose1d input {:?} does not fold to length {out_len}",
                x.shape()
            )));
        }
        let cols = x.matmul(p.get(self.weight));
        Ok(cols.scatter(map).add_row(p.get(self.bias)))
    }
}

/// Per-sample, per-channel normalization over time for `(N*T) x C` input.
/// No learned affine.
pub fn instance_norm<'g>(x: Var<'g>, len: usize, eps: f64) -> Result<Var<'g>> {
    if len < 2 {
        return Err(Error::shape(format!(
            "instance norm over a time axis of length {len}"
        )));
    }
    if x.shape().0 % len != 0 {
        return Err(Error::shape(format!(
            "instance norm: {} rows is not a multiple of {len}",
            x.shape().0
        )));
    }
    let inv_len = 1.0 / len as f64;
    let mean = x.segment_sum_rows(len) * inv_len;
    let centered = x - mean.repeat_rows(len);
    let var = centered.square().segment_sum_rows(len) * inv_len;
    let scale = (var + eps).powf(-0.5);
    Ok(centered * scale.repeat_rows(len))
}

/// Constant one-hot rows.
pub fn one_hot_rows<'g>(graph: &'g Graph, indices: &[usize], width: usize) -> Var<'g> {
    let mut m = super::graph::Mat::zeros((indices.len(), width));
    for (r, &i) in indices.iter().enumerate() {
        m[[r, i]] = 1.0;
    }
    graph.constant(m)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use rand::SeedableRng;

    use super::*;
    use crate::nn::Mat;

    #[test]
    fn dense_examples() {
        let g = Graph::new();
        let x = g.constant(array![[-1.0, 2.0]]);
        let w = g.constant(Array2::eye(2));
        let b = g.constant(array![[0.0, 0.0]]);
        let y = dense(x, w, b, Activation::Relu).unwrap();
        assert_eq!(*y.value(), array![[0.0, 2.0]]);

        let zw = g.constant(Mat::zeros((2, 3)));
        let zb = g.constant(Mat::zeros((1, 3)));
        for act in [
            Activation::None,
            Activation::Relu,
            Activation::LeakyRelu,
            Activation::Tanh,
        ] {
            assert!(dense(x, zw, zb, act)
                .unwrap()
                .value()
                .iter()
                .all(|v| *v == 0.0));
        }

        let y = dense(
            g.constant(array![[-5.0]]),
            g.constant(array![[1.0]]),
            g.constant(array![[0.0]]),
            Activation::LeakyRelu,
        )
        .unwrap();
        assert_eq!(y.item(), -1.0);

        assert!(matches!(
            dense(x, zw, g.constant(Mat::zeros((1, 2))), Activation::None),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn lstm_zero_weights() {
        let g = Graph::new();
        let wx = g.constant(Mat::zeros((3, 8)));
        let wh = g.constant(Mat::zeros((2, 8)));
        let b = g.constant(Mat::zeros((1, 8)));
        let x = g.constant(array![[0.3, -1.0, 2.0]]);
        let zero = LstmState {
            h: g.constant(Mat::zeros((1, 2))),
            c: g.constant(Mat::zeros((1, 2))),
        };
        let s = lstm_step(x, zero, wx, wh, b).unwrap();
        assert!(s
            .h
            .value()
            .iter()
            .chain(s.c.value().iter())
            .all(|v| *v == 0.0));

        let ones = LstmState {
            h: g.constant(Mat::zeros((1, 2))),
            c: g.constant(Mat::ones((1, 2))),
        };
        let s = lstm_step(x, ones, wx, wh, b).unwrap();
        for v in s.c.value().iter() {
            assert_eq!(*v, 0.5);
        }
        for v in s.h.value().iter() {
            assert!((v - 0.5 * 0.5f64.tanh()).abs() < 1e-12);
            assert!((v - 0.23106).abs() < 1e-5);
        }
        let again = lstm_step(x, ones, wx, wh, b).unwrap();
        assert_eq!(*again.h.value(), *s.h.value());
        assert!(lstm_step(x, ones, wh, wh, b).is_err());
    }

    fn conv(x: &[f64], kernel: &[f64], stride: usize, padding: usize) -> Vec<f64> {
        let g = Graph::new();
        let geometry = ConvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel: kernel.len(),
            stride,
            padding,
        };
        let xv = g.constant(Mat::from_shape_vec((x.len(), 1), x.to_vec()).unwrap());
        let w = g.constant(Mat::from_shape_vec((kernel.len(), 1), kernel.to_vec()).unwrap());
        let b = g.constant(Mat::zeros((1, 1)));
        let (y, _) = conv1d(xv, w, b, &geometry, 1, x.len()).unwrap();
        y.value().iter().copied().collect()
    }

    #[test]
    fn conv1d_examples() {
        assert_eq!(conv(&[1.0, 2.0, 3.0], &[1.0, 1.0], 1, 0), vec![3.0, 5.0]);
        assert_eq!(conv(&[1.0, 2.0, 3.0], &[1.0], 1, 0), vec![1.0, 2.0, 3.0]);
        assert_eq!(conv(&[1.0, 2.0, 3.0], &[1.0, 0.0], 2, 0), vec![1.0]);
        let geometry = ConvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel: 5,
            stride: 1,
            padding: 0,
        };
        assert!(geometry.output_len(3).is_err());
    }

    #[test]
    fn default_discriminator_geometry() {
        let mut len = 24;
        for (cin, cout) in [(78, 96), (96, 128), (128, 160)] {
            let geometry = ConvGeometry {
                in_channels: cin,
                out_channels: cout,
                kernel: 4,
                stride: 2,
                padding: 1,
            };
            len = geometry.output_len(len).unwrap();
        }
        assert_eq!(len, 3);
    }

    #[test]
    fn instance_norm_examples() {
        let g = Graph::new();
        let x = g.constant(array![[1.0], [2.0], [3.0]]);
        let y = instance_norm(x, 3, 0.0).unwrap();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in y.value().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = g.constant(array![[4.0], [4.0], [4.0]]);
        assert!(instance_norm(c, 3, 1e-5)
            .unwrap()
            .value()
            .iter()
            .all(|v| *v == 0.0));
        assert!(instance_norm(g.constant(array![[1.0]]), 1, 1e-5).is_err());
    }

    #[test]
    fn instance_norm_statistics_and_affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let id = store.add_uniform("x", (2 * 16, 5), 1, &mut rng);
        *store.get_mut(id) *= 4.0;
        let g = Graph::new();
        let x = g.constant(store.get(id).clone());
        let y = instance_norm(x, 16, INSTANCE_NORM_EPS).unwrap().value();
        for n in 0..2 {
            for c in 0..5 {
                let col: Vec<f64> = (0..16).map(|t| y[[n * 16 + t, c]]).collect();
                let mean = col.iter().sum::<f64>() / 16.0;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-4);
            }
        }
        let scaled = store.get(id).mapv(|v| 3.0 * v - 7.0);
        let y2 = instance_norm(g.constant(scaled), 16, INSTANCE_NORM_EPS)
            .unwrap()
            .value();
        for (a, b) in y.iter().zip(y2.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn conv_transpose_restores_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let geometry = ConvGeometry {
            in_channels: 3,
            out_channels: 5,
            kernel: 4,
            stride: 2,
            padding: 1,
        };
        let layer = ConvTranspose1d::new(&mut store, &mut rng, "t", geometry);
        let g = Graph::new();
        let p = store.bind(&g, false);
        let x = g.constant(Mat::ones((2 * 12, 5)));
        let y = layer.forward(&p, x, 2, 24).unwrap();
        assert_eq!(y.shape(), (48, 3));
    }
}
