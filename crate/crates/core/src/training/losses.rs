use std::sync::Arc;

use crate::nn::{CustomOp, Mat, Var};
use crate::{Error, Result};

/// Largest `|r . r''|` used in the arccos derivative. Beyond it the slope
/// is held constant instead of diverging.
const DOT_CLAMP: f64 = 1.0 - 1e-7;

struct QuatAngle {
    count: usize,
}

impl CustomOp for QuatAngle {
    fn name(&self) -> &'static str {
        "quat_angle"
    }

    fn backward(&self, inputs: &[Arc<Mat>], _output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let (a, b) = (&inputs[0], &inputs[1]);
        let scale = grad[[0, 0]] / self.count as f64;
        let mut ga = Mat::zeros(a.dim());
        let mut gb = Mat::zeros(b.dim());
        for r in 0..a.nrows() {
            for q in 0..a.ncols() / 4 {
                let cols = 4 * q..4 * q + 4;
                let d: f64 = cols.clone().map(|c| a[[r, c]] * b[[r, c]]).sum();
                let ad = d.abs().min(DOT_CLAMP);
                let k = -d.signum() * scale / (1.0 - ad * ad).sqrt();
                for c in cols {
                    ga[[r, c]] = k * b[[r, c]];
                    gb[[r, c]] = k * a[[r, c]];
                }
            }
        }
        vec![Some(ga), Some(gb)]
    }
}

/// Mean over all quaternion pairs of `arccos(|r . r''|)`, the rotation angle
/// between unit quaternions (sign-invariant). Rows hold `4J` components.
pub fn loss_quat<'g>(r: Var<'g>, r2: Var<'g>) -> Result<Var<'g>> {
    let (a, b) = (r.value(), r2.value());
    if a.dim() != b.dim() || a.ncols() % 4 != 0 || a.is_empty() {
        return Err(Error::shape(format!(
            "quaternion loss on {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let count = a.len() / 4;
    let mut total = 0.0;
    for (ra, rb) in a.outer_iter().zip(b.outer_iter()) {
        for q in 0..ra.len() / 4 {
            let d: f64 = (4 * q..4 * q + 4).map(|c| ra[c] * rb[c]).sum();
            total += d.abs().min(1.0).acos();
        }
    }
    Ok(r.graph().custom(
        Arc::new(QuatAngle { count }),
        &[r, r2],
        Mat::from_elem((1, 1), total / count as f64),
    ))
}

/// Reconstruction loss summed over frames: per frame the mean joint angle
/// plus `1/2 |p - p''|^2 + |v - v''|^2`. Rows are full `10J` frame features.
pub fn loss_rec<'g>(x: Var<'g>, x2: Var<'g>, joints: usize) -> Result<Var<'g>> {
    if x.shape() != x2.shape() || x.shape().1 != 10 * joints {
        return Err(Error::shape(format!(
            "reconstruction loss on {:?} vs {:?} for {joints} joints",
            x.shape(),
            x2.shape()
        )));
    }
    let frames = x.shape().0 as f64;
    let j = joints;
    let quat = loss_quat(x.slice_cols(0, 4 * j), x2.slice_cols(0, 4 * j))? * frames;
    let pos = (x.slice_cols(4 * j, 3 * j) - x2.slice_cols(4 * j, 3 * j))
        .square()
        .sum_all()
        * 0.5;
    let vel = (x.slice_cols(7 * j, 3 * j) - x2.slice_cols(7 * j, 3 * j))
        .square()
        .sum_all();
    Ok(quat + pos + vel)
}

/// Generator side of the least-squares game: `sum D(fake)^2`.
pub fn loss_adv(fake_scores: Var<'_>) -> Var<'_> {
    fake_scores.square().sum_all()
}

/// Critic side: `sum (D(real) - 1)^2 + sum (D(fake) + 1)^2`.
pub fn loss_cri<'g>(real_scores: Var<'g>, fake_scores: Var<'g>) -> Result<Var<'g>> {
    if real_scores.shape().1 != 1 || fake_scores.shape().1 != 1 {
        return Err(Error::shape("critic scores must be columns"));
    }
    Ok((real_scores + -1.0).square().sum_all() + (fake_scores + 1.0).square().sum_all())
}

/// `|d sum(scores) / d input|^2`, differentiable with respect to the critic
/// parameters. Each score must depend on its own sample only, so the
/// gradient of the sum splits into per-sample input gradients.
pub fn loss_gp<'g>(scores: Var<'g>, input: Var<'g>) -> Result<Var<'g>> {
    let graph = scores.graph();
    let g = graph.grad(scores.sum_all(), &[input], true)?;
    Ok(match g[0] {
        Some(g) => g.square().sum_all(),
        None => graph.scalar(0.0),
    })
}

/// `|phi - phi'|^2` over perceptual feature maps.
pub fn loss_per<'g>(phi: Var<'g>, phi2: Var<'g>) -> Result<Var<'g>> {
    if phi.shape() != phi2.shape() {
        return Err(Error::shape(format!(
            "perceptual loss on {:?} vs {:?}",
            phi.shape(),
            phi2.shape()
        )));
    }
    Ok((phi - phi2).square().sum_all())
}
