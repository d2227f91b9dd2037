//! Differentiable quaternion normalization and forward kinematics on
//! `N x 4J` rows of `(w, x, y, z)` quaternions.

use std::sync::Arc;

use crate::motion::{Skeleton, Vec3};
use crate::nn::{CustomOp, Mat, Var};

type M3 = [[f64; 3]; 3];

fn quat_matrix(q: &[f64]) -> M3 {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Contracts `g` against the partials of [`quat_matrix`].
fn quat_matrix_vjp(q: &[f64], g: &M3) -> [f64; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = [
        [0.0, -2.0 * z, 2.0 * y],
        [2.0 * z, 0.0, -2.0 * x],
        [-2.0 * y, 2.0 * x, 0.0],
    ];
    let dx = [
        [0.0, 2.0 * y, 2.0 * z],
        [2.0 * y, -4.0 * x, -2.0 * w],
        [2.0 * z, 2.0 * w, -4.0 * x],
    ];
    let dy = [
        [-4.0 * y, 2.0 * x, 2.0 * w],
        [2.0 * x, 0.0, 2.0 * z],
        [-2.0 * w, 2.0 * z, -4.0 * y],
    ];
    let dz = [
        [-4.0 * z, -2.0 * w, 2.0 * x],
        [2.0 * w, -4.0 * z, 2.0 * y],
        [2.0 * x, 2.0 * y, 0.0],
    ];
    let dot = |d: &M3| -> f64 {
        (0..3)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| d[a][b] * g[a][b])
            .sum()
    };
    [dot(&dw), dot(&dx), dot(&dy), dot(&dz)]
}

fn mul(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

fn mul_bt(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[j][k]).sum();
        }
    }
    o
}

fn mul_at(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[k][i] * b[k][j]).sum();
        }
    }
    o
}

fn apply(m: &M3, v: Vec3) -> Vec3 {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

const MIN_NORM: f64 = 1e-9;

/// Per-joint `q / |q|`, sign-flipped so that `w >= 0`.
pub(crate) struct NormalizeQuaternions;

impl NormalizeQuaternions {
    pub(crate) fn apply(x: Var<'_>) -> Var<'_> {
        let v = x.value();
        assert_eq!(v.ncols() % 4, 0, "quaternion block width");
        let mut out = (*v).clone();
        for mut row in out.outer_iter_mut() {
            for q in row.as_slice_mut().expect("row-major").chunks_exact_mut(4) {
                let n = q.iter().map(|c| c * c).sum::<f64>().sqrt().max(MIN_NORM);
                let s = if q[0] >= 0.0 { 1.0 } else { -1.0 };
                q.iter_mut().for_each(|c| *c *= s / n);
            }
        }
        x.graph().custom(Arc::new(NormalizeQuaternions), &[x], out)
    }
}

impl CustomOp for NormalizeQuaternions {
    fn name(&self) -> &'static str {
        "normalize_quaternions"
    }

    fn backward(&self, inputs: &[Arc<Mat>], output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let x = &inputs[0];
        let mut gx = Mat::zeros(x.raw_dim());
        for r in 0..x.nrows() {
            for j in 0..x.ncols() / 4 {
                let c = 4 * j..4 * j + 4;
                let q: Vec<f64> = c.clone().map(|k| x[[r, k]]).collect();
                let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(MIN_NORM);
                let s = if q[0] >= 0.0 { 1.0 } else { -1.0 };
                let y: Vec<f64> = c.clone().map(|k| output[[r, k]]).collect();
                let g: Vec<f64> = c.clone().map(|k| grad[[r, k]]).collect();
                let yg: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
                for (i, k) in c.enumerate() {
                    gx[[r, k]] = s * (g[i] - y[i] * yg) / n;
                }
            }
        }
        vec![Some(gx)]
    }
}

/// Root-relative joint positions (`N x 3J`) of unit quaternion rows
/// (`N x 4J`), with the root at the origin.
pub(crate) struct ForwardKinematics {
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
}

impl ForwardKinematics {
    pub(crate) fn new(skeleton: &Skeleton) -> Arc<Self> {
        Arc::new(Self {
            parents: skeleton.parents().to_vec(),
            offsets: skeleton.offsets().to_vec(),
        })
    }

    fn pose(&self, q: &[f64]) -> (Vec<M3>, Vec<M3>, Vec<Vec3>) {
        let j = self.parents.len();
        let local: Vec<M3> = q.chunks_exact(4).map(quat_matrix).collect();
        let mut global: Vec<M3> = Vec::with_capacity(j);
        let mut pos: Vec<Vec3> = Vec::with_capacity(j);
        for i in 0..j {
            match self.parents[i] {
                None => {
                    global.push(local[i]);
                    pos.push([0.0; 3]);
                }
                Some(p) => {
                    let o = apply(&global[p], self.offsets[i]);
                    pos.push([pos[p][0] + o[0], pos[p][1] + o[1], pos[p][2] + o[2]]);
                    global.push(mul(&global[p], &local[i]));
                }
            }
        }
        (local, global, pos)
    }

    pub(crate) fn apply<'g>(self: &Arc<Self>, quats: Var<'g>) -> Var<'g> {
        let v = quats.value();
        let j = self.parents.len();
        assert_eq!(v.ncols(), 4 * j, "forward kinematics: quaternion width");
        let mut out = Mat::zeros((v.nrows(), 3 * j));
        for (r, row) in v.outer_iter().enumerate() {
            let q = row.to_vec();
            let (_, _, pos) = self.pose(&q);
            for (i, p) in pos.iter().enumerate() {
                for a in 0..3 {
                    out[[r, 3 * i + a]] = p[a];
                }
            }
        }
        quats.graph().custom(self.clone(), &[quats], out)
    }
}

impl CustomOp for ForwardKinematics {
    fn name(&self) -> &'static str {
        "forward_kinematics"
    }

    fn backward(&self, inputs: &[Arc<Mat>], _output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let x = &inputs[0];
        let j = self.parents.len();
        let mut gx = Mat::zeros(x.raw_dim());
        for r in 0..x.nrows() {
            let q = x.row(r).to_vec();
            let (local, global, _) = self.pose(&q);
            let mut gp: Vec<Vec3> = (0..j)
                .map(|i| [0, 1, 2].map(|a| grad[[r, 3 * i + a]]))
                .collect();
            let mut gg = vec![[[0.0; 3]; 3]; j];
            let mut gl = vec![[[0.0; 3]; 3]; j];
            for i in (0..j).rev() {
                match self.parents[i] {
                    None => gl[i] = gg[i],
                    Some(p) => {
                        let o = self.offsets[i];
                        let gpi = gp[i];
                        for a in 0..3 {
                            gp[p][a] += gpi[a];
                            for b in 0..3 {
                                gg[p][a][b] += gpi[a] * o[b];
                            }
                        }
                        let back = mul_bt(&gg[i], &local[i]);
                        for a in 0..3 {
                            for b in 0..3 {
                                gg[p][a][b] += back[a][b];
                            }
                        }
                        gl[i] = mul_at(&global[p], &gg[i]);
                    }
                }
            }
            for i in 0..j {
                let d = quat_matrix_vjp(&q[4 * i..4 * i + 4], &gl[i]);
                for (k, v) in d.iter().enumerate() {
                    gx[[r, 4 * i + k]] = *v;
                }
            }
        }
        vec![Some(gx)]
    }
}
