//! Analytic gradients against central finite differences.

use std::sync::Arc;

use rand::Rng;
use style_erd::io::MotionWindow;
use style_erd::model::{Generator, ModelConfig};
use style_erd::motion::{MotionFrame, Quaternion, Skeleton};
use style_erd::nn::{
    concat_cols, conv1d, dense, instance_norm, interleave_rows, lstm_step, seeded_rng, Activation,
    Bound, CellMap, ConvGeometry, Graph, LstmState, Mat, ParamStore, Var, INSTANCE_NORM_EPS,
    NO_CELL,
};
use style_erd::supervision::{
    attention_score, softmax_cross_entropy, windows_to_matrix, Classifier, Discriminator,
    SupervisionConfig,
};
use style_erd::training::{
    discriminator_loss, generator_forward, generator_loss, loss_adv, loss_cri, loss_gp, loss_per,
    loss_quat, loss_rec, Ablation, LossWeights, TaskKind, TrainingTask,
};

use super::Check;

pub const RTOL: f64 = 1e-3;
const ATOL: f64 = 1e-8;
const STEP: f64 = 1e-5;
/// Entries probed per tensor; small tensors are probed in full.
const PROBES: usize = 6;

#[derive(Default)]
struct Worst {
    checked: usize,
    ratio: f64,
    at: String,
}

impl Worst {
    fn record(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        self.checked += 1;
        let ratio = (analytic - numeric).abs() / (RTOL * analytic.abs().max(numeric.abs()) + ATOL);
        if ratio > self.ratio {
            self.ratio = ratio;
            self.at = format!("{} (analytic {analytic:.6e}, numeric {numeric:.6e})", at());
        }
    }

    fn finish(self, name: &str) -> Check {
        if self.checked == 0 {
            Err(format!("{name}: nothing checked"))
        } else if self.ratio <= 1.0 {
            Ok(format!(
                "{name}: {} entries, worst {:.3} of tolerance",
                self.checked, self.ratio
            ))
        } else {
            Err(format!("{name}: mismatch at {}", self.at))
        }
    }
}

fn probes(len: usize, salt: usize) -> Vec<usize> {
    if len <= PROBES {
        return (0..len).collect();
    }
    let mut rng = seeded_rng(len as u64 * 31 + salt as u64);
    let mut v: Vec<usize> = (0..PROBES).map(|_| rng.gen_range(0..len)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

pub fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = seeded_rng(seed);
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

/// Checks `d f / d inputs` for a function of free input matrices.
pub fn check_inputs<F>(name: &str, inputs: &[Mat], f: F) -> Check
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    let eval = |values: &[Mat]| {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = values.iter().map(|v| g.variable(v.clone())).collect();
        f(&g, &vars).item()
    };
    let g = Graph::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|v| g.variable(v.clone())).collect();
    let loss = f(&g, &vars);
    let grads = g.backward(loss).map_err(|e| format!("{name}: {e}"))?;
    let mut worst = Worst::default();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(|m| m.as_ref().clone())
            .unwrap_or_else(|| Mat::zeros(inputs[i].dim()));
        let cols = inputs[i].ncols();
        for k in probes(inputs[i].len(), i) {
            let (r, c) = (k / cols, k % cols);
            let mut values = inputs.to_vec();
            values[i][[r, c]] += STEP;
            let up = eval(&values);
            values[i][[r, c]] -= 2.0 * STEP;
            let down = eval(&values);
            worst.record(analytic[[r, c]], (up - down) / (2.0 * STEP), || {
                format!("input {i} [{r}, {c}]")
            });
        }
    }
    worst.finish(name)
}

/// Checks `d loss / d params` for every tensor of one model's store. The
/// closure binds that store trainable and returns the loss with the binding.
pub fn check_params<M, F>(
    name: &str,
    model: &mut M,
    store: fn(&mut M) -> &mut ParamStore,
    loss: F,
) -> Check
where
    F: for<'g> Fn(&M, &'g Graph) -> (Var<'g>, Bound<'g>),
{
    let analytic = {
        let g = Graph::new();
        let (l, bound) = loss(model, &g);
        let grads = g.backward(l).map_err(|e| format!("{name}: {e}"))?;
        bound.gradients(&grads)
    };
    let value = |m: &M| {
        let g = Graph::new();
        loss(m, &g).0.item()
    };
    let ids: Vec<_> = store(model).ids().collect();
    let mut worst = Worst::default();
    for id in ids {
        let (shape, pname) = {
            let s = store(model);
            (s.get(id).dim(), s.name(id).to_string())
        };
        let grad = analytic[id.index()]
            .as_ref()
            .map(|m| m.as_ref().clone())
            .unwrap_or_else(|| Mat::zeros(shape));
        for k in probes(shape.0 * shape.1, id.index()) {
            let (r, c) = (k / shape.1, k % shape.1);
            let orig = store(model).get(id)[[r, c]];
            store(model).get_mut(id)[[r, c]] = orig + STEP;
            let up = value(model);
            store(model).get_mut(id)[[r, c]] = orig - STEP;
            let down = value(model);
            store(model).get_mut(id)[[r, c]] = orig;
            worst.record(grad[[r, c]], (up - down) / (2.0 * STEP), || {
                format!("{pname}[{r}, {c}]")
            });
        }
    }
    worst.finish(name)
}

fn unit_quats(rows: usize, joints: usize, seed: u64) -> Mat {
    let mut m = random_mat(rows, 4 * joints, seed);
    for mut row in m.rows_mut() {
        for j in 0..joints {
            let n = (0..4).map(|k| row[4 * j + k].powi(2)).sum::<f64>().sqrt();
            for k in 0..4 {
                row[4 * j + k] /= n;
            }
        }
    }
    m
}

/// Every differentiable primitive and layer on small random shapes.
pub fn primitive_checks() -> Vec<Check> {
    let a = || random_mat(3, 4, 1);
    let b = || random_mat(4, 2, 2);
    let row = || random_mat(1, 4, 3);
    let col = || random_mat(3, 1, 4);
    let mut out = vec![
        check_inputs("matmul", &[a(), b()], |_, v| sq(v[0].matmul(v[1]))),
        check_inputs("matmul_t a^T b", &[random_mat(4, 3, 5), b()], |_, v| {
            sq(v[0].matmul_t(v[1], true, false))
        }),
        check_inputs("matmul_t a b^T", &[a(), random_mat(2, 4, 6)], |_, v| {
            sq(v[0].matmul_t(v[1], false, true))
        }),
        check_inputs("add/sub/mul/neg", &[a(), random_mat(3, 4, 7)], |_, v| {
            sq((v[0] + v[1]) * v[0] - (-v[1]) * 2.0 + 0.5)
        }),
        check_inputs("add_row", &[a(), row()], |_, v| sq(v[0].add_row(v[1]))),
        check_inputs("mul_col", &[a(), col()], |_, v| sq(v[0].mul_col(v[1]))),
        check_inputs("powf", &[a().mapv(|x| x.abs() + 0.5)], |_, v| {
            v[0].powf(-0.5).sum_all()
        }),
        check_inputs("tanh", &[a()], |_, v| sq(v[0].tanh())),
        check_inputs("sigmoid", &[a()], |_, v| sq(v[0].sigmoid())),
        check_inputs("relu", &[a()], |_, v| sq(v[0].relu())),
        check_inputs("leaky_relu", &[a()], |_, v| sq(v[0].leaky_relu(0.2))),
        check_inputs("expand", &[random_mat(1, 1, 8)], |_, v| {
            sq(v[0].expand(3, 2) * random_const(v[0], 3, 2))
        }),
        check_inputs("sum_rows/broadcast_rows", &[a()], |_, v| {
            sq(v[0].sum_rows().broadcast_rows(2))
        }),
        check_inputs("sum_cols/broadcast_cols", &[a()], |_, v| {
            sq(v[0].sum_cols().broadcast_cols(3))
        }),
        check_inputs(
            "segment_sum_rows/repeat_rows",
            &[random_mat(6, 2, 9)],
            |_, v| sq(v[0].segment_sum_rows(3).repeat_rows(3) * v[0]),
        ),
        check_inputs("slice_cols/pad_cols", &[a()], |_, v| {
            sq(v[0].slice_cols(1, 2).pad_cols(1, 5) + 1.0)
        }),
        check_inputs("gather_rows/scatter_rows", &[a()], |_, v| {
            sq(v[0]
                .gather_rows(Arc::new(vec![2, 0, 2]))
                .scatter_rows(Arc::new(vec![1, 3, 1]), 4)
                + 1.0)
        }),
        check_inputs("gather/scatter", &[a()], |_, v| {
            let map = Arc::new(CellMap {
                sources: vec![0, 5, NO_CELL, 11, 5, 7],
                input_shape: (3, 4),
                output_shape: (2, 3),
            });
            sq(v[0].gather(map.clone()).scatter(map) + 1.0)
        }),
        check_inputs("reshape", &[a()], |_, v| {
            sq(v[0].reshape(2, 6).matmul(random_const(v[0], 6, 2)))
        }),
        check_inputs("concat_cols", &[a(), col()], |_, v| {
            sq(concat_cols(&[v[0], v[1]]) * 1.5)
        }),
        check_inputs("interleave_rows", &[a(), random_mat(3, 4, 10)], |_, v| {
            sq(interleave_rows(&[v[0], v[1]]).matmul(random_const(v[0], 4, 1)))
        }),
        check_inputs("dense", &[a(), b(), random_mat(1, 2, 11)], |_, v| {
            sq(dense(v[0], v[1], v[2], Activation::Tanh).unwrap())
        }),
        check_inputs(
            "lstm_step",
            &[
                random_mat(2, 3, 12),
                random_mat(2, 2, 13),
                random_mat(2, 2, 14),
                random_mat(3, 8, 15),
                random_mat(2, 8, 16),
                random_mat(1, 8, 17),
            ],
            |_, v| {
                let s = lstm_step(v[0], LstmState { h: v[1], c: v[2] }, v[3], v[4], v[5]).unwrap();
                sq(s.h) + sq(s.c)
            },
        ),
        check_inputs("instance_norm", &[random_mat(8, 3, 18)], |g, v| {
            let w = g.constant(random_mat(8, 3, 19));
            (instance_norm(v[0], 4, INSTANCE_NORM_EPS).unwrap() * w).sum_all()
        }),
        check_inputs("softmax_cross_entropy", &[random_mat(3, 4, 20)], |_, v| {
            softmax_cross_entropy(v[0], &[1, 3, 0]).unwrap()
        }),
        check_inputs(
            "attention_score",
            &[
                random_mat(6, 4, 21),
                random_mat(2, 4, 22),
                random_mat(2, 3, 23),
            ],
            |_, v| sq(attention_score(v[0], v[1], v[2]).unwrap()),
        ),
    ];
    let geometry = ConvGeometry {
        in_channels: 3,
        out_channels: 2,
        kernel: 4,
        stride: 2,
        padding: 1,
    };
    out.push(check_inputs(
        "conv1d",
        &[
            random_mat(16, 3, 24),
            random_mat(12, 2, 25),
            random_mat(1, 2, 26),
        ],
        |_, v| sq(conv1d(v[0], v[1], v[2], &geometry, 2, 8).unwrap().0),
    ));
    out.push(check_inputs(
        "conv_transpose (scatter of unfold)",
        &[random_mat(8, 2, 27), random_mat(2, 12, 28)],
        |_, v| {
            let map = geometry.unfold_map(2, 8).unwrap();
            sq(v[0].matmul(v[1]).scatter(map))
        },
    ));
    let rq = unit_quats(3, 2, 29);
    let rq2 = unit_quats(3, 2, 30);
    out.push(check_inputs("loss_quat", &[rq, rq2], |_, v| {
        loss_quat(v[0], v[1]).unwrap()
    }));
    let frames = |seed: u64| {
        let (q, rest) = (unit_quats(4, 2, seed), random_mat(4, 12, seed + 100));
        Mat::from_shape_fn(
            (4, 20),
            |(r, c)| if c < 8 { q[[r, c]] } else { rest[[r, c - 8]] },
        )
    };
    out.push(check_inputs(
        "loss_rec",
        &[frames(31), frames(32)],
        |_, v| loss_rec(v[0], v[1], 2).unwrap(),
    ));
    out.push(check_inputs("loss_adv", &[random_mat(3, 1, 33)], |_, v| {
        loss_adv(v[0])
    }));
    out.push(check_inputs(
        "loss_cri",
        &[random_mat(3, 1, 34), random_mat(3, 1, 35)],
        |_, v| loss_cri(v[0], v[1]).unwrap(),
    ));
    out.push(check_inputs(
        "loss_per",
        &[random_mat(4, 3, 36), random_mat(4, 3, 37)],
        |_, v| loss_per(v[0], v[1]).unwrap(),
    ));
    out.push(check_inputs(
        "loss_gp (second order)",
        &[random_mat(4, 3, 38), random_mat(3, 1, 39)],
        |_, v| {
            let scores = v[0].matmul(v[1]).tanh();
            loss_gp(scores, v[0]).unwrap()
        },
    ));
    out
}

fn sq(v: Var<'_>) -> Var<'_> {
    v.square().sum_all()
}

fn random_const<'g>(like: Var<'g>, rows: usize, cols: usize) -> Var<'g> {
    like.graph()
        .constant(random_mat(rows, cols, (rows * 100 + cols) as u64))
}

pub const MINI_JOINTS: usize = 2;
pub const MINI_WINDOW: usize = 8;

pub fn mini_model_config() -> ModelConfig {
    ModelConfig {
        joints: MINI_JOINTS,
        styles: 2,
        contents: 1,
        hidden: 4,
        encoder_hidden: 4,
        neutral_layers: 1,
        style_layers: 1,
        decoder_hidden: vec![4],
        window: MINI_WINDOW,
    }
}

/// `C' = 8` after two stride-2 layers: `T' = 2`.
pub fn mini_supervision_config() -> SupervisionConfig {
    SupervisionConfig {
        channels: vec![6, 8],
        window: MINI_WINDOW,
        feature_hidden: 4,
        temporal_hidden: 4,
        ..SupervisionConfig::new(MINI_JOINTS, 2, 1)
    }
}

pub fn mini_skeleton() -> Skeleton {
    Skeleton::new(
        vec!["root".into(), "tip".into()],
        vec![None, Some(0)],
        vec![[0.0; 3], [0.3, 1.0, -0.2]],
    )
    .expect("valid skeleton")
}

fn random_window(skeleton: &Skeleton, style: usize, seed: u64) -> MotionWindow {
    let mut rng = seeded_rng(seed);
    let rotations: Vec<Vec<Quaternion>> = (0..MINI_WINDOW)
        .map(|_| {
            (0..MINI_JOINTS)
                .map(|_| {
                    let axis = [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.1..1.0),
                    ];
                    Quaternion::from_axis_angle(axis, rng.gen_range(-1.5..1.5))
                })
                .collect()
        })
        .collect();
    let roots = vec![[0.0; 3]; MINI_WINDOW];
    MotionWindow {
        frames: MotionFrame::sequence_from_pose_track(skeleton, &rotations, &roots, 30.0)
            .expect("valid track"),
        style,
        content: 0,
        source_id: format!("mini{seed}"),
        start_index: 0,
    }
}

struct Mini {
    generator: Generator,
    critic: Discriminator,
    classifier: Classifier,
    windows: Vec<MotionWindow>,
}

fn mini() -> Mini {
    let skeleton = Arc::new(mini_skeleton());
    let windows = vec![
        random_window(&skeleton, 0, 1),
        random_window(&skeleton, 1, 2),
    ];
    Mini {
        generator: Generator::new(mini_model_config(), skeleton, 3).expect("generator"),
        critic: Discriminator::new(mini_supervision_config(), false, 4).expect("critic"),
        classifier: Classifier::new(mini_supervision_config(), 5).expect("classifier"),
        windows,
    }
}

fn tasks(windows: &[MotionWindow], recon: bool, transfer: bool) -> Vec<TrainingTask<'_>> {
    let mut t = Vec::new();
    if recon {
        t.extend(windows.iter().map(|w| TrainingTask {
            window: w,
            target_style: w.style,
            kind: TaskKind::Reconstruction,
        }));
    }
    if transfer {
        t.extend(windows.iter().map(|w| TrainingTask {
            window: w,
            target_style: 1 - w.style,
            kind: TaskKind::Transfer,
        }));
    }
    t
}

/// Generator-side terms against generator parameters and critic-side terms
/// against critic parameters on the miniature configuration.
pub fn loss_checks() -> Vec<Check> {
    let mut m = mini();
    let windows = m.windows.clone();
    let critic = m.critic.clone();
    let classifier = m.classifier.clone();
    let weights = LossWeights::default();
    let only = |adv: bool, per: bool| Ablation {
        no_adv: !adv,
        no_per: !per,
        ..Default::default()
    };
    let unit = LossWeights {
        w_adv: 1.0,
        w_per: 1.0,
        w_gp: 1.0,
    };
    let gen_store: fn(&mut Generator) -> &mut ParamStore = Generator::params_mut;
    let gen_case = |name: &str,
                    gen: &mut Generator,
                    recon: bool,
                    transfer: bool,
                    ab: Ablation,
                    w: LossWeights| {
        let t = tasks(&windows, recon, transfer);
        check_params(name, gen, gen_store, |g, graph| {
            let p = g.params().bind(graph, true);
            let fwd = generator_forward(g, &p, &t).unwrap();
            let dp = critic.params().bind(graph, false);
            let cp = classifier.params().bind(graph, false);
            let (loss, _) = generator_loss(
                &fwd,
                &t,
                Some((&critic, &dp)),
                Some((&classifier, &cp)),
                &w,
                &ab,
            )
            .unwrap();
            (loss, p)
        })
    };
    let mut out = vec![
        gen_case(
            "L_rec wrt generator",
            &mut m.generator,
            true,
            false,
            only(false, false),
            unit,
        ),
        gen_case(
            "L_adv wrt generator",
            &mut m.generator,
            false,
            true,
            only(true, false),
            unit,
        ),
        gen_case(
            "L_per wrt generator",
            &mut m.generator,
            false,
            true,
            only(false, true),
            unit,
        ),
        gen_case(
            "L_gen wrt generator",
            &mut m.generator,
            true,
            true,
            Ablation::default(),
            weights,
        ),
    ];

    let t = tasks(&windows, true, true);
    let generated = {
        let g = Graph::new();
        let p = m.generator.params().bind(&g, false);
        generator_forward(&m.generator, &p, &t)
            .unwrap()
            .output
            .value()
            .as_ref()
            .clone()
    };
    let dis_store: fn(&mut Discriminator) -> &mut ParamStore = Discriminator::params_mut;
    for (name, w_gp) in [
        ("L_cri wrt critic", 0.0),
        ("L_dis wrt critic", weights.w_gp),
    ] {
        out.push(check_params(name, &mut m.critic, dis_store, |d, graph| {
            let p = d.params().bind(graph, true);
            (
                discriminator_loss(d, &p, &t, &generated, w_gp).unwrap().0,
                p,
            )
        }));
    }
    let refs: Vec<&MotionWindow> = windows.iter().collect();
    let real = windows_to_matrix(&refs, MINI_JOINTS, MINI_WINDOW).unwrap();
    out.push(check_params(
        "L_gp wrt critic",
        &mut m.critic,
        dis_store,
        |d, graph| {
            let p = d.params().bind(graph, true);
            let motion = graph
                .variable(real.clone())
                .slice_cols(4 * MINI_JOINTS, 6 * MINI_JOINTS);
            let scores = d.score_motion(&p, motion, &[0, 1], &[0, 0]).unwrap();
            (loss_gp(scores, motion).unwrap(), p)
        },
    ));
    out
}

/// The penalty value against a central-difference input gradient of the
/// miniature critic (step 1e-3).
pub fn gp_value_check() -> Check {
    let m = mini();
    let refs: Vec<&MotionWindow> = m.windows.iter().collect();
    let real = windows_to_matrix(&refs, MINI_JOINTS, MINI_WINDOW).unwrap();
    let motion_cols = 4 * MINI_JOINTS..10 * MINI_JOINTS;
    let motion = Mat::from_shape_fn((real.nrows(), 6 * MINI_JOINTS), |(r, c)| {
        real[[r, motion_cols.start + c]]
    });
    let styles = [0, 1];
    let score_sum = |x: &Mat| {
        let g = Graph::new();
        let p = m.critic.params().bind(&g, false);
        m.critic
            .score_motion(&p, g.constant(x.clone()), &styles, &[0, 0])
            .unwrap()
            .sum_all()
            .item()
    };
    let g = Graph::new();
    let p = m.critic.params().bind(&g, false);
    let x = g.variable(motion.clone());
    let gp = loss_gp(m.critic.score_motion(&p, x, &styles, &[0, 0]).unwrap(), x)
        .unwrap()
        .item();
    let h = 1e-3;
    let mut fd = 0.0;
    for r in 0..motion.nrows() {
        for c in 0..motion.ncols() {
            let mut up = motion.clone();
            up[[r, c]] += h;
            let mut down = motion.clone();
            down[[r, c]] -= h;
            fd += ((score_sum(&up) - score_sum(&down)) / (2.0 * h)).powi(2);
        }
    }
    let rel = (gp - fd).abs() / fd.abs().max(1e-12);
    if rel <= RTOL {
        Ok(format!("L_gp value {gp:.6e} vs finite-difference {fd:.6e}"))
    } else {
        Err(format!(
            "L_gp value {gp:.6e} vs finite-difference {fd:.6e} (rel {rel:.2e})"
        ))
    }
}
