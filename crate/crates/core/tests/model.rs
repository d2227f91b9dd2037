use std::sync::Arc;

use style_erd::io::{synth_gait, synth_skeleton, SynthStyleParams};
use style_erd::model::{Generator, ModelConfig, TargetSpec};
use style_erd::motion::{MotionFrame, UNIT_TOLERANCE};
use style_erd::Error;

fn generator(seed: u64) -> Generator {
    Generator::new(ModelConfig::new(13, 3, 2), Arc::new(synth_skeleton()), seed).unwrap()
}

fn clip(len: usize) -> Vec<MotionFrame> {
    synth_gait(0, &SynthStyleParams::neutral(), len, 60.0, 11).frames
}

fn max_diff(a: &[MotionFrame], b: &[MotionFrame]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            x.features()
                .into_iter()
                .zip(y.features())
                .map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

fn stream(
    g: &Generator,
    frames: &[MotionFrame],
    s: usize,
    c: usize,
    target: TargetSpec,
) -> Vec<MotionFrame> {
    let mut session = g.open_session(s, c, target).unwrap();
    frames
        .iter()
        .map(|f| g.transfer_frame(&mut session, f).unwrap())
        .collect()
}

#[test]
fn online_matches_offline() {
    let g = generator(1);
    let frames = clip(100);
    for target in [
        TargetSpec::style(0),
        TargetSpec::style(2),
        TargetSpec::Blend {
            first: 1,
            second: 2,
            alpha: 0.3,
        },
        TargetSpec::Scaled {
            style: 1,
            alpha: 0.6,
        },
    ] {
        let offline = g.transfer_clip(&frames, 0, 1, target).unwrap();
        let online = stream(&g, &frames, 0, 1, target);
        assert!(max_diff(&offline, &online) < 1e-10, "{target:?}");
    }
}

#[test]
fn decoded_frames_are_valid() {
    let g = generator(2);
    let out = g
        .transfer_clip(&clip(30), 0, 0, TargetSpec::style(1))
        .unwrap();
    for f in &out {
        assert!(f
            .rotations
            .iter()
            .all(|q| (q.norm() - 1.0).abs() < UNIT_TOLERANCE && q.w >= 0.0));
        assert_eq!(f.positions[0], [0.0; 3]);
    }
    assert_eq!(
        out,
        g.transfer_clip(&clip(30), 0, 0, TargetSpec::style(1))
            .unwrap()
    );
}

#[test]
fn encode_shape_and_zero_weights() {
    let mut g = generator(3);
    let f = &clip(24)[5];
    assert_eq!(g.encode(f, 0, 1).unwrap().len(), 32);
    let ids: Vec<_> = g
        .params()
        .ids()
        .filter(|&id| g.params().name(id).starts_with("enc."))
        .collect();
    for id in ids {
        let name = g.params().name(id).to_string();
        let m = g.params_mut().get_mut(id);
        if name.ends_with(".w") {
            m.fill(0.0);
        } else {
            m.fill(0.1);
        }
    }
    // relu(0.1 * 0 ... ) layer 1 gives relu(b1) = 0.1, layer 2 gives relu(0 + 0.1).
    assert!(g
        .encode(f, 0, 1)
        .unwrap()
        .iter()
        .all(|&v| (v - 0.1).abs() < 1e-15));
    assert!(matches!(g.encode(f, 3, 0), Err(Error::Range(_))));
}

#[test]
fn recurrent_combination_rules() {
    let g = generator(4);
    let f = &clip(24)[0];
    let z = g.encode(f, 0, 0).unwrap();
    let mut neutral = g.open_session(0, 0, TargetSpec::style(0)).unwrap();
    let base = g.recurrent_step(&z, &mut neutral).unwrap();
    let mut scaled = g
        .open_session(
            0,
            0,
            TargetSpec::Scaled {
                style: 2,
                alpha: 0.0,
            },
        )
        .unwrap();
    assert_eq!(g.recurrent_step(&z, &mut scaled).unwrap(), base);

    let mut single = g.open_session(0, 0, TargetSpec::style(2)).unwrap();
    let mut blend = g
        .open_session(
            0,
            0,
            TargetSpec::Blend {
                first: 2,
                second: 1,
                alpha: 1.0,
            },
        )
        .unwrap();
    for _ in 0..3 {
        assert_eq!(
            g.recurrent_step(&z, &mut single).unwrap(),
            g.recurrent_step(&z, &mut blend).unwrap()
        );
    }
    assert_eq!(single.branch_state(2), blend.branch_state(2));

    // residual identity: z' - r0(z) = alpha * r_k(z)
    let mut a = g
        .open_session(
            0,
            0,
            TargetSpec::Scaled {
                style: 1,
                alpha: 0.4,
            },
        )
        .unwrap();
    let mut b = g.open_session(0, 0, TargetSpec::style(0)).unwrap();
    let mut c = g.open_session(0, 0, TargetSpec::style(1)).unwrap();
    let za = g.recurrent_step(&z, &mut a).unwrap();
    let zb = g.recurrent_step(&z, &mut b).unwrap();
    let zc = g.recurrent_step(&z, &mut c).unwrap();
    for i in 0..za.len() {
        assert!(((za[i] - zb[i]) - 0.4 * (zc[i] - zb[i])).abs() < 1e-12);
    }
}

#[test]
fn session_lifecycle_and_targets() {
    let g = generator(5);
    let frames = clip(10);
    let mut s = g
        .open_session(
            0,
            1,
            TargetSpec::Scaled {
                style: 1,
                alpha: 0.3,
            },
        )
        .unwrap();
    assert_eq!(s.frame_index(), 0);
    let twin = g
        .open_session(
            0,
            1,
            TargetSpec::Scaled {
                style: 1,
                alpha: 0.3,
            },
        )
        .unwrap();
    assert_eq!(s.neutral_state(), twin.neutral_state());
    g.transfer_frame(&mut s, &frames[0]).unwrap();
    let before = s.clone();
    assert!(matches!(
        g.set_target(
            &mut s,
            TargetSpec::Scaled {
                style: 1,
                alpha: 1.5
            }
        ),
        Err(Error::Range(_))
    ));
    assert_eq!(s.target(), before.target());
    g.set_target(
        &mut s,
        TargetSpec::Scaled {
            style: 1,
            alpha: 0.3,
        },
    )
    .unwrap();
    assert_eq!(s.branch_state(1), before.branch_state(1));
    g.set_target(&mut s, TargetSpec::style(2)).unwrap();
    assert_eq!(s.engaged_styles(), vec![2]);
    assert_eq!(s.neutral_state(), before.neutral_state());
    assert!(matches!(
        g.open_session(0, 2, TargetSpec::style(0)),
        Err(Error::Range(_))
    ));
    s.close();
    assert!(matches!(
        g.transfer_frame(&mut s, &frames[1]),
        Err(Error::Lifecycle(_))
    ));
}

#[test]
fn checkpoint_round_trip() {
    let g = generator(6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    g.save(&path).unwrap();
    let h = Generator::load(&path).unwrap();
    assert_eq!(g.params().checksum(), h.params().checksum());
    assert_eq!(g.config(), h.config());
    let frames = clip(30);
    assert_eq!(
        g.transfer_clip(&frames, 0, 0, TargetSpec::style(1))
            .unwrap(),
        h.transfer_clip(&frames, 0, 0, TargetSpec::style(1))
            .unwrap()
    );
}
