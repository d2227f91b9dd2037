//! Worked examples with closed-form answers.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use style_erd::eval::{compute_fmd, frechet_distance, FmdConfig, FmdExtractor, GaussianSummary};
use style_erd::io::{synth_dataset, window_clips, MotionWindow, SynthDatasetConfig};
use style_erd::nn::{Graph, Mat};
use style_erd::supervision::attention_score;
use style_erd::training::{loss_cri, loss_gp, loss_quat};

use super::Check;

fn close(name: &str, got: f64, want: f64, tol: f64) -> Check {
    if (got - want).abs() <= tol {
        Ok(format!("{name}: {got:.12} (want {want})"))
    } else {
        Err(format!("{name}: got {got:.12}, want {want} within {tol:e}"))
    }
}

fn row(values: &[f64]) -> Mat {
    Mat::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

pub const LOSS_TOL: f64 = 1e-9;

pub fn loss_oracles() -> Vec<Check> {
    let g = Graph::new();
    let quat = loss_quat(
        g.constant(row(&[1.0, 0.0, 0.0, 0.0])),
        g.constant(row(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0])),
    )
    .map(|v| v.item());

    let cri = loss_cri(g.constant(row(&[0.0])), g.constant(row(&[0.0]))).map(|v| v.item());

    // D(x) = x . w with w = (3, 4): the input gradient is w everywhere.
    let x = g.variable(row(&[0.7, -1.3]));
    let w = g.constant(Mat::from_shape_vec((2, 1), vec![3.0, 4.0]).expect("shape"));
    let gp = loss_gp(x.matmul(w), x).map(|v| v.item());

    // Four one-hot feature maps read back the four cells of w_f (x) w_t.
    let (wf, wt) = ([1.0, 2.0], [3.0, 4.0]);
    let mut m = Mat::zeros((8, 2));
    let mut cells = Vec::new();
    for c in 0..2 {
        for t in 0..2 {
            let n = cells.len();
            m[[n * 2 + t, c]] = 1.0;
            cells.push((c, t));
        }
    }
    let wf_rows = Mat::from_shape_fn((4, 2), |(_, c)| wf[c]);
    let wt_rows = Mat::from_shape_fn((4, 2), |(_, t)| wt[t]);
    let outer =
        attention_score(g.constant(m), g.constant(wf_rows), g.constant(wt_rows)).map(|s| s.value());
    let expected = [[3.0, 4.0], [6.0, 8.0]];

    let ones = attention_score(
        g.constant(Mat::ones((3, 160))),
        g.constant(Mat::ones((1, 160))),
        g.constant(Mat::ones((1, 3))),
    )
    .map(|v| v.item());

    let err = |name: &str, e: style_erd::Error| Err(format!("{name}: {e}"));
    vec![
        quat.map_or_else(
            |e| err("L_quat", e),
            |v| close("L_quat identity vs 90deg about x", v, FRAC_PI_4, LOSS_TOL),
        ),
        cri.map_or_else(
            |e| err("L_cri", e),
            |v| close("L_cri scores (0, 0)", v, 2.0, LOSS_TOL),
        ),
        gp.map_or_else(
            |e| err("L_gp", e),
            |v| close("L_gp linear critic w = (3, 4)", v, 25.0, LOSS_TOL),
        ),
        outer.map_or_else(
            |e| err("attention", e),
            |s| {
                let worst = cells
                    .iter()
                    .enumerate()
                    .map(|(n, &(c, t))| (s[[n, 0]] - expected[c][t]).abs())
                    .fold(0.0, f64::max);
                close(
                    "attention w_f=[1,2], w_t=[3,4] outer product max error",
                    worst,
                    0.0,
                    LOSS_TOL,
                )
            },
        ),
        ones.map_or_else(
            |e| err("attention sum", e),
            |v| close("attention all-ones 160x3", v, 480.0, LOSS_TOL),
        ),
    ]
}

pub const FRECHET_TOL: f64 = 1e-8;
pub const SELF_FMD_TOL: f64 = 1e-6;

fn spd(d: usize) -> Mat {
    let a = Mat::from_shape_fn((d, d), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.4);
    let mut s = a.t().dot(&a);
    for i in 0..d {
        s[[i, i]] += 0.5;
    }
    s
}

pub fn frechet_oracles() -> Vec<Check> {
    let equal = (|| {
        let cov = spd(3);
        let a = GaussianSummary::new(vec![1.0, 2.0, 3.0], cov.clone())?;
        let b = GaussianSummary::new(vec![0.0, 0.0, 1.0], cov)?;
        frechet_distance(&a, &b)
    })();
    let commuting = (|| {
        let a = GaussianSummary::new(vec![0.5, -0.5], Mat::eye(2) * 4.0)?;
        let b = GaussianSummary::new(vec![0.5, -0.5], Mat::eye(2))?;
        frechet_distance(&a, &b)
    })();
    vec![
        equal.map_or_else(
            |e| Err(e.to_string()),
            |v| close("Frechet equal covariance", v, 9.0, FRECHET_TOL),
        ),
        commuting.map_or_else(
            |e| Err(e.to_string()),
            |v| close("Frechet 4I vs I", v, 2.0, FRECHET_TOL),
        ),
        self_fmd(),
    ]
}

fn self_fmd() -> Check {
    let clips = synth_dataset(&SynthDatasetConfig::default());
    let (windows, _) = window_clips(&clips[..6], 24, 4).map_err(|e| e.to_string())?;
    let refs: Vec<&MotionWindow> = windows.iter().take(80).collect();
    let extractor = FmdExtractor::new(FmdConfig::new(13), 0).map_err(|e| e.to_string())?;
    let v = compute_fmd(&refs, &refs, &extractor).map_err(|e| e.to_string())?;
    close(
        &format!("FMD(X, X) over {} windows", refs.len()),
        v,
        0.0,
        SELF_FMD_TOL,
    )
}
