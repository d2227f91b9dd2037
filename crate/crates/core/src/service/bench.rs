use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::protocol::OnlineFeatureBuilder;
use crate::model::{Generator, TargetSpec};
use crate::motion::Quaternion;
use crate::nn::seeded_rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub frames: usize,
    /// Leading frames run but left out of the statistics.
    pub warmup: usize,
    pub source_style: usize,
    pub content: usize,
    pub target: TargetSpec,
    pub fps: f64,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(frames: usize) -> Self {
        Self {
            frames,
            warmup: 10,
            source_style: 0,
            content: 0,
            target: TargetSpec::style(1),
            fps: 60.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub samples_us: Vec<f64>,
    pub p50_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
    pub mean_us: f64,
    /// Frames per second if frames were processed back to back.
    pub sustained_fps: f64,
}

/// Nearest-rank percentile of unsorted samples; `q` in `[0, 100]`.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

impl LatencyReport {
    pub fn from_samples(samples_us: Vec<f64>) -> Result<Self> {
        if samples_us.is_empty() {
            return Err(Error::Range(
                "latency report needs at least one sample".into(),
            ));
        }
        let mean = samples_us.iter().sum::<f64>() / samples_us.len() as f64;
        Ok(Self {
            p50_us: percentile(&samples_us, 50.0),
            p95_us: percentile(&samples_us, 95.0),
            max_us: samples_us.iter().copied().fold(f64::MIN, f64::max),
            mean_us: mean,
            sustained_fps: 1e6 / mean,
            samples_us,
        })
    }
}

/// Times `transfer_frame` alone on a synthetic stream for the generator's
/// skeleton. Feature building happens before the clock starts.
pub fn bench_latency(generator: &Generator, config: &BenchConfig) -> Result<LatencyReport> {
    if config.frames == 0 {
        return Err(Error::Range(
            "benchmark needs at least one measured frame".into(),
        ));
    }
    let skeleton = generator.skeleton();
    let joints = skeleton.joint_count();
    let total = config.frames + config.warmup;
    let mut rng = seeded_rng(config.seed);
    let phases: Vec<[f64; 3]> = (0..joints)
        .map(|_| [rng.gen(), rng.gen(), rng.gen()])
        .collect();
    let mut builder = OnlineFeatureBuilder::new(config.fps)?;
    let frames = (0..total)
        .map(|t| {
            let time = t as f64 / config.fps;
            let rotations: Vec<Quaternion> = phases
                .iter()
                .map(|p| {
                    let axis = [p[0] - 0.5, p[1] - 0.5, p[2] - 0.5 + 1e-3];
                    Quaternion::from_axis_angle(
                        axis,
                        0.4 * (std::f64::consts::TAU * (time + p[2])).sin(),
                    )
                })
                .collect();
            builder.push(skeleton, &rotations, [0.0, 1.0, time])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut session = generator.open_session(config.source_style, config.content, config.target)?;
    let mut samples = Vec::with_capacity(config.frames);
    for (t, frame) in frames.iter().enumerate() {
        let start = Instant::now();
        let out = generator.transfer_frame(&mut session, frame)?;
        let us = start.elapsed().as_secs_f64() * 1e6;
        std::hint::black_box(out);
        if t >= config.warmup {
            samples.push(us);
        }
    }
    LatencyReport::from_samples(samples)
}
