use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use style_erd::eval::{train_fmd_extractor, FmdConfig, FmdExtractor, FmdReport, FmdTraining};
use style_erd::io::{
    apply_labels, downsample, read_bvh, read_clip_cache, read_label_sidecar, synth_dataset,
    window_clips, write_bvh_file, write_clip_cache, MotionClip, MotionWindow, SynthDatasetConfig,
    WINDOW_LEN, WINDOW_OVERLAP,
};
use style_erd::model::{Generator, TargetSpec};
use style_erd::service::{bench_latency, serve, BenchConfig, Transport};
use style_erd::supervision::{
    pretrain_classifier, Classifier, ClassifierTraining, SupervisionConfig,
};
use style_erd::training::{train, TrainConfig};

/// Online motion style transfer.
#[derive(Parser)]
#[command(name = "style-erd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the procedural gait dataset.
    SynthData(SynthArgs),
    /// Train the content classifier used by the perceptual loss.
    PretrainClassifier(ClassifierArgs),
    /// Adversarial training of the generator.
    Train(TrainArgs),
    /// Stylize a clip offline.
    Transfer(TransferArgs),
    /// Stream frames over stdin/stdout or TCP.
    Serve(ServeArgs),
    /// Per-frame latency of the online path.
    Bench(BenchArgs),
    /// Fréchet motion distance between two window sets.
    EvalFmd(FmdArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output: a directory of BVH files plus labels.json, or a `.json` clip cache.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    styles: usize,
    #[arg(long, default_value_t = 2)]
    contents: usize,
    #[arg(long, default_value_t = 25)]
    clips_per_pair: usize,
    #[arg(long, default_value_t = 104)]
    frames: usize,
    #[arg(long, default_value_t = 60.0)]
    fps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClassifierArgs {
    /// Clip cache file or BVH directory with labels.json.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for checkpoints and the training log.
    #[arg(long)]
    out: PathBuf,
    /// JSON overrides of the training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pretrained classifier; trained on the input data when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// BVH file or clip cache (first clip).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    target_style: usize,
    #[arg(long)]
    second_style: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    source_style: usize,
    #[arg(long, default_value_t = 0)]
    content: usize,
    /// Resample the input to this rate first.
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// TCP port on 127.0.0.1; stdin/stdout when omitted.
    #[arg(long)]
    port: Option<u16>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    target_style: usize,
    /// Also print every sample.
    #[arg(long)]
    samples: bool,
}

#[derive(Args)]
struct FmdArgs {
    #[arg(long)]
    set_a: PathBuf,
    #[arg(long)]
    set_b: PathBuf,
    /// Trained extractor; trained on set A when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_clips(path: &Path) -> Result<Vec<MotionClip>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("bvh")))
            .collect();
        files.sort();
        let mut clips = files
            .iter()
            .map(read_bvh)
            .collect::<style_erd::Result<Vec<_>>>()?;
        let labels = path.join("labels.json");
        if labels.exists() {
            apply_labels(&mut clips, &read_label_sidecar(&labels)?);
        }
        Ok(clips)
    } else if path
        .extension()
        .is_some_and(|x| x.eq_ignore_ascii_case("bvh"))
    {
        Ok(vec![read_bvh(path)?])
    } else {
        Ok(read_clip_cache(path)?)
    }
}

fn load_windows(path: &Path) -> Result<(Vec<MotionClip>, Vec<MotionWindow>)> {
    let clips = load_clips(path)?;
    if clips.is_empty() {
        bail!("no clips in {}", path.display());
    }
    let (windows, short) = window_clips(&clips, WINDOW_LEN, WINDOW_OVERLAP)?;
    if short > 0 {
        log::warn!("{short} clips shorter than {WINDOW_LEN} frames were skipped");
    }
    Ok((clips, windows))
}

fn label_counts(clips: &[MotionClip]) -> (usize, usize, usize) {
    let styles = clips.iter().map(|c| c.style).max().unwrap_or(0) + 1;
    let contents = clips.iter().map(|c| c.content).max().unwrap_or(0) + 1;
    (clips[0].skeleton.joint_count(), styles.max(2), contents)
}

/// Recursively overlays `patch` onto `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn target_spec(target: usize, second: Option<usize>, alpha: Option<f64>) -> TargetSpec {
    match (second, alpha) {
        (None, None) => TargetSpec::style(target),
        (None, Some(alpha)) => TargetSpec::Scaled {
            style: target,
            alpha,
        },
        (Some(second), alpha) => TargetSpec::Blend {
            first: target,
            second,
            alpha: alpha.unwrap_or(1.0),
        },
    }
}

fn synth_data(a: SynthArgs) -> Result<()> {
    let clips = synth_dataset(&SynthDatasetConfig {
        styles: a.styles,
        contents: a.contents,
        clips_per_pair: a.clips_per_pair,
        frames: a.frames,
        fps: a.fps,
        seed: a.seed,
    });
    if a.out.extension().is_some_and(|x| x == "json") {
        write_clip_cache(&a.out, &clips)?;
    } else {
        std::fs::create_dir_all(&a.out)?;
        let mut labels = serde_json::Map::new();
        for clip in &clips {
            write_bvh_file(a.out.join(format!("{}.bvh", clip.id)), clip)?;
            labels.insert(
                clip.id.clone(),
                json!({"style": clip.style, "content": clip.content}),
            );
        }
        std::fs::write(
            a.out.join("labels.json"),
            serde_json::to_string_pretty(&labels)?,
        )?;
    }
    println!("wrote {} clips to {}", clips.len(), a.out.display());
    Ok(())
}

fn pretrain(a: ClassifierArgs) -> Result<()> {
    let (clips, windows) = load_windows(&a.input)?;
    let (j, s, c) = label_counts(&clips);
    let training = ClassifierTraining {
        epochs: a.epochs,
        seed: a.seed,
        ..Default::default()
    };
    let cls = pretrain_classifier(&windows, SupervisionConfig::new(j, s, c), &training)?;
    println!("training accuracy {:.4}", cls.accuracy(&windows)?);
    cls.save(&a.out)?;
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let (clips, windows) = load_windows(&a.input)?;
    let (j, s, c) = label_counts(&clips);
    let mut config = serde_json::to_value(TrainConfig::new(j, s, c))?;
    if let Some(path) = &a.config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        merge(
            &mut config,
            serde_json::from_str(&text).context("parsing the config")?,
        );
    }
    let mut config: TrainConfig =
        serde_json::from_value(config).context("invalid training config")?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        config.epochs = epochs;
    }
    std::fs::create_dir_all(&a.out)?;
    config.checkpoint_dir = Some(a.out.clone());
    config.log_path = Some(a.out.join("train_log.ndjson"));
    let classifier = if config.ablation.no_per {
        None
    } else if let Some(path) = &a.checkpoint {
        Some(Classifier::load(path)?)
    } else {
        let training = ClassifierTraining {
            seed: config.seed,
            ..Default::default()
        };
        let cls = pretrain_classifier(&windows, SupervisionConfig::new(j, s, c), &training)?;
        cls.save(a.out.join("classifier.ckpt"))?;
        Some(cls)
    };
    let skeleton = clips[0].skeleton.clone();
    train(skeleton, &windows, classifier.as_ref(), &config, |r| {
        log::info!("{}", serde_json::to_string(r).unwrap_or_default())
    })?;
    println!("checkpoints in {}", a.out.display());
    Ok(())
}

fn transfer_cmd(a: TransferArgs) -> Result<()> {
    let generator = Generator::load(&a.checkpoint)?;
    let mut clip = load_clips(&a.input)?
        .into_iter()
        .next()
        .context("input has no clip")?;
    if let Some(fps) = a.fps {
        clip = downsample(&clip, fps)?;
    }
    let target = target_spec(a.target_style, a.second_style, a.alpha);
    let frames = generator.transfer_clip(&clip.frames, a.source_style, a.content, target)?;
    let out = MotionClip {
        id: format!("{}-stylized", clip.id),
        frames,
        ..clip.clone()
    };
    write_bvh_file(&a.out, &out)?;
    let sidecar = json!({
        "input": a.input,
        "checkpoint": a.checkpoint,
        "source_style": a.source_style,
        "content": a.content,
        "target": target,
        "frames": out.frames.len(),
        "fps": out.fps,
    });
    std::fs::write(
        a.out.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

fn eval_fmd(a: FmdArgs) -> Result<()> {
    let (clips_a, set_a) = load_windows(&a.set_a)?;
    let (_, set_b) = load_windows(&a.set_b)?;
    let extractor = match &a.checkpoint {
        Some(p) => FmdExtractor::load(p)?,
        None => {
            let training = FmdTraining {
                epochs: a.epochs,
                seed: a.seed,
                ..Default::default()
            };
            train_fmd_extractor(
                &set_a,
                FmdConfig::new(clips_a[0].skeleton.joint_count()),
                &training,
            )?
        }
    };
    let ra: Vec<&MotionWindow> = set_a.iter().collect();
    let rb: Vec<&MotionWindow> = set_b.iter().collect();
    let names = (a.set_a.display().to_string(), a.set_b.display().to_string());
    let report = FmdReport::compute((&names.0, &names.1), &ra, &rb, &extractor)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &a.out {
        report.write(out)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::SynthData(a) => synth_data(a),
        Command::PretrainClassifier(a) => pretrain(a),
        Command::Train(a) => train_cmd(a),
        Command::Transfer(a) => transfer_cmd(a),
        Command::Serve(a) => {
            let generator = Arc::new(Generator::load(&a.checkpoint)?);
            let transport = match a.port {
                Some(port) => Transport::Tcp { port },
                None => Transport::Stdio,
            };
            Ok(serve(generator, transport)?)
        }
        Command::Bench(a) => {
            let generator = Generator::load(&a.checkpoint)?;
            let mut config = BenchConfig::new(a.frames);
            config.target = TargetSpec::style(a.target_style);
            let mut report = bench_latency(&generator, &config)?;
            if !a.samples {
                report.samples_us.clear();
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::EvalFmd(a) => eval_fmd(a),
    }
}
