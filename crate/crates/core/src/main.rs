use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use actionscope::action_parse::{
    train_parser, AttributeSchema, ParseSample, ParserConfig, ParserModel, ParserSpec, TrainConfig,
};
use actionscope::capture::{capture_clip, CaptureConfig, ObservedFrame};
use actionscope::data_io::{
    load_clips, read_json, synth_generate, write_json, AnnotatedClip, MocapSequence, StateRecord,
    SynthConfig,
};
use actionscope::embedding::{fit_space, load_spaces_dir, EmbeddingSpace};
use actionscope::kinematics::{Keypoints2D, SkeletonDef};
use actionscope::metrics::{pck, spearman, top1, PckConfig};

#[derive(Parser)]
#[command(
    version,
    about = "Pose embedding, keypoint motion capture and skeleton action parsing"
)]
struct Cli {
    /// Overrides the seed of the subcommand's config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config for the subcommand; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic mocap, embedding spaces and annotated clips into a directory.
    Synth {
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        skeleton: Option<PathBuf>,
    },
    /// Fit one sub-motion embedding space from a mocap file.
    FitEmbedding {
        #[arg(long)]
        mocap: PathBuf,
        #[arg(long)]
        submotion: String,
        #[arg(long)]
        k: usize,
    },
    /// Fit capture states to every frame of an annotated clip.
    Capture {
        /// A clip, or a list of clips together with --index.
        #[arg(long)]
        clip: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        spaces: PathBuf,
        #[arg(long)]
        skeleton: Option<PathBuf>,
        /// Use the clip's sub-motion labels instead of selecting a space per frame.
        #[arg(long)]
        use_labels: bool,
    },
    /// Train an action parser and write its checkpoint.
    ParseTrain {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate a parser checkpoint on annotated clips.
    ParseEval {
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compute one metric from prediction and ground-truth files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        metric: Metric,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    #[value(name = "pck0.3")]
    Pck03,
    #[value(name = "pck0.5")]
    Pck05,
    Top1,
    Spearman,
}

/// Config file of `parse-train`.
#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct ParseTrainConfig {
    parser: ParserConfig,
    train: TrainConfig,
    /// Share of `--data` held out for validation when `--val` is absent.
    val_fraction: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ClipFile {
    One(AnnotatedClip),
    Many(Vec<AnnotatedClip>),
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(read_json(p).with_context(|| format!("reading config {}", p.display()))?),
        None => Ok(T::default()),
    }
}

fn out_path(out: Option<&Path>) -> Result<&Path> {
    out.ok_or_else(|| anyhow!("--out is required for this subcommand"))
}

fn skeleton(path: Option<&Path>) -> Result<SkeletonDef> {
    Ok(match path {
        Some(p) => SkeletonDef::load(p)?,
        None => SkeletonDef::standard(),
    })
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn synth(cli: &Cli, schema: Option<&Path>, skel: Option<&Path>) -> Result<()> {
    let dir = out_path(cli.out.as_deref())?;
    let mut config: SynthConfig = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let schema = match schema {
        Some(p) => AttributeSchema::load(p)?,
        None => AttributeSchema::diving(),
    };
    let skel = skeleton(skel)?;
    let out = synth_generate(&schema, &skel, None, &config)?;
    std::fs::create_dir_all(dir.join("spaces"))?;
    schema.save(dir.join("schema.json"))?;
    skel.save(dir.join("skeleton.json"))?;
    write_json(dir.join("mocap.json"), &out.mocap)?;
    for space in &out.spaces {
        space.save(dir.join("spaces").join(format!("{}.json", space.submotion)))?;
    }
    write_json(dir.join("clips.json"), &out.clips)?;
    write_json(dir.join("states.json"), &out.states)?;
    print_json(&serde_json::json!({"clips": out.clips.len(), "out": dir}))
}

fn fit_embedding(cli: &Cli, mocap: &Path, submotion: &str, k: usize) -> Result<()> {
    let out = out_path(cli.out.as_deref())?;
    let seq: MocapSequence = read_json(mocap)?;
    let poses = seq.poses_for(submotion);
    if poses.is_empty() {
        bail!("no frames labeled {submotion:?} in {}", mocap.display());
    }
    let space = fit_space(&poses, k, submotion)?;
    space.save(out)?;
    print_json(&serde_json::json!({
        "submotion": submotion,
        "frames": poses.len(),
        "variance_kept": space.cumulative_variance().last(),
    }))
}

fn capture(
    cli: &Cli,
    clip: &Path,
    index: usize,
    spaces: &Path,
    skel: Option<&Path>,
    use_labels: bool,
) -> Result<()> {
    let out = out_path(cli.out.as_deref())?;
    let config: CaptureConfig = load_config(cli.config.as_deref())?;
    let clip = match read_json::<ClipFile>(clip)? {
        ClipFile::One(c) => c,
        ClipFile::Many(mut v) => {
            if index >= v.len() {
                bail!("clip index {index} out of range for {} clips", v.len());
            }
            v.swap_remove(index)
        }
    };
    clip.validate()?;
    let spaces: Vec<EmbeddingSpace> = if spaces.is_dir() {
        load_spaces_dir(spaces)?
    } else {
        vec![EmbeddingSpace::load(spaces)?]
    };
    let skel = skeleton(skel)?;
    let labels = clip.labels();
    let frames: Vec<ObservedFrame> = clip.observed();
    let result = capture_clip(
        &frames,
        &spaces,
        &skel,
        use_labels.then_some(labels.as_slice()),
        &config,
    )?;
    let records: Vec<StateRecord> = result
        .frames
        .iter()
        .map(StateRecord::from_capture)
        .collect();
    write_json(out, &records)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    print_json(&serde_json::json!({"frames": records.len(), "failed": failed}))
}

fn samples(clips: &[AnnotatedClip], spec: &ParserSpec) -> Result<Vec<ParseSample>> {
    clips
        .iter()
        .enumerate()
        .map(|(i, c)| ParseSample::from_clip(c, spec).with_context(|| format!("clip {i}")))
        .collect()
}

fn parse_train(
    cli: &Cli,
    schema: &Path,
    data: &Path,
    val: Option<&Path>,
    checkpoint: &Path,
) -> Result<()> {
    let mut config: ParseTrainConfig = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        config.train.seed = s;
    }
    let schema = AttributeSchema::load(schema)?;
    let spec = ParserSpec::new(config.parser, schema)?;
    let mut train = samples(&load_clips(data)?, &spec)?;
    let val = match val {
        Some(p) => Some(samples(&load_clips(p)?, &spec)?),
        None if config.val_fraction > 0.0 => {
            if !(config.val_fraction < 1.0) {
                bail!("val_fraction must be below 1, got {}", config.val_fraction);
            }
            let n = ((train.len() as f64) * config.val_fraction).round() as usize;
            Some(train.split_off(train.len() - n.min(train.len() - 1)))
        }
        None => None,
    };
    let result = train_parser(&train, val.as_deref(), &spec, &config.train)?;
    result.model.save(checkpoint)?;
    if let Some(out) = cli.out.as_deref() {
        write_json(out, &result.curve)?;
    }
    let last = result.curve.last().expect("at least one epoch");
    print_json(&serde_json::json!({
        "epochs": result.curve.len(),
        "train_loss": last.train_loss,
        "val": last.val,
        "epochs_to_target": result.epochs_to_target,
    }))
}

fn parse_eval(cli: &Cli, schema: Option<&Path>, data: &Path, checkpoint: &Path) -> Result<()> {
    let model = ParserModel::load(checkpoint)?;
    if let Some(p) = schema {
        if AttributeSchema::load(p)? != model.spec.schema {
            bail!(
                "schema {} differs from the checkpoint's schema",
                p.display()
            );
        }
    }
    let samples = samples(&load_clips(data)?, &model.spec)?;
    let (preds, report) = model.evaluate(&samples)?;
    if let Some(out) = cli.out.as_deref() {
        write_json(out, &preds)?;
    }
    print_json(&report)
}

fn eval(pred: &Path, gt: &Path, metric: Metric) -> Result<()> {
    let value = match metric {
        Metric::Pck03 | Metric::Pck05 => {
            let threshold = if matches!(metric, Metric::Pck03) {
                0.3
            } else {
                0.5
            };
            let p: Vec<Keypoints2D> = read_json(pred)?;
            let g: Vec<ObservedFrame> = read_json(gt)?;
            let kp: Vec<Keypoints2D> = g.iter().map(|f| f.keypoints.clone()).collect();
            let vis: Vec<_> = g.into_iter().map(|f| f.visibility).collect();
            pck(&p, &kp, &vis, &PckConfig::new(threshold)?)?
        }
        Metric::Top1 => {
            let p: Vec<Vec<f64>> = read_json(pred)?;
            let g: Vec<usize> = read_json(gt)?;
            top1(&p, &g)?
        }
        Metric::Spearman => {
            let p: Vec<f64> = read_json(pred)?;
            let g: Vec<f64> = read_json(gt)?;
            spearman(&p, &g)?
        }
    };
    print_json(&value)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { schema, skeleton } => synth(cli, schema.as_deref(), skeleton.as_deref()),
        Command::FitEmbedding {
            mocap,
            submotion,
            k,
        } => fit_embedding(cli, mocap, submotion, *k),
        Command::Capture {
            clip,
            index,
            spaces,
            skeleton,
            use_labels,
        } => capture(cli, clip, *index, spaces, skeleton.as_deref(), *use_labels),
        Command::ParseTrain {
            schema,
            data,
            val,
            checkpoint,
        } => parse_train(cli, schema, data, val.as_deref(), checkpoint),
        Command::ParseEval {
            schema,
            data,
            checkpoint,
        } => parse_eval(cli, schema.as_deref(), data, checkpoint),
        Command::Eval { pred, gt, metric } => eval(pred, gt, *metric),
    }
}

/// Variant name of a library error, or "other".
fn error_kind(e: &anyhow::Error) -> String {
    match e.downcast_ref::<actionscope::Error>() {
        Some(err) => format!("{err:?}")
            .split(|c: char| !c.is_alphanumeric())
            .next()
            .unwrap_or("other")
            .to_string(),
        None => "other".into(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": error_kind(&e),
                "message": format!("{e:#}"),
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
