//! `oasis-lab` subcommands. Each writes its outputs plus a `manifest.json`
//! into its `--out` directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use oasis_core::evaluation::EvalConfig;
use oasis_core::labelmix::Mask;
use oasis_core::metrics::ConfusionMatrix;
use oasis_core::models::Generator;
use oasis_core::noise::{interpolate, resample_local, sample_noise, NoiseScheme};
use oasis_core::rng::Rng;
use oasis_core::scene::{default_palette, LabelMap, SceneConfig};
use oasis_core::tensor::Tensor;
use oasis_core::trainer::{MaskKind, OptimConfig, TrainConfig, TrainState};
use oasis_core::ModelConfig;
use serde_json::json;

use crate::checkpoint;
use crate::container::{ContainerWriter, Encoder};
use crate::dataset::{self, Dataset};
use crate::error::{LabError, Result};
use crate::image_io::{colorize, load_pgm, load_ppm, save_pgm, save_ppm};
use crate::manifest::{self, RunManifest};
use crate::run::{create_dir, run_evaluation, run_training, RunOptions, REPORT, REPORT_CLASSES};

#[derive(Debug, Parser)]
#[command(
    name = "oasis-lab",
    version,
    about = "Semantic image synthesis with a segmentation discriminator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural dataset of labeled scenes.
    GenData(GenDataArgs),
    /// Train a generator/discriminator pair.
    Train(TrainArgs),
    /// Score a checkpoint on the validation split.
    Eval(EvalArgs),
    /// Generate images for one label map.
    Sample(SampleArgs),
    /// Interpolate between two noise tensors for one label map.
    Interpolate(InterpolateArgs),
    /// Segment an image with the discriminator.
    Segment(SegmentArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub num_train: usize,
    #[arg(long, default_value_t = 64)]
    pub num_val: usize,
    /// Number of semantic classes, including the background.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u16).range(2..=64))]
    pub classes: u16,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative draw probability of each foreground class `1..N`, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub class_weights: Option<Vec<f64>>,
    /// Validation samples also exported as `val/label_<i>.pgm` and `val/img_<i>.ppm`.
    #[arg(long, default_value_t = 4)]
    pub export: usize,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Image,
    Region,
    Pixel,
    Mix,
}

impl From<SchemeArg> for NoiseScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Image => NoiseScheme::Image,
            SchemeArg::Region => NoiseScheme::Region,
            SchemeArg::Pixel => NoiseScheme::Pixel,
            SchemeArg::Mix => NoiseScheme::Mix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskArg {
    Labelmix,
    Cutmix,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file or the directory holding `dataset.bin`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub steps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight of the mixing consistency term; 0 disables it.
    #[arg(long, default_value_t = 5.0)]
    pub lambda_lm: f64,
    /// Weight real-class pixels by inverse class frequency.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub balance: bool,
    #[arg(long, value_enum, default_value_t = SchemeArg::Image)]
    pub noise_scheme: SchemeArg,
    /// Train the generator without noise input.
    #[arg(long)]
    pub no_noise: bool,
    #[arg(long, value_enum, default_value_t = MaskArg::Labelmix)]
    pub mask: MaskArg,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub base_width: usize,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 16)]
    pub z_channels: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr_g: f64,
    #[arg(long, default_value_t = 4e-4)]
    pub lr_d: f64,
    /// Generator weight averaging; 0.9999 suits runs of 10^5 steps or more.
    #[arg(long, default_value_t = 0.99)]
    pub ema_decay: f64,
    #[arg(long, default_value_t = 500)]
    pub checkpoint_every: u64,
    #[arg(long, default_value_t = 500)]
    pub sample_every: u64,
    #[arg(long, default_value_t = 4)]
    pub num_samples: usize,
    /// Continue from a checkpoint; model and optimizer settings come from it.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to `eval_<step>` next to the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Image)]
    pub noise_scheme: SchemeArg,
    #[arg(long, default_value_t = 8)]
    pub diversity_maps: usize,
    #[arg(long, default_value_t = 20)]
    pub diversity_samples: usize,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleMode {
    Global,
    Local,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Label map as a binary PGM whose gray levels are class indices.
    #[arg(long)]
    pub label_file: PathBuf,
    #[arg(long, value_enum, default_value_t = SampleMode::Global)]
    pub mode: SampleMode,
    /// Class whose region is resampled in local mode.
    #[arg(long)]
    pub region_class: Option<u8>,
    #[arg(long, default_value_t = 4)]
    pub num: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Image)]
    pub noise_scheme: SchemeArg,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub label_file: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    /// Interpolate only the noise inside this class's region.
    #[arg(long)]
    pub region_class: Option<u8>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Image)]
    pub noise_scheme: SchemeArg,
    /// Also write every frame's noise tensor to `noise.bin`.
    #[arg(long)]
    pub dump_noise: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Binary PPM image.
    #[arg(long)]
    pub image: PathBuf,
    /// Ground-truth label map for per-class IoU.
    #[arg(long)]
    pub label_file: Option<PathBuf>,
    /// Generate this many images from the predicted label map.
    #[arg(long, default_value_t = 0)]
    pub recreate: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest file or the directory holding `manifest.json`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub const NOISE_MAGIC: &[u8; 8] = b"OASISNZ\0";

/// Rejects an output directory that already holds a manifest unless forced.
fn prepare_out(out: &Path, force: bool) -> Result<()> {
    if out.join(manifest::FILE_NAME).exists() && !force {
        return Err(LabError::Usage(format!(
            "{} already holds outputs; pass --force to overwrite",
            out.display()
        )));
    }
    create_dir(out)
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

fn label_for(ckpt: &checkpoint::EvalCheckpoint, path: &Path) -> Result<(LabelMap, Tensor)> {
    let label = load_pgm(path)?;
    let m = &ckpt.cfg.model;
    if (label.height(), label.width()) != (m.image_size, m.image_size) {
        return Err(LabError::Usage(format!(
            "label map is {}×{}, checkpoint expects {}×{}",
            label.height(),
            label.width(),
            m.image_size,
            m.image_size
        )));
    }
    if label
        .max_label()
        .is_some_and(|c| c as usize >= m.num_classes)
    {
        return Err(LabError::Usage(format!(
            "label map uses classes beyond the checkpoint's {}",
            m.num_classes
        )));
    }
    let t = label.one_hot(m.num_classes)?;
    Ok((label, t))
}

/// Mask of `class` in `label`; empty with a warning when the class is absent.
fn region(label: &LabelMap, class: u8) -> Mask {
    let m = Mask::from_classes(label, &[class]);
    if m.area() == 0.0 {
        eprintln!("warning: class {class} is absent from the label map; the region is empty");
    }
    m
}

pub fn gen_data(a: &GenDataArgs, argv: Vec<String>) -> Result<RunManifest> {
    prepare_out(&a.out, a.force)?;
    let mut scenes = SceneConfig::new(a.classes as usize, a.size, a.seed)?;
    if let Some(w) = &a.class_weights {
        scenes.class_weights = w.clone();
        scenes.validate()?;
    }
    let ds = Dataset::generate(scenes, a.num_train, a.num_val)?;
    let path = a.out.join(dataset::FILE_NAME);
    dataset::save(&path, &ds)?;
    let mut artifacts = vec![rel(&a.out, &path)];
    if a.export > 0 && !ds.val.is_empty() {
        let dir = a.out.join("val");
        create_dir(&dir)?;
        for (i, s) in ds.val.iter().take(a.export).enumerate() {
            let (lp, ip) = (
                dir.join(format!("label_{i}.pgm")),
                dir.join(format!("img_{i}.ppm")),
            );
            save_pgm(&lp, &s.label)?;
            save_ppm(&ip, &s.image)?;
            artifacts.extend([rel(&a.out, &lp), rel(&a.out, &ip)]);
        }
    }
    let config = json!({
        "scenes": ds.scenes,
        "num_train": a.num_train,
        "num_val": a.num_val,
        "export": a.export,
    });
    let mut m = RunManifest::new("gen-data", argv, a.seed, config);
    m.artifacts = artifacts;
    Ok(m)
}

pub fn train_config(a: &TrainArgs, ds: &Dataset) -> TrainConfig {
    let image_size = ds
        .train
        .first()
        .map_or(ds.scenes.image_size, |s| s.label.height());
    TrainConfig {
        model: ModelConfig {
            num_classes: ds.num_classes(),
            image_size,
            z_channels: a.z_channels,
            base_width: a.base_width,
            depth: a.depth,
            use_noise: !a.no_noise,
        },
        optim: OptimConfig {
            lr_g: a.lr_g,
            lr_d: a.lr_d,
            batch_size: a.batch_size,
            total_steps: a.steps,
            ema_decay: a.ema_decay,
            lambda_lm: a.lambda_lm,
            seed: a.seed,
            ..OptimConfig::default()
        },
        balance: a.balance,
        noise: a.noise_scheme.into(),
        mask: match a.mask {
            MaskArg::Labelmix => MaskKind::LabelMix,
            MaskArg::Cutmix => MaskKind::CutMix,
        },
        ..TrainConfig::default()
    }
}

pub fn train(a: &TrainArgs, argv: Vec<String>) -> Result<RunManifest> {
    prepare_out(&a.out, a.force)?;
    let data_path = dataset::resolve(&a.data);
    let ds = dataset::load(&data_path)?;
    let state = match &a.resume {
        Some(ckpt) => {
            let mut s = checkpoint::load(ckpt)?;
            s.cfg.optim.total_steps = a.steps;
            s
        }
        None => TrainState::new(train_config(a, &ds))?,
    };
    let opts = RunOptions {
        checkpoint_every: a.checkpoint_every,
        sample_every: a.sample_every,
        num_samples: a.num_samples,
    };
    let config = json!({
        "train": state.cfg,
        "checkpoint_every": opts.checkpoint_every,
        "sample_every": opts.sample_every,
        "num_samples": opts.num_samples,
    });
    let mut m = RunManifest::new("train", argv, state.cfg.optim.seed, config);
    m.inputs.push(data_path.display().to_string());
    if let Some(r) = &a.resume {
        m.inputs.push(r.display().to_string());
    }
    let first = state.step;
    let state = run_training(state, &ds, &a.out, &opts)?;
    m.artifacts.push(crate::run::CURVES.to_string());
    for step in first + 1..=state.step {
        let last = step == state.step;
        if last || (opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0) {
            m.artifacts.push(checkpoint::file_name(step));
        }
        if opts.num_samples > 0
            && (last || (opts.sample_every > 0 && step % opts.sample_every == 0))
        {
            m.artifacts.push(format!("samples_{step}/"));
        }
    }
    Ok(m)
}

pub fn eval(a: &EvalArgs, argv: Vec<String>) -> Result<RunManifest> {
    let cfg = EvalConfig {
        seed: a.seed,
        noise: a.noise_scheme.into(),
        diversity_maps: a.diversity_maps,
        diversity_samples: a.diversity_samples,
        ..EvalConfig::default()
    };
    let out = match &a.out {
        Some(o) => o.clone(),
        None => {
            let step = checkpoint::load_for_eval(&a.ckpt)?.step;
            a.ckpt
                .parent()
                .unwrap_or(Path::new("."))
                .join(format!("eval_{step}"))
        }
    };
    prepare_out(&out, a.force)?;
    let data_path = dataset::resolve(&a.data);
    let ds = dataset::load(&data_path)?;
    let outcome = run_evaluation(&a.ckpt, &ds, &cfg, &out)?;
    for (k, v) in outcome.report.rows() {
        println!("{k:>22} {v:.6}");
    }
    let mut m = RunManifest::new("eval", argv, a.seed, json!({ "eval": cfg, "out": out }));
    m.inputs = vec![
        a.ckpt.display().to_string(),
        data_path.display().to_string(),
    ];
    m.artifacts = vec![REPORT.to_string(), REPORT_CLASSES.to_string()];
    if a.out.is_none() {
        m.save(&out)?;
    }
    Ok(m)
}

fn noise_for(
    g: &Generator,
    scheme: NoiseScheme,
    label: &LabelMap,
    rng: &mut Rng,
) -> Result<Tensor> {
    Ok(sample_noise(scheme, label, g.config().z_channels, rng)?)
}

pub fn sample(a: &SampleArgs, argv: Vec<String>) -> Result<RunManifest> {
    prepare_out(&a.out, a.force)?;
    let ck = checkpoint::load_for_eval(&a.ckpt)?;
    let (label, t) = label_for(&ck, &a.label_file)?;
    let scheme: NoiseScheme = a.noise_scheme.into();
    let base = noise_for(
        &ck.ema,
        scheme,
        &label,
        &mut Rng::for_purpose(a.seed, "sample/base"),
    )?;
    let area = match (a.mode, a.region_class) {
        (SampleMode::Local, Some(c)) => Some(region(&label, c)),
        (SampleMode::Local, None) => {
            return Err(LabError::Usage("--mode local needs --region-class".into()))
        }
        (SampleMode::Global, _) => None,
    };
    let mut artifacts = Vec::new();
    for i in 0..a.num {
        let mut rng = Rng::for_purpose(a.seed, &format!("sample/{i}"));
        let z = match &area {
            Some(m) => resample_local(&base, m, &mut rng)?,
            None => noise_for(&ck.ema, scheme, &label, &mut rng)?,
        };
        let path = a.out.join(format!("img_{i}.ppm"));
        save_ppm(&path, &ck.ema.generate(&z, &t)?)?;
        artifacts.push(rel(&a.out, &path));
    }
    let mode = match a.mode {
        SampleMode::Global => "global",
        SampleMode::Local => "local",
    };
    let config =
        json!({ "mode": mode, "region_class": a.region_class, "num": a.num, "noise": scheme });
    let mut m = RunManifest::new("sample", argv, a.seed, config);
    m.inputs = vec![
        a.ckpt.display().to_string(),
        a.label_file.display().to_string(),
    ];
    m.artifacts = artifacts;
    Ok(m)
}

pub fn interpolate_cmd(a: &InterpolateArgs, argv: Vec<String>) -> Result<RunManifest> {
    if a.steps < 2 {
        return Err(LabError::Usage("--steps must be at least 2".into()));
    }
    prepare_out(&a.out, a.force)?;
    let ck = checkpoint::load_for_eval(&a.ckpt)?;
    let (label, t) = label_for(&ck, &a.label_file)?;
    let scheme: NoiseScheme = a.noise_scheme.into();
    let z0 = noise_for(
        &ck.ema,
        scheme,
        &label,
        &mut Rng::for_purpose(a.seed, "interpolate/start"),
    )?;
    let mut end_rng = Rng::for_purpose(a.seed, "interpolate/end");
    let area = a.region_class.map(|c| region(&label, c));
    let z1 = match &area {
        Some(m) => resample_local(&z0, m, &mut end_rng)?,
        None => noise_for(&ck.ema, scheme, &label, &mut end_rng)?,
    };
    let frames = interpolate(&z0, &z1, a.steps, area.as_ref())?;
    let mut artifacts = Vec::new();
    let mut dump = Encoder::new();
    for (i, z) in frames.iter().enumerate() {
        let path = a.out.join(format!("frame_{i}.ppm"));
        save_ppm(&path, &ck.ema.generate(z, &t)?)?;
        artifacts.push(rel(&a.out, &path));
        dump.tensor(z);
    }
    if a.dump_noise {
        let path = a.out.join("noise.bin");
        let mut w = ContainerWriter::create(&path, NOISE_MAGIC)?;
        w.record("frames", &dump.into_bytes())?;
        w.finish()?;
        artifacts.push(rel(&a.out, &path));
    }
    let config = json!({ "steps": a.steps, "region_class": a.region_class, "noise": scheme, "dump_noise": a.dump_noise });
    let mut m = RunManifest::new("interpolate", argv, a.seed, config);
    m.inputs = vec![
        a.ckpt.display().to_string(),
        a.label_file.display().to_string(),
    ];
    m.artifacts = artifacts;
    Ok(m)
}

pub fn segment(a: &SegmentArgs, argv: Vec<String>) -> Result<RunManifest> {
    prepare_out(&a.out, a.force)?;
    let ck = checkpoint::load_for_eval(&a.ckpt)?;
    let model = &ck.cfg.model;
    let image = load_ppm(&a.image)?;
    if image.shape()[1..] != [model.image_size, model.image_size] {
        return Err(LabError::Usage(format!(
            "image is {}×{}, checkpoint expects {}×{}",
            image.shape()[1],
            image.shape()[2],
            model.image_size,
            model.image_size
        )));
    }
    let pred = ck.discriminator.segment(&image)?;
    let mut artifacts = Vec::new();
    let lp = a.out.join("label.pgm");
    save_pgm(&lp, &pred)?;
    let cp = a.out.join("label.ppm");
    save_ppm(&cp, &colorize(&pred, &default_palette(model.num_classes)?)?)?;
    artifacts.extend([rel(&a.out, &lp), rel(&a.out, &cp)]);

    let mut miou = None;
    if let Some(gt_path) = &a.label_file {
        let gt = load_pgm(gt_path)?;
        let mut cm = ConfusionMatrix::new(model.num_classes);
        cm.add(&pred, &gt)?;
        let path = a.out.join("iou.csv");
        let csv_err = |e| LabError::Csv {
            path: path.clone(),
            source: e,
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["class", "iou"]).map_err(csv_err)?;
        for (c, v) in cm.per_class_iou().iter().enumerate() {
            w.write_record([c.to_string(), v.map_or_else(String::new, |v| v.to_string())])
                .map_err(csv_err)?;
        }
        w.write_record(["mean".to_string(), cm.miou().to_string()])
            .map_err(csv_err)?;
        w.flush().map_err(|e| LabError::io(&path, e))?;
        println!("mIoU {:.4}", cm.miou());
        miou = Some(cm.miou());
        artifacts.push(rel(&a.out, &path));
    }

    let t = pred.one_hot(model.num_classes)?;
    for i in 0..a.recreate {
        let z = noise_for(
            &ck.ema,
            ck.cfg.noise,
            &pred,
            &mut Rng::for_purpose(a.seed, &format!("segment/{i}")),
        )?;
        let path = a.out.join(format!("recreate_{i}.ppm"));
        save_ppm(&path, &ck.ema.generate(&z, &t)?)?;
        artifacts.push(rel(&a.out, &path));
    }
    let config = json!({ "recreate": a.recreate, "miou": miou });
    let mut m = RunManifest::new("segment", argv, a.seed, config);
    m.inputs = vec![a.ckpt.display().to_string(), a.image.display().to_string()];
    m.inputs
        .extend(a.label_file.iter().map(|p| p.display().to_string()));
    m.artifacts = artifacts;
    Ok(m)
}

/// The recorded argument list with `--out` redirected and `--force` added.
pub fn replay_argv(recorded: &[String], out: &Path) -> Vec<String> {
    let mut argv = Vec::with_capacity(recorded.len() + 3);
    let mut it = recorded.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
        } else if !a.starts_with("--out=") && a != "--force" {
            argv.push(a.clone());
        }
    }
    argv.extend([
        "--out".to_string(),
        out.display().to_string(),
        "--force".to_string(),
    ]);
    argv
}

/// Parses and runs one command line (without the program name), then writes
/// the manifest. Returns the manifest and the output directory.
pub fn execute(argv: Vec<String>) -> Result<(RunManifest, PathBuf)> {
    let cli = Cli::try_parse_from(
        std::iter::once(OsString::from("oasis-lab")).chain(argv.iter().map(OsString::from)),
    )
    .map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp
        | ErrorKind::DisplayVersion
        | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => e.exit(),
        _ => LabError::Usage(e.render().to_string()),
    })?;
    let (m, out) = match &cli.command {
        Command::GenData(a) => (gen_data(a, argv)?, a.out.clone()),
        Command::Train(a) => (train(a, argv)?, a.out.clone()),
        Command::Eval(a) => {
            let m = eval(a, argv)?;
            let out = PathBuf::from(
                m.config["out"]
                    .as_str()
                    .expect("eval records its output directory"),
            );
            (m, out)
        }
        Command::Sample(a) => (sample(a, argv)?, a.out.clone()),
        Command::Interpolate(a) => (interpolate_cmd(a, argv)?, a.out.clone()),
        Command::Segment(a) => (segment(a, argv)?, a.out.clone()),
        Command::Replay(a) => {
            let recorded = RunManifest::load(&a.manifest)?;
            return execute(replay_argv(&recorded.argv, &a.out));
        }
    };
    m.save(&out)?;
    Ok((m, out))
}
