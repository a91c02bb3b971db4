//! Training and evaluation runs with their on-disk artifacts.
//!
//! Training directory:
//!
//! ```text
//! curves.csv                 step,d_loss,d_real,d_fake,consistency,g_loss
//! ckpt_<step>.bin            full training state
//! samples_<step>/img_<i>.ppm averaged-generator samples on fixed noise
//! nan_abort.txt              only after a non-finite loss
//! ```
//!
//! Evaluation directory: `report.csv` (`name,value,details-path`) and
//! `report_classes.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oasis_core::evaluation::{evaluate, training_frequencies, EvalConfig, MetricsReport};
use oasis_core::metrics::{frequency_groups, frequency_order};
use oasis_core::noise::sample_noise;
use oasis_core::rng::Rng;
use oasis_core::scene::Sample;
use oasis_core::tensor::Tensor;
use oasis_core::trainer::{train_step, TrainState};

use crate::checkpoint;
use crate::dataset::Dataset;
use crate::error::{LabError, Result};
use crate::image_io::save_ppm;

pub const CURVES: &str = "curves.csv";
pub const REPORT: &str = "report.csv";
pub const REPORT_CLASSES: &str = "report_classes.csv";
pub const NAN_DUMP: &str = "nan_abort.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    /// Checkpoint cadence in steps; the final step is always saved.
    pub checkpoint_every: u64,
    /// Sample cadence in steps; the final step is always sampled.
    pub sample_every: u64,
    pub num_samples: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            checkpoint_every: 500,
            sample_every: 500,
            num_samples: 4,
        }
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

pub fn write_curves(path: &Path, state: &TrainState) -> Result<()> {
    let csv_err = |e| LabError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "step",
        "d_loss",
        "d_real",
        "d_fake",
        "consistency",
        "g_loss",
    ])
    .map_err(csv_err)?;
    for s in &state.history {
        w.write_record([
            s.step.to_string(),
            s.d_loss.to_string(),
            s.d_real.to_string(),
            s.d_fake.to_string(),
            s.consistency.to_string(),
            s.g_loss.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Label maps and noise for progress samples; identical across resumes.
fn sample_inputs(state: &TrainState, ds: &Dataset, count: usize) -> Result<Vec<(Tensor, Tensor)>> {
    let source: &[Sample] = if ds.val.is_empty() {
        &ds.train
    } else {
        &ds.val
    };
    let model = &state.cfg.model;
    let mut rng = Rng::for_purpose(state.cfg.optim.seed, "train/samples");
    source
        .iter()
        .take(count)
        .map(|s| {
            let z = sample_noise(state.cfg.noise, &s.label, model.z_channels, &mut rng)?;
            Ok((z, s.label.one_hot(model.num_classes)?))
        })
        .collect()
}

fn write_samples(
    dir: &Path,
    state: &TrainState,
    inputs: &[(Tensor, Tensor)],
) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    inputs
        .iter()
        .enumerate()
        .map(|(i, (z, t))| {
            let path = dir.join(format!("img_{i}.ppm"));
            save_ppm(&path, &state.ema.generate(z, t)?)?;
            Ok(path)
        })
        .collect()
}

fn check_dataset(state: &TrainState, ds: &Dataset) -> Result<()> {
    let m = &state.cfg.model;
    let size = ds
        .train
        .first()
        .map(|s| (s.label.height(), s.label.width()));
    if ds.num_classes() != m.num_classes
        || size.is_some_and(|hw| hw != (m.image_size, m.image_size))
    {
        return Err(LabError::Usage(format!(
            "dataset has {} classes at {:?}, model expects {} at {}×{}",
            ds.num_classes(),
            size,
            m.num_classes,
            m.image_size,
            m.image_size
        )));
    }
    if ds.train.len() < state.cfg.optim.batch_size {
        return Err(LabError::Usage(format!(
            "{} training samples cannot fill a batch of {}",
            ds.train.len(),
            state.cfg.optim.batch_size
        )));
    }
    Ok(())
}

fn dump_non_finite(
    out: &Path,
    state: &TrainState,
    batch: &[usize],
    err: &oasis_core::Error,
) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "step {}", state.step + 1);
    let _ = writeln!(text, "error {err}");
    let _ = writeln!(text, "batch dataset indices {batch:?}");
    if let oasis_core::Error::NonFinite { index: Some(i), .. } = err {
        if let Some(d) = batch.get(*i) {
            let _ = writeln!(
                text,
                "offending sample: batch position {i}, dataset index {d}"
            );
        }
    }
    let path = out.join(NAN_DUMP);
    fs::write(&path, text).map_err(|e| LabError::io(&path, e))
}

/// Trains until `state.cfg.optim.total_steps`, writing artifacts into `out`.
/// Starting from a restored state continues the run bit-exactly.
pub fn run_training(
    mut state: TrainState,
    ds: &Dataset,
    out: &Path,
    opts: &RunOptions,
) -> Result<TrainState> {
    check_dataset(&state, ds)?;
    create_dir(out)?;
    let total = state.cfg.optim.total_steps;
    let inputs = sample_inputs(&state, ds, opts.num_samples)?;
    while state.step < total {
        let batch_idx = state.next_batch(ds.train.len())?;
        let batch: Vec<&Sample> = batch_idx.iter().map(|&i| &ds.train[i]).collect();
        if let Err(e) = train_step(&mut state, &batch) {
            if matches!(e, oasis_core::Error::NonFinite { .. }) {
                dump_non_finite(out, &state, &batch_idx, &e)?;
                write_curves(&out.join(CURVES), &state)?;
            }
            return Err(e.into());
        }
        let step = state.step;
        let last = step == total;
        if last || (opts.checkpoint_every > 0 && step.is_multiple_of(opts.checkpoint_every)) {
            checkpoint::save(&out.join(checkpoint::file_name(step)), &state)?;
            write_curves(&out.join(CURVES), &state)?;
        }
        if opts.num_samples > 0
            && (last || (opts.sample_every > 0 && step.is_multiple_of(opts.sample_every)))
        {
            write_samples(&out.join(format!("samples_{step}")), &state, &inputs)?;
        }
    }
    write_curves(&out.join(CURVES), &state)?;
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub step: u64,
    pub raw_generator_read: bool,
}

const REPORT_NOTE: &str = "# frechet_dfeat, precision and recall embed images with the trained discriminator's bottleneck; \
they track progress within a run and are not comparable to Inception-based scores\n";

/// Evaluates the checkpoint at `ckpt` on the validation split and writes
/// `report.csv` and `report_classes.csv` into `out`.
pub fn run_evaluation(
    ckpt: &Path,
    ds: &Dataset,
    cfg: &EvalConfig,
    out: &Path,
) -> Result<EvalOutcome> {
    let loaded = checkpoint::load_for_eval(ckpt)?;
    let n = loaded.cfg.model.num_classes;
    if ds.num_classes() != n {
        return Err(LabError::Usage(format!(
            "dataset has {} classes, checkpoint {n}",
            ds.num_classes()
        )));
    }
    let freq = training_frequencies(&ds.train, n);
    let report = evaluate(&loaded.ema, &loaded.discriminator, &ds.val, &freq, cfg)?;
    create_dir(out)?;

    let classes_path = out.join(REPORT_CLASSES);
    let csv_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e| LabError::Csv { path: p, source: e }
    };
    let order = frequency_order(&freq);
    let groups = frequency_groups(&freq, report.grouped_iou_real.len())?;
    let group_of = |c: usize| {
        groups
            .iter()
            .position(|g| g.contains(&c))
            .expect("groups partition the classes")
    };
    let mut w = csv::Writer::from_path(&classes_path).map_err(csv_err(&classes_path))?;
    w.write_record([
        "class",
        "train_pixels",
        "frequency_rank",
        "group",
        "iou_real",
    ])
    .map_err(csv_err(&classes_path))?;
    for (c, iou) in report.class_iou_real.iter().enumerate() {
        let rank = order
            .iter()
            .position(|&k| k == c)
            .expect("order is a permutation");
        w.write_record([
            c.to_string(),
            freq[c].to_string(),
            rank.to_string(),
            group_of(c).to_string(),
            iou.map_or_else(String::new, |v| v.to_string()),
        ])
        .map_err(csv_err(&classes_path))?;
    }
    w.flush().map_err(|e| LabError::io(&classes_path, e))?;

    let report_path = out.join(REPORT);
    let mut rows = report.rows();
    rows.push(("checkpoint_step".into(), loaded.step as f64));
    rows.push((
        "raw_generator_read".into(),
        f64::from(u8::from(loaded.raw_generator_read)),
    ));
    let mut buf = Vec::from(REPORT_NOTE.as_bytes());
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["name", "value", "details-path"])
            .map_err(csv_err(&report_path))?;
        for (name, value) in rows {
            let per_class = name == "miou_real"
                || name.starts_with("iou_real_")
                || name.starts_with("grouped_iou_");
            w.write_record([
                name.as_str(),
                &value.to_string(),
                if per_class { REPORT_CLASSES } else { "" },
            ])
            .map_err(csv_err(&report_path))?;
        }
        w.flush().map_err(|e| LabError::io(&report_path, e))?;
    }
    fs::write(&report_path, buf).map_err(|e| LabError::io(&report_path, e))?;

    Ok(EvalOutcome {
        report,
        step: loaded.step,
        raw_generator_read: loaded.raw_generator_read,
    })
}

/// Reads `report.csv` back as `(name, value)` pairs.
pub fn read_report(path: &Path) -> Result<Vec<(String, f64)>> {
    let csv_err = |e| LabError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let at = rec.position().map_or(0, |p| p.byte());
        let value = rec
            .get(1)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| LabError::format(path, at, "row without a numeric value"))?;
        out.push((rec.get(0).unwrap_or_default().to_string(), value));
    }
    Ok(out)
}
