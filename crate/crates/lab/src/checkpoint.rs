//! Checkpoint container holding a complete `TrainState`.
//!
//! Records: `config` (JSON), `step`, `generator`, `discriminator`, `ema`,
//! `adam_g`, `adam_d`, `rngs`, `history`. Evaluation loads seek past the
//! `generator` payload, so raw generator weights are never read.

use std::path::{Path, PathBuf};

use oasis_core::models::{Discriminator, Generator};
use oasis_core::optim::Moments;
use oasis_core::params::ParamStore;
use oasis_core::rng::{Rng, RngState};
use oasis_core::trainer::{StepLog, TrainConfig, TrainRngs, TrainState};

use crate::container::{
    take_record, ContainerReader, ContainerWriter, Decoder, Encoder, RecordHeader,
};
use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"OASISCK\0";

pub fn file_name(step: u64) -> String {
    format!("ckpt_{step}.bin")
}

fn encode_moments(m: &Moments) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u64(m.t);
    for bufs in [&m.m, &m.v] {
        e.u32(bufs.len() as u32);
        for b in bufs.iter() {
            e.f64s(b);
        }
    }
    e.into_bytes()
}

fn decode_moments(d: &mut Decoder<'_>, like: &ParamStore) -> Result<Moments> {
    let t = d.u64()?;
    let mut halves = Vec::with_capacity(2);
    for _ in 0..2 {
        let at = d.offset();
        let n = d.u32()? as usize;
        if n != like.len() {
            return Err(d.error_at(
                at,
                format!("{n} moment buffers, model has {} tensors", like.len()),
            ));
        }
        let mut bufs = Vec::with_capacity(n);
        for t in like.tensors() {
            let at = d.offset();
            let b = d.f64s()?;
            if b.len() != t.len() {
                return Err(d.error_at(
                    at,
                    format!(
                        "moment buffer of {} values for a tensor of {}",
                        b.len(),
                        t.len()
                    ),
                ));
            }
            bufs.push(b);
        }
        halves.push(bufs);
    }
    d.finish()?;
    let v = halves.pop().expect("two halves");
    let m = halves.pop().expect("two halves");
    Ok(Moments { t, m, v })
}

fn encode_history(h: &[StepLog]) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u64(h.len() as u64);
    for s in h {
        e.u64(s.step);
        for v in [s.d_loss, s.d_real, s.d_fake, s.consistency, s.g_loss] {
            e.f64(v);
        }
    }
    e.into_bytes()
}

fn decode_history(d: &mut Decoder<'_>) -> Result<Vec<StepLog>> {
    let n = d.u64()?;
    let mut out = Vec::new();
    for _ in 0..n {
        out.push(StepLog {
            step: d.u64()?,
            d_loss: d.f64()?,
            d_real: d.f64()?,
            d_fake: d.f64()?,
            consistency: d.f64()?,
            g_loss: d.f64()?,
        });
    }
    d.finish()?;
    Ok(out)
}

fn encode_params(p: &ParamStore) -> Vec<u8> {
    let mut e = Encoder::new();
    e.params(p);
    e.into_bytes()
}

pub fn save(path: &Path, state: &TrainState) -> Result<()> {
    let mut w = ContainerWriter::create(path, MAGIC)?;
    let cfg = serde_json::to_vec(&state.cfg).map_err(|e| LabError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    w.record("config", &cfg)?;
    w.record("step", &state.step.to_le_bytes())?;
    w.record("generator", &encode_params(state.generator.params()))?;
    w.record(
        "discriminator",
        &encode_params(state.discriminator.params()),
    )?;
    w.record("ema", &encode_params(state.ema.params()))?;
    w.record("adam_g", &encode_moments(&state.adam_g))?;
    w.record("adam_d", &encode_moments(&state.adam_d))?;
    let mut rngs = Encoder::new();
    for r in [&state.rngs.noise, &state.rngs.mask, &state.rngs.data] {
        let s = r.state();
        for k in s.key.chunks_exact(8) {
            rngs.u64(u64::from_le_bytes(k.try_into().expect("8-byte chunk")));
        }
        rngs.u64(s.stream);
        rngs.u64(s.word_pos as u64);
        rngs.u64((s.word_pos >> 64) as u64);
    }
    w.record("rngs", &rngs.into_bytes())?;
    w.record("history", &encode_history(&state.history))?;
    w.finish()
}

fn decode_config(h: &RecordHeader, payload: &[u8], path: &Path) -> Result<TrainConfig> {
    let cfg: TrainConfig = serde_json::from_slice(payload)
        .map_err(|e| LabError::format(path, h.offset, format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn decode_u64(h: &RecordHeader, payload: &[u8], path: &Path) -> Result<u64> {
    let mut d = Decoder::new(payload, h.offset, path);
    let v = d.u64()?;
    d.finish()?;
    Ok(v)
}

/// Overwrites `store` from a `params` record.
fn fill(store: &mut ParamStore, h: &RecordHeader, payload: &[u8], path: &Path) -> Result<()> {
    let mut d = Decoder::new(payload, h.offset, path);
    d.params_into(store)?;
    d.finish()
}

/// Freshly built networks whose weights are about to be overwritten.
fn shells(cfg: &TrainConfig) -> Result<(Generator, Discriminator)> {
    let mut rng = Rng::new(0);
    Ok((
        Generator::new(&cfg.model, &mut rng)?,
        Discriminator::new(&cfg.model, &mut rng)?,
    ))
}

/// Restores a complete training state for bit-exact resumption.
pub fn load(path: &Path) -> Result<TrainState> {
    let records = ContainerReader::open(path, MAGIC)?.read_all()?;
    let rec = |tag: &str| take_record(&records, tag, path);

    let (h, p) = rec("config")?;
    let cfg = decode_config(h, p, path)?;
    let (h, p) = rec("step")?;
    let step = decode_u64(h, p, path)?;

    let (mut generator, mut discriminator) = shells(&cfg)?;
    let mut ema = generator.clone();
    for (tag, store) in [
        ("generator", generator.params_mut()),
        ("discriminator", discriminator.params_mut()),
        ("ema", ema.params_mut()),
    ] {
        let (h, p) = rec(tag)?;
        fill(store, h, p, path)?;
    }

    let (h, p) = rec("adam_g")?;
    let adam_g = decode_moments(&mut Decoder::new(p, h.offset, path), generator.params())?;
    let (h, p) = rec("adam_d")?;
    let adam_d = decode_moments(&mut Decoder::new(p, h.offset, path), discriminator.params())?;

    let (h, p) = rec("rngs")?;
    let mut d = Decoder::new(p, h.offset, path);
    // Per stream: key as four little-endian words, stream id, word position (low, high).
    let mut next = || -> Result<Rng> {
        let mut key = [0u8; 32];
        for k in key.chunks_exact_mut(8) {
            k.copy_from_slice(&d.u64()?.to_le_bytes());
        }
        let stream = d.u64()?;
        let word_pos = d.u64()? as u128 | (d.u64()? as u128) << 64;
        Ok(Rng::from_state(RngState {
            key,
            stream,
            word_pos,
        }))
    };
    let rngs = TrainRngs {
        noise: next()?,
        mask: next()?,
        data: next()?,
    };
    d.finish()?;

    let (h, p) = rec("history")?;
    let history = decode_history(&mut Decoder::new(p, h.offset, path))?;
    if history.len() as u64 != step {
        return Err(LabError::format(
            path,
            h.offset,
            format!("{} history rows for step {step}", history.len()),
        ));
    }

    Ok(TrainState {
        cfg,
        step,
        generator,
        discriminator,
        ema,
        adam_g,
        adam_d,
        rngs,
        history,
    })
}

/// The parts of a checkpoint needed for inference.
#[derive(Debug, Clone)]
pub struct EvalCheckpoint {
    pub path: PathBuf,
    pub cfg: TrainConfig,
    pub step: u64,
    pub ema: Generator,
    pub discriminator: Discriminator,
    /// Whether the raw generator payload was read from disk.
    pub raw_generator_read: bool,
}

/// Loads the averaged generator and the discriminator, skipping everything
/// else without reading it.
pub fn load_for_eval(path: &Path) -> Result<EvalCheckpoint> {
    let mut r = ContainerReader::open(path, MAGIC)?;
    let mut cfg = None;
    let mut step = None;
    let mut ema_rec = None;
    let mut disc_rec = None;
    while let Some(h) = r.next_header()? {
        match h.tag.as_str() {
            "config" => {
                let p = r.read_payload(&h)?;
                cfg = Some(decode_config(&h, &p, path)?);
            }
            "step" => {
                let p = r.read_payload(&h)?;
                step = Some(decode_u64(&h, &p, path)?);
            }
            "ema" => {
                let p = r.read_payload(&h)?;
                ema_rec = Some((h, p));
            }
            "discriminator" => {
                let p = r.read_payload(&h)?;
                disc_rec = Some((h, p));
            }
            _ => r.skip_payload(&h)?,
        }
    }
    let raw_generator_read = r.payloads_read().iter().any(|t| t == "generator");
    let missing = |tag: &str| LabError::format(path, 12, format!("missing record {tag:?}"));
    let cfg = cfg.ok_or_else(|| missing("config"))?;
    let step = step.ok_or_else(|| missing("step"))?;
    let (mut ema, mut discriminator) = shells(&cfg)?;
    let (h, p) = ema_rec.ok_or_else(|| missing("ema"))?;
    fill(ema.params_mut(), &h, &p, path)?;
    let (h, p) = disc_rec.ok_or_else(|| missing("discriminator"))?;
    fill(discriminator.params_mut(), &h, &p, path)?;
    Ok(EvalCheckpoint {
        path: path.to_path_buf(),
        cfg,
        step,
        ema,
        discriminator,
        raw_generator_read,
    })
}
