//! Alternating discriminator / generator updates with Adam and a weight EMA.
//!
//! Each sample of a batch is recorded on its own tape; gradients are summed
//! in sample order, so the result does not depend on whether the `parallel`
//! feature evaluates samples concurrently.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::graph::{Graph, Var};
use crate::labelmix::{sample_cutmix_mask, sample_labelmix_mask, Mask};
use crate::losses::{d_objective_sample, g_objective_sample, ClassWeights, LossConfig};
use crate::models::{Discriminator, Generator, ModelConfig};
use crate::noise::{sample_noise, NoiseScheme};
use crate::optim::{adam_step, ema_update, AdamConfig, Moments};
use crate::params::Grads;
use crate::rng::{subseed, Rng};
use crate::scene::{LabelMap, Sample};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub ema_decay: f64,
    pub lambda_lm: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr_g: 1e-4,
            lr_d: 4e-4,
            beta1: 0.0,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 4,
            total_steps: 2000,
            ema_decay: 0.9999,
            lambda_lm: 5.0,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0 && self.lr_g.is_finite() && self.lr_d.is_finite()) {
            return fail("learning rates must be positive".into());
        }
        if !(self.eps > 0.0) {
            return fail("eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return fail(format!(
                "ema_decay must lie in [0, 1), got {}",
                self.ema_decay
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.lambda_lm >= 0.0 && self.lambda_lm.is_finite()) {
            return fail(format!("lambda_lm must be >= 0, got {}", self.lambda_lm));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// How the consistency-regularization mask is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MaskKind {
    /// Per-class coins on the label map.
    #[default]
    LabelMix,
    /// Uniform-area rectangle.
    CutMix,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::LabelMix => "labelmix",
            MaskKind::CutMix => "cutmix",
        }
    }

    pub fn sample(self, label: &LabelMap, rng: &mut Rng) -> Mask {
        match self {
            MaskKind::LabelMix => sample_labelmix_mask(label, rng),
            MaskKind::CutMix => sample_cutmix_mask(label.height(), label.width(), rng),
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labelmix" => Ok(MaskKind::LabelMix),
            "cutmix" => Ok(MaskKind::CutMix),
            _ => Err(Error::invalid(
                "mask_kind",
                format!("unknown mask kind {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub balance: bool,
    pub pixel_normalize: bool,
    pub noise: NoiseScheme,
    pub mask: MaskKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            optim: OptimConfig::default(),
            balance: true,
            pixel_normalize: true,
            noise: NoiseScheme::Image,
            mask: MaskKind::LabelMix,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda_lm: self.optim.lambda_lm,
            balance: self.balance,
            pixel_normalize: self.pixel_normalize,
        }
    }
}

/// Losses of one step. D values are measured before the D update, the G
/// loss against the freshly updated D.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepLog {
    pub step: u64,
    pub d_loss: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub consistency: f64,
    pub g_loss: f64,
}

impl StepLog {
    pub fn is_finite(&self) -> bool {
        [
            self.d_loss,
            self.d_real,
            self.d_fake,
            self.consistency,
            self.g_loss,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Independent random streams of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainRngs {
    pub noise: Rng,
    pub mask: Rng,
    pub data: Rng,
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        TrainRngs {
            noise: Rng::for_purpose(seed, "train/noise"),
            mask: Rng::for_purpose(seed, "train/mask"),
            data: Rng::for_purpose(seed, "train/data"),
        }
    }
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub cfg: TrainConfig,
    pub step: u64,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub ema: Generator,
    pub adam_g: Moments,
    pub adam_d: Moments,
    pub rngs: TrainRngs,
    pub history: Vec<StepLog>,
}

impl TrainState {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.optim.seed;
        let generator = Generator::new(&cfg.model, &mut Rng::for_purpose(seed, "init/generator"))?;
        let discriminator = Discriminator::new(
            &cfg.model,
            &mut Rng::for_purpose(seed, "init/discriminator"),
        )?;
        Ok(TrainState {
            adam_g: Moments::zeros_like(generator.params()),
            adam_d: Moments::zeros_like(discriminator.params()),
            ema: generator.clone(),
            generator,
            discriminator,
            rngs: TrainRngs::new(seed),
            history: Vec::new(),
            step: 0,
            cfg,
        })
    }

    /// `batch_size` distinct dataset indices drawn from the data stream.
    pub fn next_batch(&mut self, dataset_len: usize) -> Result<Vec<usize>> {
        let b = self.cfg.optim.batch_size;
        if b > dataset_len {
            return Err(Error::invalid(
                "next_batch",
                format!("batch size {b} exceeds dataset size {dataset_len}"),
            ));
        }
        let mut picked: Vec<usize> = Vec::with_capacity(b);
        while picked.len() < b {
            let i = self.rngs.data.below(dataset_len);
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        Ok(picked)
    }

    /// Draws a batch from `dataset` and performs one training step.
    pub fn run_step(&mut self, dataset: &[Sample]) -> Result<StepLog> {
        let idx = self.next_batch(dataset.len())?;
        let batch: Vec<&Sample> = idx.iter().map(|&i| &dataset[i]).collect();
        train_step(self, &batch)
    }
}

/// Runs `f` for every index in `0..n`, concurrently with the `parallel`
/// feature. Results keep index order.
fn per_sample<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn sum_grads(parts: Vec<(Grads, [f64; 4])>) -> (Grads, [f64; 4]) {
    let mut it = parts.into_iter();
    let (mut grads, mut totals) = it.next().expect("batches are non-empty");
    for (g, t) in it {
        grads.add(&g);
        for k in 0..4 {
            totals[k] += t[k];
        }
    }
    (grads, totals)
}

fn non_finite(what: &str, index: usize) -> Error {
    Error::NonFinite {
        what: String::from(what),
        index: Some(index),
    }
}

/// One discriminator Adam step followed by one generator Adam step and an
/// EMA update.
pub fn train_step(state: &mut TrainState, batch: &[&Sample]) -> Result<StepLog> {
    if batch.is_empty() {
        return Err(Error::invalid("train_step", "empty batch"));
    }
    let cfg = state.cfg.clone();
    let model = &cfg.model;
    let loss_cfg = cfg.loss();
    let n = model.num_classes;
    let b = batch.len();
    let labels: Vec<&LabelMap> = batch.iter().map(|s| &s.label).collect();
    for s in batch {
        let want = [3, model.image_size, model.image_size];
        if s.image.shape() != want || (s.label.height(), s.label.width()) != (want[1], want[2]) {
            return Err(Error::shape("train_step", s.image.shape(), &want));
        }
    }
    let weights: ClassWeights = loss_cfg.weights(&labels, n)?;
    let onehots: Vec<Tensor> = labels.iter().map(|l| l.one_hot(n)).collect::<Result<_>>()?;
    let scale = loss_cfg.scale(model.image_size, model.image_size, b);

    // Discriminator update on detached fakes.
    let z_d: Vec<Tensor> = labels
        .iter()
        .map(|l| sample_noise(cfg.noise, l, model.z_channels, &mut state.rngs.noise))
        .collect::<Result<_>>()?;
    let masks: Vec<Mask> = labels
        .iter()
        .map(|l| cfg.mask.sample(l, &mut state.rngs.mask))
        .collect();
    let gen = &state.generator;
    let disc = &state.discriminator;
    let use_mask = loss_cfg.lambda_lm > 0.0;
    let d_parts = per_sample(b, |i| {
        let fake = gen.generate(&z_d[i], &onehots[i])?;
        let mut g = Graph::new();
        let p = disc.params().bind(&mut g, true);
        let critic = |g: &mut Graph<'_>, x: Var| disc.forward(g, &p, x);
        let real = g.constant(batch[i].image.clone());
        let fake = g.constant(fake);
        let mask = use_mask.then_some(&masks[i]);
        let t = d_objective_sample(
            &mut g, &critic, real, fake, labels[i], &weights, mask, &loss_cfg, scale,
        )?;
        let vals = [
            g.scalar(t.total),
            g.scalar(t.real),
            g.scalar(t.fake),
            g.scalar(t.consistency),
        ];
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(non_finite("discriminator loss", i));
        }
        g.backward(t.total)?;
        let mut grads = Grads::zeros_like(disc.params());
        grads.accumulate(&g, &p);
        Ok((grads, vals))
    })?;
    let (d_grads, d_vals) = sum_grads(d_parts);
    adam_step(
        state.discriminator.params_mut(),
        &d_grads,
        &mut state.adam_d,
        &cfg.optim.adam(cfg.optim.lr_d),
    )?;

    // Generator update against the updated discriminator, on fresh noise.
    let z_g: Vec<Tensor> = labels
        .iter()
        .map(|l| sample_noise(cfg.noise, l, model.z_channels, &mut state.rngs.noise))
        .collect::<Result<_>>()?;
    let gen = &state.generator;
    let disc = &state.discriminator;
    let g_parts = per_sample(b, |i| {
        let mut g = Graph::new();
        let pg = gen.params().bind(&mut g, true);
        let pd = disc.params().bind(&mut g, false);
        let z = g.constant(z_g[i].clone());
        let t = g.constant(onehots[i].clone());
        let fake = gen.forward(&mut g, &pg, z, t)?;
        let critic = |g: &mut Graph<'_>, x: Var| disc.forward(g, &pd, x);
        let loss = g_objective_sample(&mut g, &critic, fake, labels[i], &weights, scale)?;
        let v = g.scalar(loss);
        if !v.is_finite() {
            return Err(non_finite("generator loss", i));
        }
        g.backward(loss)?;
        let mut grads = Grads::zeros_like(gen.params());
        grads.accumulate(&g, &pg);
        Ok((grads, [v, 0.0, 0.0, 0.0]))
    })?;
    let (g_grads, g_vals) = sum_grads(g_parts);
    adam_step(
        state.generator.params_mut(),
        &g_grads,
        &mut state.adam_g,
        &cfg.optim.adam(cfg.optim.lr_g),
    )?;
    ema_update(
        state.ema.params_mut(),
        state.generator.params(),
        cfg.optim.ema_decay,
    )?;

    state.step += 1;
    let log = StepLog {
        step: state.step,
        d_loss: d_vals[0],
        d_real: d_vals[1],
        d_fake: d_vals[2],
        consistency: d_vals[3],
        g_loss: g_vals[0],
    };
    state.history.push(log);
    Ok(log)
}

/// Seed for the `index`-th evaluation or sampling draw of `purpose`.
pub fn draw_seed(seed: u64, purpose: &str, index: usize) -> u64 {
    subseed(seed, purpose) ^ index as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use crate::scene::{generate_split, SceneConfig};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                num_classes: 3,
                image_size: 16,
                z_channels: 2,
                base_width: 4,
                depth: 2,
                use_noise: true,
            },
            optim: OptimConfig {
                batch_size: 2,
                seed: 5,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn tiny_data() -> Vec<Sample> {
        generate_split(&SceneConfig::new(3, 16, 1).unwrap(), "train", 8)
    }

    #[test]
    fn first_step_losses_are_uniform_prediction_values() {
        let data = tiny_data();
        let mut cfg = tiny_cfg();
        cfg.optim.lambda_lm = 0.0;
        cfg.balance = false;
        let mut state = TrainState::new(cfg.clone()).unwrap();
        let log = state.run_step(&data).unwrap();
        let ln = math::ln(4.0);
        assert!((log.d_real - ln).abs() < 1e-6);
        assert!((log.d_fake - ln).abs() < 1e-6);
        assert!((log.d_loss - 2.0 * ln).abs() < 1e-6);
        assert_eq!(log.consistency, 0.0);

        // Balanced weights: the real term counts each present class once.
        cfg.balance = true;
        let mut state = TrainState::new(cfg).unwrap();
        let idx = state.clone().next_batch(data.len()).unwrap();
        let batch: Vec<&Sample> = idx.iter().map(|&i| &data[i]).collect();
        let mut present = [false; 3];
        for s in &batch {
            for c in s.label.present_classes() {
                present[c as usize] = true;
            }
        }
        let k = present.iter().filter(|&&p| p).count() as f64;
        let log = state.run_step(&data).unwrap();
        assert!(
            (log.d_real - k * ln).abs() < 1e-6,
            "{} vs {}",
            log.d_real,
            k * ln
        );
    }

    #[test]
    fn one_adam_step_each_per_train_step() {
        let data = tiny_data();
        let mut state = TrainState::new(tiny_cfg()).unwrap();
        for s in 1..=3 {
            state.run_step(&data).unwrap();
            assert_eq!((state.step, state.adam_d.t, state.adam_g.t), (s, s, s));
        }
        assert_eq!(state.history.len(), 3);
        assert!(state.history.iter().all(StepLog::is_finite));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let data = tiny_data();
        let mut a = TrainState::new(tiny_cfg()).unwrap();
        let mut b = TrainState::new(tiny_cfg()).unwrap();
        for _ in 0..10 {
            a.run_step(&data).unwrap();
            b.run_step(&data).unwrap();
        }
        assert_eq!(a.history, b.history);
        assert_eq!(a.generator.params(), b.generator.params());
        assert_eq!(a.discriminator.params(), b.discriminator.params());
        assert_eq!(a.ema.params(), b.ema.params());
        assert_eq!(a.rngs, b.rngs);
    }

    #[test]
    fn resumed_clone_matches_uninterrupted_run() {
        let data = tiny_data();
        let mut a = TrainState::new(tiny_cfg()).unwrap();
        for _ in 0..5 {
            a.run_step(&data).unwrap();
        }
        let mut b = a.clone();
        for _ in 0..5 {
            a.run_step(&data).unwrap();
            b.run_step(&data).unwrap();
        }
        assert_eq!(a.generator.params(), b.generator.params());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn ema_tracks_generator() {
        let data = tiny_data();
        let mut cfg = tiny_cfg();
        cfg.optim.ema_decay = 0.0;
        let mut state = TrainState::new(cfg).unwrap();
        state.run_step(&data).unwrap();
        assert_eq!(state.ema.params(), state.generator.params());
    }

    #[test]
    fn rejects_bad_configs_and_batches() {
        let mut cfg = tiny_cfg();
        cfg.optim.beta2 = 1.0;
        assert!(TrainState::new(cfg).is_err());
        let mut cfg = tiny_cfg();
        cfg.optim.ema_decay = 1.0;
        assert!(TrainState::new(cfg).is_err());
        let mut cfg = tiny_cfg();
        cfg.optim.batch_size = 20;
        let mut state = TrainState::new(cfg).unwrap();
        assert!(state.run_step(&tiny_data()).is_err());
        let mut state = TrainState::new(tiny_cfg()).unwrap();
        assert!(train_step(&mut state, &[]).is_err());
        let wrong = generate_split(&SceneConfig::new(3, 32, 1).unwrap(), "train", 1);
        assert!(train_step(&mut state, &[&wrong[0]]).is_err());
    }

    #[test]
    fn mask_kind_names() {
        for k in [MaskKind::LabelMix, MaskKind::CutMix] {
            assert_eq!(k.name().parse::<MaskKind>().unwrap(), k);
        }
        assert!("stripes".parse::<MaskKind>().is_err());
    }
}
