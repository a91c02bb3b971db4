//! Balanced (N+1)-class adversarial objectives and LabelMix consistency.
//!
//! Graph-level functions work on one sample and return *unnormalized* sums;
//! callers multiply by [`LossConfig::scale`], which is `1 / (H·W·B)` with
//! pixel normalization and `1 / B` without. Batch-level helpers at the bottom
//! evaluate whole batches of tensors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::labelmix::Mask;
use crate::scene::LabelMap;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-class weights α. Classes absent from the estimating batch get 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    alpha: Vec<f64>,
}

impl ClassWeights {
    /// α ≡ 1: plain (unbalanced) cross-entropy.
    pub fn uniform(num_classes: usize) -> Self {
        ClassWeights {
            alpha: vec![1.0; num_classes],
        }
    }

    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::invalid(
                "class_weights",
                "weights must be finite and non-negative",
            ));
        }
        Ok(ClassWeights { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }
}

/// α_c = H·W / (mean over the batch of the pixel count of class c).
pub fn class_weights(batch: &[&LabelMap], num_classes: usize) -> Result<ClassWeights> {
    let first = batch
        .first()
        .ok_or_else(|| Error::invalid("class_weights", "empty batch"))?;
    let (h, w) = (first.height(), first.width());
    let mut counts = vec![0usize; num_classes];
    for map in batch {
        if (map.height(), map.width()) != (h, w) {
            return Err(Error::shape(
                "class_weights",
                &[h, w],
                &[map.height(), map.width()],
            ));
        }
        if map.max_label().is_some_and(|m| m as usize >= num_classes) {
            return Err(Error::invalid(
                "class_weights",
                format!("label out of range for {num_classes} classes"),
            ));
        }
        for (c, n) in map.counts(num_classes).into_iter().enumerate() {
            counts[c] += n;
        }
    }
    let b = batch.len() as f64;
    let hw = (h * w) as f64;
    let alpha = counts
        .into_iter()
        .map(|n| if n == 0 { 0.0 } else { hw * b / n as f64 })
        .collect();
    Ok(ClassWeights { alpha })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the consistency term in the discriminator objective.
    pub lambda_lm: f64,
    /// Use per-batch inverse-frequency class weights; α ≡ 1 otherwise.
    pub balance: bool,
    pub pixel_normalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_lm: 5.0,
            balance: true,
            pixel_normalize: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_lm.is_finite() && self.lambda_lm >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda_lm must be >= 0, got {}",
                self.lambda_lm
            )));
        }
        Ok(())
    }

    /// Factor applied to every per-sample sum.
    pub fn scale(&self, height: usize, width: usize, batch: usize) -> f64 {
        let pixels = if self.pixel_normalize {
            height * width
        } else {
            1
        };
        1.0 / (pixels * batch) as f64
    }

    /// The weights to use for a batch.
    pub fn weights(&self, batch: &[&LabelMap], num_classes: usize) -> Result<ClassWeights> {
        if self.balance {
            class_weights(batch, num_classes)
        } else {
            Ok(ClassWeights::uniform(num_classes))
        }
    }
}

fn check_probs(g: &Graph<'_>, probs: Var, op: &'static str) -> Result<(usize, usize, usize)> {
    let s = g.shape(probs);
    if s.len() != 3 || s[0] < 2 {
        return Err(Error::shape(op, s, &[0, 0, 0]));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if let Some(i) = g.value(probs).iter().position(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::invalid(
            op,
            format!(
                "probability {} at index {i} outside [0, 1]",
                g.value(probs)[i]
            ),
        ));
    }
    Ok((c, h, w))
}

/// `−Σ_c α_c Σ_ij t_ijc log p[c,i,j]` over the N real channels of an
/// (N+1)×H×W probability map.
pub fn real_term(g: &mut Graph<'_>, probs: Var, label: &LabelMap, w: &ClassWeights) -> Result<Var> {
    let (c, h, wd) = check_probs(g, probs, "real_term")?;
    let n = c - 1;
    if w.num_classes() != n || (label.height(), label.width()) != (h, wd) {
        return Err(Error::shape(
            "real_term",
            g.shape(probs),
            &[w.num_classes() + 1, label.height(), label.width()],
        ));
    }
    let plane = h * wd;
    let mut coef = vec![0.0; c * plane];
    for (p, &l) in label.labels().iter().enumerate() {
        let l = l as usize;
        if l >= n {
            return Err(Error::invalid(
                "real_term",
                format!("label {l} out of range for {n} classes"),
            ));
        }
        coef[l * plane + p] = -w.alpha()[l];
    }
    let logp = g.log_clamped(probs, PROB_FLOOR);
    let weighted = g.mul_const(logp, coef)?;
    Ok(g.sum(weighted))
}

/// `−Σ_ij log p[N,i,j]`: every pixel labeled fake.
pub fn fake_term(g: &mut Graph<'_>, probs: Var) -> Result<Var> {
    let (c, h, w) = check_probs(g, probs, "fake_term")?;
    let plane = h * w;
    let mut coef = vec![0.0; c * plane];
    coef[(c - 1) * plane..].fill(-1.0);
    let logp = g.log_clamped(probs, PROB_FLOOR);
    let weighted = g.mul_const(logp, coef)?;
    Ok(g.sum(weighted))
}

/// `‖L_mix − mix(L_x, L_x̂, M)‖²` summed over all entries.
pub fn consistency_term(
    g: &mut Graph<'_>,
    mixed_logits: Var,
    logits_x: Var,
    logits_xhat: Var,
    mask: &Mask,
) -> Result<Var> {
    let target = g.mix(logits_x, logits_xhat, mask.values())?;
    let diff = g.sub(mixed_logits, target)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.sum(sq))
}

/// Consistency of critic `d` between images `x` and `xhat` under `mask`.
pub fn consistency_loss<'p, F>(
    g: &mut Graph<'p>,
    d: &F,
    x: Var,
    xhat: Var,
    mask: &Mask,
) -> Result<Var>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let lx = d(g, x)?;
    let lxh = d(g, xhat)?;
    let mixed = g.mix(x, xhat, mask.values())?;
    let lm = d(g, mixed)?;
    consistency_term(g, lm, lx, lxh, mask)
}

/// Scaled per-sample pieces of the discriminator objective.
#[derive(Debug, Clone, Copy)]
pub struct DTerms {
    pub total: Var,
    pub real: Var,
    pub fake: Var,
    /// `real + fake`.
    pub adversarial: Var,
    pub consistency: Var,
}

/// Discriminator objective for one (real, fake) pair, already multiplied by
/// `scale`. The consistency term is recorded only when `mask` is given and
/// `lambda_lm > 0`; otherwise it is a constant zero.
#[allow(clippy::too_many_arguments)]
pub fn d_objective_sample<'p, F>(
    g: &mut Graph<'p>,
    d: &F,
    real: Var,
    fake: Var,
    label: &LabelMap,
    w: &ClassWeights,
    mask: Option<&Mask>,
    cfg: &LossConfig,
    scale: f64,
) -> Result<DTerms>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let lr = d(g, real)?;
    let lf = d(g, fake)?;
    let pr = g.channel_softmax(lr)?;
    let pf = g.channel_softmax(lf)?;
    let rt = real_term(g, pr, label, w)?;
    let ft = fake_term(g, pf)?;
    let real_scaled = g.scale(rt, scale);
    let fake_scaled = g.scale(ft, scale);
    let adversarial = g.add(real_scaled, fake_scaled)?;
    let consistency = match mask {
        Some(m) if cfg.lambda_lm > 0.0 => {
            let mixed = g.mix(real, fake, m.values())?;
            let lm = d(g, mixed)?;
            let c = consistency_term(g, lm, lr, lf, m)?;
            g.scale(c, scale)
        }
        _ => g.constant(Tensor::scalar(0.0)),
    };
    let weighted = g.scale(consistency, cfg.lambda_lm);
    let total = g.add(adversarial, weighted)?;
    Ok(DTerms {
        total,
        real: real_scaled,
        fake: fake_scaled,
        adversarial,
        consistency,
    })
}

/// Generator objective for one fake image, already multiplied by `scale`.
pub fn g_objective_sample<'p, F>(
    g: &mut Graph<'p>,
    d: &F,
    fake: Var,
    label: &LabelMap,
    w: &ClassWeights,
    scale: f64,
) -> Result<Var>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let lf = d(g, fake)?;
    let pf = g.channel_softmax(lf)?;
    let t = real_term(g, pf, label, w)?;
    Ok(g.scale(t, scale))
}

// ---- batch helpers on tensors ---------------------------------------------

fn batch_len<T>(a: &[T], b: usize, op: &'static str) -> Result<usize> {
    if a.is_empty() || a.len() != b {
        return Err(Error::invalid(
            op,
            format!("batch sizes {} and {b} differ or are empty", a.len()),
        ));
    }
    Ok(a.len())
}

/// Discriminator adversarial loss over a batch of probability maps.
pub fn d_loss(
    p_real: &[Tensor],
    p_fake: &[Tensor],
    labels: &[&LabelMap],
    w: &ClassWeights,
    cfg: &LossConfig,
) -> Result<f64> {
    let b = batch_len(p_real, labels.len(), "d_loss")?;
    batch_len(p_fake, b, "d_loss")?;
    let mut total = 0.0;
    for i in 0..b {
        let mut g = Graph::new();
        let pr = g.constant(p_real[i].clone());
        let pf = g.constant(p_fake[i].clone());
        let rt = real_term(&mut g, pr, labels[i], w)?;
        let ft = fake_term(&mut g, pf)?;
        let (_, h, wd) = p_real[i].chw()?;
        let scale = cfg.scale(h, wd, b);
        total += g.scalar(rt) * scale + g.scalar(ft) * scale;
    }
    Ok(total)
}

/// Generator adversarial loss over a batch of probability maps.
pub fn g_loss(
    p_fake: &[Tensor],
    labels: &[&LabelMap],
    w: &ClassWeights,
    cfg: &LossConfig,
) -> Result<f64> {
    let b = batch_len(p_fake, labels.len(), "g_loss")?;
    let mut total = 0.0;
    for i in 0..b {
        let mut g = Graph::new();
        let pf = g.constant(p_fake[i].clone());
        let t = real_term(&mut g, pf, labels[i], w)?;
        let (_, h, wd) = p_fake[i].chw()?;
        total += g.scalar(t) * cfg.scale(h, wd, b);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DObjective {
    pub total: f64,
    pub adversarial: f64,
    pub consistency: f64,
}

/// Full discriminator objective over a batch, for critic `d`.
pub fn d_objective<'p, F>(
    d: &F,
    real: &[Tensor],
    fake: &[Tensor],
    labels: &[&LabelMap],
    w: &ClassWeights,
    masks: &[Mask],
    cfg: &LossConfig,
) -> Result<DObjective>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let b = batch_len(real, labels.len(), "d_objective")?;
    batch_len(fake, b, "d_objective")?;
    batch_len(masks, b, "d_objective")?;
    let mut out = DObjective {
        total: 0.0,
        adversarial: 0.0,
        consistency: 0.0,
    };
    for i in 0..b {
        let mut g = Graph::new();
        let x = g.constant(real[i].clone());
        let xh = g.constant(fake[i].clone());
        let (_, h, wd) = real[i].chw()?;
        let t = d_objective_sample(
            &mut g,
            d,
            x,
            xh,
            labels[i],
            w,
            Some(&masks[i]),
            cfg,
            cfg.scale(h, wd, b),
        )?;
        out.total += g.scalar(t.total);
        out.adversarial += g.scalar(t.adversarial);
        out.consistency += g.scalar(t.consistency);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check_at;
    use crate::labelmix::{cutmix_mask_with_ratio, sample_labelmix_mask};
    use crate::math;
    use crate::models::{Discriminator, ModelConfig};
    use crate::rng::Rng;

    fn random_probs(c: usize, h: usize, w: usize, rng: &mut Rng) -> Tensor {
        let mut g = Graph::new();
        let mut t = Tensor::zeros(&[c, h, w]);
        rng.fill_gaussian(t.data_mut());
        let v = g.constant(t);
        let p = g.channel_softmax(v).unwrap();
        g.tensor(p)
    }

    fn random_map(n: usize, h: usize, w: usize, rng: &mut Rng) -> LabelMap {
        LabelMap::new(h, w, (0..h * w).map(|_| rng.below(n) as u8).collect()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        let mut t = Tensor::zeros(shape);
        rng.fill_gaussian(t.data_mut());
        t
    }

    /// Triple loop straight from the definition.
    fn naive_d_loss(pr: &[Tensor], pf: &[Tensor], labels: &[&LabelMap], alpha: &[f64]) -> f64 {
        let b = pr.len();
        let mut total = 0.0;
        for s in 0..b {
            let (c, h, w) = pr[s].chw().unwrap();
            let n = c - 1;
            let mut sum = 0.0;
            for cls in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let t = if labels[s].get(i, j) as usize == cls {
                            1.0
                        } else {
                            0.0
                        };
                        let p = pr[s].data()[(cls * h + i) * w + j].max(PROB_FLOOR);
                        sum -= alpha[cls] * t * math::ln(p);
                    }
                }
            }
            for i in 0..h {
                for j in 0..w {
                    sum -= math::ln(pf[s].data()[(n * h + i) * w + j].max(PROB_FLOOR));
                }
            }
            total += sum / (h * w * b) as f64;
        }
        total
    }

    fn naive_g_loss(pf: &[Tensor], labels: &[&LabelMap], alpha: &[f64]) -> f64 {
        let b = pf.len();
        let mut total = 0.0;
        for s in 0..b {
            let (c, h, w) = pf[s].chw().unwrap();
            for cls in 0..c - 1 {
                for i in 0..h {
                    for j in 0..w {
                        if labels[s].get(i, j) as usize == cls {
                            let p = pf[s].data()[(cls * h + i) * w + j].max(PROB_FLOOR);
                            total -= alpha[cls] * math::ln(p) / (h * w * b) as f64;
                        }
                    }
                }
            }
        }
        total
    }

    #[test]
    fn class_weight_examples() {
        let m = LabelMap::new(2, 2, vec![0, 0, 0, 1]).unwrap();
        let w = class_weights(&[&m], 2).unwrap();
        assert!((w.alpha()[0] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.alpha()[1], 4.0);

        let full = LabelMap::filled(3, 3, 1);
        let w = class_weights(&[&full], 3).unwrap();
        assert_eq!(w.alpha(), &[0.0, 1.0, 0.0]);

        let half = LabelMap::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(class_weights(&[&half], 2).unwrap().alpha(), &[2.0, 2.0]);

        assert!(class_weights(&[], 2).is_err());
        assert!(class_weights(&[&full], 1).is_err());
    }

    #[test]
    fn inverse_weights_sum_to_one() {
        let mut rng = Rng::new(1);
        let maps: Vec<LabelMap> = (0..3).map(|_| random_map(4, 5, 5, &mut rng)).collect();
        let refs: Vec<&LabelMap> = maps.iter().collect();
        let w = class_weights(&refs, 4).unwrap();
        let s: f64 = w
            .alpha()
            .iter()
            .filter(|&&a| a > 0.0)
            .map(|a| 1.0 / a)
            .sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_predictions_binary() {
        let map = LabelMap::filled(3, 3, 0);
        let p = Tensor::full(&[2, 3, 3], 0.5);
        let w = class_weights(&[&map], 1).unwrap();
        let cfg = LossConfig::default();
        let d = d_loss(
            std::slice::from_ref(&p),
            std::slice::from_ref(&p),
            &[&map],
            &w,
            &cfg,
        )
        .unwrap();
        assert!((d - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
        let gl = g_loss(&[p], &[&map], &w, &cfg).unwrap();
        assert!((gl - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_has_zero_loss() {
        let mut rng = Rng::new(2);
        let map = random_map(3, 4, 4, &mut rng);
        let mut pr = map.one_hot(3).unwrap().into_data();
        pr.extend(vec![0.0; 16]);
        let pr = Tensor::new(&[4, 4, 4], pr).unwrap();
        let mut pf = Tensor::zeros(&[4, 4, 4]);
        pf.data_mut()[48..].fill(1.0);
        let w = class_weights(&[&map], 3).unwrap();
        let cfg = LossConfig::default();
        assert_eq!(
            d_loss(std::slice::from_ref(&pr), &[pf], &[&map], &w, &cfg).unwrap(),
            0.0
        );
        assert_eq!(g_loss(&[pr], &[&map], &w, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = Rng::new(3);
        let n = 3;
        let pr: Vec<Tensor> = (0..2)
            .map(|_| random_probs(n + 1, 4, 4, &mut rng))
            .collect();
        let pf: Vec<Tensor> = (0..2)
            .map(|_| random_probs(n + 1, 4, 4, &mut rng))
            .collect();
        let maps: Vec<LabelMap> = (0..2).map(|_| random_map(n, 4, 4, &mut rng)).collect();
        let refs: Vec<&LabelMap> = maps.iter().collect();
        let cfg = LossConfig::default();
        let w = cfg.weights(&refs, n).unwrap();
        let d = d_loss(&pr, &pf, &refs, &w, &cfg).unwrap();
        assert!((d - naive_d_loss(&pr, &pf, &refs, w.alpha())).abs() < 1e-10);
        let gl = g_loss(&pf, &refs, &w, &cfg).unwrap();
        assert!((gl - naive_g_loss(&pf, &refs, w.alpha())).abs() < 1e-10);
        assert!(d >= 0.0 && gl >= 0.0);
    }

    #[test]
    fn homogeneous_in_alpha() {
        let mut rng = Rng::new(4);
        let pr = random_probs(3, 4, 4, &mut rng);
        let pf = random_probs(3, 4, 4, &mut rng);
        let map = random_map(2, 4, 4, &mut rng);
        let cfg = LossConfig::default();
        let w = class_weights(&[&map], 2).unwrap();
        let w2 = ClassWeights::new(w.alpha().iter().map(|a| 2.0 * a).collect()).unwrap();
        let zero = Tensor::zeros(&[3, 4, 4]);
        let mut sure_fake = zero.clone();
        sure_fake.data_mut()[32..].fill(1.0);
        let real1 = d_loss(
            std::slice::from_ref(&pr),
            &[sure_fake.clone()],
            &[&map],
            &w,
            &cfg,
        )
        .unwrap();
        let real2 = d_loss(&[pr], &[sure_fake], &[&map], &w2, &cfg).unwrap();
        assert!((real2 - 2.0 * real1).abs() < 1e-12);
        let g1 = g_loss(std::slice::from_ref(&pf), &[&map], &w, &cfg).unwrap();
        let g2 = g_loss(&[pf], &[&map], &w2, &cfg).unwrap();
        assert!((g2 - 2.0 * g1).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_is_plain_cross_entropy() {
        let mut rng = Rng::new(5);
        let pr = random_probs(4, 3, 3, &mut rng);
        let pf = random_probs(4, 3, 3, &mut rng);
        let map = random_map(3, 3, 3, &mut rng);
        let cfg = LossConfig {
            balance: false,
            ..Default::default()
        };
        let w = cfg.weights(&[&map], 3).unwrap();
        let d = d_loss(
            std::slice::from_ref(&pr),
            std::slice::from_ref(&pf),
            &[&map],
            &w,
            &cfg,
        )
        .unwrap();
        let mut ce = 0.0;
        for p in 0..9 {
            ce -= math::ln(pr.data()[map.labels()[p] as usize * 9 + p]);
            ce -= math::ln(pf.data()[27 + p]);
        }
        assert!((d - ce / 9.0).abs() < 1e-12);

        let raw = LossConfig {
            pixel_normalize: false,
            ..cfg
        };
        let d_raw = d_loss(&[pr], &[pf], &[&map], &w, &raw).unwrap();
        assert!((d_raw - ce).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_probabilities() {
        let map = LabelMap::filled(2, 2, 0);
        let w = ClassWeights::uniform(1);
        let cfg = LossConfig::default();
        let good = Tensor::full(&[2, 2, 2], 0.5);
        let bad = Tensor::full(&[2, 2, 2], 1.5);
        assert!(d_loss(
            std::slice::from_ref(&bad),
            std::slice::from_ref(&good),
            &[&map],
            &w,
            &cfg
        )
        .is_err());
        assert!(g_loss(&[bad], &[&map], &w, &cfg).is_err());
        let nan = Tensor::full(&[2, 2, 2], f64::NAN);
        assert!(d_loss(&[good], &[nan], &[&map], &w, &cfg).is_err());
    }

    /// Per-pixel affine map of the channels; commutes with masking.
    fn linear_critic(g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let w: Vec<f64> = (0..g.value(x).len())
            .map(|i| 0.5 + (i % 7) as f64 * 0.3)
            .collect();
        let y = g.mul_const(x, w)?;
        let y = g.concat_channels(y, x)?;
        debug_assert_eq!(g.shape(y)[0], 2 * s[0]);
        Ok(g.add_scalar(y, 0.25))
    }

    fn tiny_d(rng: &mut Rng) -> Discriminator {
        let cfg = ModelConfig {
            num_classes: 2,
            image_size: 16,
            z_channels: 1,
            base_width: 4,
            depth: 2,
            use_noise: true,
        };
        let mut d = Discriminator::new(&cfg, rng).unwrap();
        for t in d.params_mut().tensors_mut() {
            for v in t.data_mut() {
                *v += 0.1 * rng.gaussian();
            }
        }
        d
    }

    /// Critic that binds the parameters of `d` on every call.
    fn critic_of<'p>(d: &'p Discriminator) -> impl Fn(&mut Graph<'p>, Var) -> Result<Var> + 'p {
        move |g, x| {
            let p = d.params().bind(g, false);
            d.forward(g, &p, x)
        }
    }

    fn consistency_value<'p, F>(d: &F, x: &Tensor, xh: &Tensor, m: &Mask) -> f64
    where
        F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
    {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let xhv = g.constant(xh.clone());
        let c = consistency_loss(&mut g, d, xv, xhv, m).unwrap();
        g.scalar(c)
    }

    #[test]
    fn consistency_trivial_cases() {
        let mut rng = Rng::new(6);
        let d = tiny_d(&mut rng);
        let critic = critic_of(&d);
        let x = random(&[3, 16, 16], &mut rng);
        let xh = random(&[3, 16, 16], &mut rng);
        let map = random_map(2, 16, 16, &mut rng);
        let m = sample_labelmix_mask(&map, &mut rng);
        assert_eq!(consistency_value(&critic, &x, &x, &m), 0.0);
        assert_eq!(
            consistency_value(&critic, &x, &xh, &Mask::filled(16, 16, true)),
            0.0
        );

        let half = cutmix_mask_with_ratio(16, 16, 0.5, &mut rng).unwrap();
        let a = consistency_value(&critic, &x, &xh, &half);
        let b = consistency_value(&critic, &xh, &x, &half.complement());
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{a} {b}");

        let lin = consistency_value(&linear_critic, &x, &xh, &half);
        assert_eq!(lin, 0.0);
    }

    #[test]
    fn objective_components() {
        let mut rng = Rng::new(7);
        let d = tiny_d(&mut rng);
        let critic = critic_of(&d);
        let real: Vec<Tensor> = (0..2).map(|_| random(&[3, 16, 16], &mut rng)).collect();
        let fake: Vec<Tensor> = (0..2).map(|_| random(&[3, 16, 16], &mut rng)).collect();
        let maps: Vec<LabelMap> = (0..2).map(|_| random_map(2, 16, 16, &mut rng)).collect();
        let refs: Vec<&LabelMap> = maps.iter().collect();
        let masks: Vec<Mask> = maps
            .iter()
            .map(|m| sample_labelmix_mask(m, &mut rng))
            .collect();

        let off = LossConfig {
            lambda_lm: 0.0,
            ..Default::default()
        };
        let w = off.weights(&refs, 2).unwrap();
        let o0 = d_objective(&critic, &real, &fake, &refs, &w, &masks, &off).unwrap();
        let probs = |imgs: &[Tensor]| -> Vec<Tensor> {
            imgs.iter()
                .map(|x| {
                    let l = d.logits(x).unwrap();
                    let mut g = Graph::new();
                    let v = g.constant(l);
                    let p = g.channel_softmax(v).unwrap();
                    g.tensor(p)
                })
                .collect()
        };
        let dl = d_loss(&probs(&real), &probs(&fake), &refs, &w, &off).unwrap();
        assert_eq!(o0.total, dl);
        assert_eq!(o0.adversarial, dl);

        let on = LossConfig {
            lambda_lm: 5.0,
            ..Default::default()
        };
        let o5 = d_objective(&critic, &real, &fake, &refs, &w, &masks, &on).unwrap();
        assert_eq!(o5.adversarial, dl);
        assert!((o5.total - (dl + 5.0 * o5.consistency)).abs() < 1e-12);
    }

    #[test]
    fn objective_gradient_wrt_discriminator_params() {
        let mut rng = Rng::new(8);
        let d = tiny_d(&mut rng);
        let real = random(&[3, 16, 16], &mut rng);
        let fake = random(&[3, 16, 16], &mut rng);
        let map = random_map(2, 16, 16, &mut rng);
        let mask = sample_labelmix_mask(&map, &mut rng);
        let mask = if mask.area() == 0.0 || mask.area() == 1.0 {
            cutmix_mask_with_ratio(16, 16, 0.4, &mut rng).unwrap()
        } else {
            mask
        };
        let cfg = LossConfig::default();
        let w = class_weights(&[&map], 2).unwrap();
        let scale = cfg.scale(16, 16, 1);
        // Probe the first conv of the second encoder block.
        let id = d.params().find("d.down2.conv1.weight").unwrap();
        let weight = d.params().get(id).clone();
        let coords: Vec<usize> = (0..weight.len()).step_by(5).collect();
        let err = grad_check_at(
            |g, wv| {
                let mut p = d.params().bind(g, false);
                p.replace(id, wv);
                let critic = |g: &mut Graph<'_>, x: Var| d.forward(g, &p, x);
                let x = g.constant(real.clone());
                let xh = g.constant(fake.clone());
                Ok(
                    d_objective_sample(g, &critic, x, xh, &map, &w, Some(&mask), &cfg, scale)?
                        .total,
                )
            },
            &weight,
            1e-6,
            &coords,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
