//! Evaluation of a trained pair: the averaged generator draws one image per
//! validation label map, and the discriminator scores real and generated sets.
//!
//! Only the averaged generator is accepted, so raw generator weights cannot
//! leak into a report.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::metrics::{
    class_frequencies, color_emd, extract_features, frechet, max_ms_ssim_scales,
    pairwise_diversity, precision_recall, segmentation_confusion, texture_chi2,
};
use crate::models::{Discriminator, Generator};
use crate::noise::{sample_noise, NoiseScheme};
use crate::rng::Rng;
use crate::scene::Sample;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    pub seed: u64,
    pub noise: NoiseScheme,
    /// Label maps used for the diversity score, taken from the front of the
    /// validation set.
    pub diversity_maps: usize,
    pub diversity_samples: usize,
    pub pr_k: usize,
    pub groups: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            noise: NoiseScheme::Image,
            diversity_maps: 8,
            diversity_samples: 20,
            pr_k: 3,
            groups: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub num_images: usize,
    /// Discriminator-as-segmenter agreement on real validation images.
    pub miou_real: f64,
    /// The same segmenter applied to generated images.
    pub miou_fake: f64,
    pub class_iou_real: Vec<Option<f64>>,
    /// Mean IoU per training-frequency group, most frequent first.
    pub grouped_iou_real: Vec<Option<f64>>,
    pub color_emd_fake: f64,
    /// Reference: real images against uniform noise on the same label maps.
    pub color_emd_noise: f64,
    pub texture_chi2_fake: f64,
    pub texture_chi2_noise: f64,
    /// Fréchet distance on discriminator bottleneck features; a relative
    /// tracking number only.
    pub frechet: f64,
    pub precision: f64,
    pub recall: f64,
    /// Mean pairwise MS-SSIM among generations for one label map.
    pub diversity_ms_ssim: f64,
}

impl MetricsReport {
    /// Flat `(name, value)` rows; undefined IoUs are omitted.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows: Vec<(String, f64)> = [
            ("num_images", self.num_images as f64),
            ("miou_real", self.miou_real),
            ("miou_fake", self.miou_fake),
            ("color_emd_fake", self.color_emd_fake),
            ("color_emd_noise", self.color_emd_noise),
            ("texture_chi2_fake", self.texture_chi2_fake),
            ("texture_chi2_noise", self.texture_chi2_noise),
            ("frechet_dfeat", self.frechet),
            ("precision", self.precision),
            ("recall", self.recall),
            ("diversity_ms_ssim", self.diversity_ms_ssim),
        ]
        .into_iter()
        .map(|(k, v)| (String::from(k), v))
        .collect();
        for (c, v) in self.class_iou_real.iter().enumerate() {
            if let Some(v) = v {
                rows.push((format!("iou_real_class_{c}"), *v));
            }
        }
        for (g, v) in self.grouped_iou_real.iter().enumerate() {
            if let Some(v) = v {
                rows.push((format!("grouped_iou_real_{g}"), *v));
            }
        }
        rows
    }
}

/// Images drawn uniformly from [−1, 1], paired with the given label maps.
pub fn uniform_noise_set(labels: &[Sample], rng: &mut Rng) -> Vec<Sample> {
    labels
        .iter()
        .map(|s| {
            let mut image = Tensor::zeros(s.image.shape());
            image
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
            Sample {
                label: s.label.clone(),
                image,
            }
        })
        .collect()
}

/// One generated image per validation label map, from the `eval/fakes` stream.
pub fn generate_set(
    ema: &Generator,
    val: &[Sample],
    scheme: NoiseScheme,
    seed: u64,
) -> Result<Vec<Sample>> {
    let cfg = ema.config();
    let mut rng = Rng::for_purpose(seed, "eval/fakes");
    val.iter()
        .map(|s| {
            let z = sample_noise(scheme, &s.label, cfg.z_channels, &mut rng)?;
            Ok(Sample {
                label: s.label.clone(),
                image: ema.generate(&z, &s.label.one_hot(cfg.num_classes)?)?,
            })
        })
        .collect()
}

/// Scores `ema` and `disc` on `val`. `train_frequencies` holds per-class
/// training pixel counts and fixes the IoU groups.
pub fn evaluate(
    ema: &Generator,
    disc: &Discriminator,
    val: &[Sample],
    train_frequencies: &[u64],
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let n = ema.config().num_classes;
    if disc.config().num_classes != n {
        return Err(Error::InvalidConfig(format!(
            "generator has {n} classes, discriminator {}",
            disc.config().num_classes
        )));
    }
    if val.len() <= cfg.pr_k {
        return Err(Error::invalid(
            "evaluate",
            format!("need more than {} validation images", cfg.pr_k),
        ));
    }
    let fakes = generate_set(ema, val, cfg.noise, cfg.seed)?;
    let noise = uniform_noise_set(val, &mut Rng::for_purpose(cfg.seed, "eval/uniform"));

    let cm_real = segmentation_confusion(disc, val)?;
    let cm_fake = segmentation_confusion(disc, &fakes)?;

    let real_feat = extract_features(disc, val.iter().map(|s| &s.image))?;
    let fake_feat = extract_features(disc, fakes.iter().map(|s| &s.image))?;
    let (precision, recall) = precision_recall(&real_feat, &fake_feat, cfg.pr_k)?;

    let size = ema.config().image_size;
    let maps: Vec<_> = val
        .iter()
        .take(cfg.diversity_maps)
        .map(|s| s.label.clone())
        .collect();
    let diversity = pairwise_diversity(
        ema,
        &maps,
        cfg.diversity_samples,
        cfg.noise,
        max_ms_ssim_scales(size),
        &mut Rng::for_purpose(cfg.seed, "eval/diversity"),
    )?;

    Ok(MetricsReport {
        num_images: val.len(),
        miou_real: cm_real.miou(),
        miou_fake: cm_fake.miou(),
        class_iou_real: cm_real.per_class_iou(),
        grouped_iou_real: cm_real.grouped_iou(train_frequencies, cfg.groups.min(n))?,
        color_emd_fake: color_emd(val, &fakes, n)?,
        color_emd_noise: color_emd(val, &noise, n)?,
        texture_chi2_fake: texture_chi2(val, &fakes, n)?,
        texture_chi2_noise: texture_chi2(val, &noise, n)?,
        frechet: frechet(&real_feat, &fake_feat)?,
        precision,
        recall,
        diversity_ms_ssim: diversity,
    })
}

/// Pixel counts per class over a training set.
pub fn training_frequencies(train: &[Sample], num_classes: usize) -> Vec<u64> {
    class_frequencies(train.iter().map(|s| &s.label), num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;
    use crate::scene::{generate_split, SceneConfig};

    fn small() -> (ModelConfig, Vec<Sample>) {
        let cfg = ModelConfig {
            num_classes: 4,
            image_size: 32,
            z_channels: 2,
            base_width: 4,
            depth: 2,
            use_noise: true,
        };
        let scenes = SceneConfig::new(4, 32, 11).unwrap();
        (cfg, generate_split(&scenes, "val", 6))
    }

    fn quick() -> EvalConfig {
        EvalConfig {
            diversity_maps: 2,
            diversity_samples: 3,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn untrained_segmenter_matches_single_class_baseline() {
        let (cfg, val) = small();
        let g = Generator::new(&cfg, &mut Rng::new(1)).unwrap();
        let d = Discriminator::new(&cfg, &mut Rng::new(2)).unwrap();
        let report = evaluate(&g, &d, &val, &training_frequencies(&val, 4), &quick()).unwrap();

        // Zero final conv: every pixel predicts class 0. Class 0 scores its
        // pixel share, every other ground-truth class scores 0.
        let freq = training_frequencies(&val, 4);
        let total: u64 = freq.iter().sum();
        let defined = freq
            .iter()
            .enumerate()
            .filter(|&(c, &f)| c == 0 || f > 0)
            .count();
        let expect = freq[0] as f64 / total as f64 / defined as f64;
        assert!(
            (report.miou_real - expect).abs() < 1e-12,
            "{} vs {expect}",
            report.miou_real
        );
    }

    #[test]
    fn evaluation_is_deterministic_and_complete() {
        let (cfg, val) = small();
        let g = Generator::new(&cfg, &mut Rng::new(3)).unwrap();
        let d = Discriminator::new(&cfg, &mut Rng::new(4)).unwrap();
        let freq = training_frequencies(&val, 4);
        let a = evaluate(&g, &d, &val, &freq, &quick()).unwrap();
        let b = evaluate(&g, &d, &val, &freq, &quick()).unwrap();
        assert_eq!(a, b);
        let rows = a.rows();
        assert!(rows.iter().all(|(_, v)| v.is_finite()));
        for name in [
            "miou_real",
            "color_emd_noise",
            "frechet_dfeat",
            "diversity_ms_ssim",
        ] {
            assert!(rows.iter().any(|(k, _)| k == name), "{name}");
        }
        assert!(a.color_emd_noise > 0.0);
        assert!((0.0..=1.0).contains(&a.precision) && (0.0..=1.0).contains(&a.recall));
    }

    #[test]
    fn noise_free_generator_has_no_diversity() {
        let (mut cfg, val) = small();
        cfg.use_noise = false;
        let g = Generator::new(&cfg, &mut Rng::new(5)).unwrap();
        let d = Discriminator::new(&cfg, &mut Rng::new(6)).unwrap();
        let r = evaluate(&g, &d, &val, &training_frequencies(&val, 4), &quick()).unwrap();
        assert_eq!(r.diversity_ms_ssim, 1.0);
    }

    #[test]
    fn too_few_images_rejected() {
        let (cfg, val) = small();
        let g = Generator::new(&cfg, &mut Rng::new(7)).unwrap();
        let d = Discriminator::new(&cfg, &mut Rng::new(8)).unwrap();
        assert!(evaluate(&g, &d, &val[..3], &[1; 4], &quick()).is_err());
    }
}
