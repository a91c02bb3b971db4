//! Randomized invariants over the public API.

use oasis_core::labelmix::{cutmix_mask_with_ratio, mix, sample_labelmix_mask};
use oasis_core::losses::class_weights;
use oasis_core::metrics::{chi2, emd_1d, ConfusionMatrix, Histogram};
use oasis_core::noise::{interpolate, resample_local, sample_noise, NoiseScheme};
use oasis_core::{LabelMap, Mask, Rng, Tensor};
use proptest::prelude::*;

fn label_map(max_classes: u8) -> impl Strategy<Value = (usize, LabelMap)> {
    (2..=max_classes, 2usize..10, 2usize..10).prop_flat_map(|(n, h, w)| {
        prop::collection::vec(0..n, h * w)
            .prop_map(move |v| (n as usize, LabelMap::new(h, w, v).unwrap()))
    })
}

fn histogram(bins: usize) -> impl Strategy<Value = Histogram> {
    prop::collection::vec(0.0f64..5.0, bins).prop_filter_map("empty histogram", |v| {
        let mut h = Histogram::new(v.len());
        for (i, &c) in v.iter().enumerate() {
            for _ in 0..(c as usize) {
                h.add_bin(i);
            }
        }
        h.normalize().ok()
    })
}

proptest! {
    #[test]
    fn labelmix_masks_are_constant_per_class((_, map) in label_map(6), seed in any::<u64>()) {
        let m = sample_labelmix_mask(&map, &mut Rng::new(seed));
        for c in map.present_classes() {
            let on = Mask::from_classes(&map, &[c]);
            let values: Vec<bool> = (0..map.height() * map.width())
                .filter(|&p| on.values()[p] == 1.0)
                .map(|p| m.values()[p] == 1.0)
                .collect();
            prop_assert!(values.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn cutmix_area_tracks_ratio(ratio in 0.0f64..=1.0, seed in any::<u64>()) {
        let m = cutmix_mask_with_ratio(32, 32, ratio, &mut Rng::new(seed)).unwrap();
        let side = (32.0 * ratio.sqrt()).round();
        prop_assert_eq!(m.area(), side * side / 1024.0);
    }

    #[test]
    fn mixing_with_a_mask_and_its_complement_swaps_arguments((_, map) in label_map(4), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let (h, w) = (map.height(), map.width());
        let mut x = Tensor::zeros(&[2, h, w]);
        let mut y = Tensor::zeros(&[2, h, w]);
        rng.fill_gaussian(x.data_mut());
        rng.fill_gaussian(y.data_mut());
        let m = sample_labelmix_mask(&map, &mut rng);
        prop_assert_eq!(mix(&x, &y, &m).unwrap(), mix(&y, &x, &m.complement()).unwrap());
    }

    #[test]
    fn balanced_weights_give_each_present_class_equal_mass((n, map) in label_map(5)) {
        let w = class_weights(&[&map], n).unwrap();
        let counts = map.counts(n);
        let pixels = (map.height() * map.width()) as f64;
        for (c, &k) in counts.iter().enumerate() {
            let mass = w.alpha()[c] * k as f64;
            if k == 0 {
                prop_assert_eq!(w.alpha()[c], 0.0);
            } else {
                prop_assert!((mass - pixels).abs() < 1e-9 * pixels);
            }
        }
    }

    #[test]
    fn miou_ignores_consistent_relabeling((n, gt) in label_map(5), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let pred = LabelMap::new(gt.height(), gt.width(),
            (0..gt.height() * gt.width()).map(|_| rng.below(n) as u8).collect()).unwrap();
        let mut perm: Vec<u8> = (0..n as u8).collect();
        rng.shuffle(&mut perm);
        let relabel = |m: &LabelMap| LabelMap::new(m.height(), m.width(),
            m.labels().iter().map(|&c| perm[c as usize]).collect()).unwrap();
        let (mut a, mut b) = (ConfusionMatrix::new(n), ConfusionMatrix::new(n));
        a.add(&pred, &gt).unwrap();
        b.add(&relabel(&pred), &relabel(&gt)).unwrap();
        prop_assert!((a.miou() - b.miou()).abs() < 1e-12);
    }

    #[test]
    fn histogram_distances_are_symmetric_and_vanish_on_identity(a in histogram(12), b in histogram(12)) {
        prop_assert!((emd_1d(&a, &b, 0.5).unwrap() - emd_1d(&b, &a, 0.5).unwrap()).abs() < 1e-12);
        prop_assert!((chi2(&a, &b).unwrap() - chi2(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(emd_1d(&a, &a, 0.5).unwrap(), 0.0);
        prop_assert!(chi2(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!(emd_1d(&a, &b, 0.5).unwrap() <= 0.5 * 11.0 + 1e-12);
    }

    #[test]
    fn local_resampling_leaves_the_exterior_alone((_, map) in label_map(4), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let z = sample_noise(NoiseScheme::Pixel, &map, 3, &mut rng).unwrap();
        let region = Mask::from_classes(&map, &[map.labels()[0]]);
        let out = resample_local(&z, &region, &mut rng).unwrap();
        let plane = map.height() * map.width();
        for c in 0..3 {
            for p in 0..plane {
                let (a, b) = (z.data()[c * plane + p], out.data()[c * plane + p]);
                if region.values()[p] == 0.0 {
                    prop_assert_eq!(a, b);
                } else {
                    // Every pixel of the region shares the fresh vector.
                    prop_assert_eq!(b, out.data()[c * plane + region.values().iter().position(|&v| v == 1.0).unwrap()]);
                }
            }
        }
    }

    #[test]
    fn interpolation_hits_both_endpoints(steps in 2usize..7, seed in any::<u64>()) {
        let map = LabelMap::filled(4, 4, 0);
        let mut rng = Rng::new(seed);
        let z0 = sample_noise(NoiseScheme::Image, &map, 2, &mut rng).unwrap();
        let z1 = sample_noise(NoiseScheme::Image, &map, 2, &mut rng).unwrap();
        let frames = interpolate(&z0, &z1, steps, None).unwrap();
        prop_assert_eq!(frames.len(), steps);
        prop_assert_eq!(&frames[0], &z0);
        prop_assert_eq!(&frames[steps - 1], &z1);
    }
}
