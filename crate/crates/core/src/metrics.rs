//! Evaluation metrics: segmentation agreement, per-class color and texture
//! distances, multi-scale SSIM diversity, and feature-space distribution
//! distances.
//!
//! Every reduction runs in a fixed order so results are bit-reproducible.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::models::{Discriminator, Generator};
use crate::noise::{sample_noise, NoiseScheme};
use crate::rng::Rng;
use crate::scene::{LabelMap, Sample};
use crate::tensor::Tensor;
use crate::{math, Error, Result};

/// `counts[g·N + p]` is the number of pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            n: num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n + pred]
    }

    /// Accumulates one prediction/ground-truth pair.
    pub fn add(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::shape(
                "confusion",
                &[pred.height(), pred.width()],
                &[gt.height(), gt.width()],
            ));
        }
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            let (p, g) = (p as usize, g as usize);
            if p >= self.n || g >= self.n {
                return Err(Error::invalid(
                    "confusion",
                    format!("label {} outside {} classes", p.max(g), self.n),
                ));
            }
            self.counts[g * self.n + p] += 1;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, gt: usize) -> u64 {
        self.counts[gt * self.n..(gt + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.n).map(|g| self.get(g, pred)).sum()
    }

    /// `TP / (TP + FP + FN)`, or `None` when the class never occurs in
    /// either map.
    pub fn iou(&self, class: usize) -> Option<f64> {
        let tp = self.get(class, class);
        let union = self.row_sum(class) + self.col_sum(class) - tp;
        (union > 0).then(|| tp as f64 / union as f64)
    }

    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.n).map(|c| self.iou(c)).collect()
    }

    /// Mean IoU over classes with a non-empty union; 0 for an empty matrix.
    pub fn miou(&self) -> f64 {
        mean_defined(self.per_class_iou().into_iter()).unwrap_or(0.0)
    }

    /// Mean IoU per group of [`frequency_groups`]. A group whose classes all
    /// have an empty union yields `None`.
    pub fn grouped_iou(&self, frequencies: &[u64], groups: usize) -> Result<Vec<Option<f64>>> {
        if frequencies.len() != self.n {
            return Err(Error::shape("grouped_iou", &[self.n], &[frequencies.len()]));
        }
        let ious = self.per_class_iou();
        Ok(frequency_groups(frequencies, groups)?
            .iter()
            .map(|group| mean_defined(group.iter().map(|&c| ious[c])))
            .collect())
    }
}

/// Classes sorted by descending frequency (ties by index) and split into
/// `groups` contiguous groups whose sizes differ by at most one, larger
/// groups first.
pub fn frequency_groups(frequencies: &[u64], groups: usize) -> Result<Vec<Vec<usize>>> {
    let n = frequencies.len();
    if groups == 0 || groups > n {
        return Err(Error::invalid(
            "frequency_groups",
            format!("cannot split {n} classes into {groups} groups"),
        ));
    }
    let order = frequency_order(frequencies);
    let (base, extra) = (n / groups, n % groups);
    let mut start = 0;
    Ok((0..groups)
        .map(|k| {
            let len = base + usize::from(k < extra);
            start += len;
            order[start - len..start].to_vec()
        })
        .collect())
}

/// Class indices by descending frequency, ties broken by ascending index.
pub fn frequency_order(frequencies: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..frequencies.len()).collect();
    order.sort_by(|&a, &b| frequencies[b].cmp(&frequencies[a]).then(a.cmp(&b)));
    order
}

/// Pixel count per class over a set of label maps.
pub fn class_frequencies<'a>(
    labels: impl IntoIterator<Item = &'a LabelMap>,
    num_classes: usize,
) -> Vec<u64> {
    let mut out = vec![0u64; num_classes];
    for l in labels {
        for (o, c) in out.iter_mut().zip(l.counts(num_classes)) {
            *o += c as u64;
        }
    }
    out
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, k) = values
        .flatten()
        .fold((0.0, 0usize), |(s, k), v| (s + v, k + 1));
    (k > 0).then(|| sum / k as f64)
}

/// D65 reference white.
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        math::pow((c + 0.055) / 1.055, 2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        math::cbrt(t)
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// One RGB pixel in [−1, 1] to (L, a, b). Inputs are clamped to the range.
pub fn pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|v| srgb_to_linear(((v + 1.0) / 2.0).clamp(0.0, 1.0)));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (
        lab_f(x / WHITE[0]),
        lab_f(y / WHITE[1]),
        lab_f(z / WHITE[2]),
    );
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// 3×H×W RGB in [−1, 1] to 3×H×W LAB.
pub fn rgb_to_lab(image: &Tensor) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::shape("rgb_to_lab", image.shape(), &[3, h, w]));
    }
    let plane = h * w;
    let d = image.data();
    let mut out = Tensor::zeros(&[3, h, w]);
    let o = out.data_mut();
    for p in 0..plane {
        let lab = pixel_to_lab([d[p], d[plane + p], d[2 * plane + p]]);
        for (ch, v) in lab.into_iter().enumerate() {
            o[ch * plane + p] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bins: Vec<f64>,
    normalized: bool,
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        Histogram {
            bins: vec![0.0; bins],
            normalized: false,
        }
    }

    /// Wraps raw bin masses; marked normalized when they sum to 1 within 1e-9.
    pub fn from_bins(bins: Vec<f64>) -> Result<Self> {
        if bins.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::invalid(
                "histogram",
                "bins must be finite and non-negative",
            ));
        }
        let normalized = (bins.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        Ok(Histogram { bins, normalized })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Adds unit mass to the bin containing `v` on `[lo, hi]`; values outside
    /// the range land in the edge bins.
    pub fn add_value(&mut self, v: f64, lo: f64, hi: f64) {
        let n = self.bins.len();
        let idx = math::floor((v - lo) / (hi - lo) * n as f64);
        let idx = if idx.is_nan() {
            0
        } else {
            idx.clamp(0.0, (n - 1) as f64) as usize
        };
        self.bins[idx] += 1.0;
        self.normalized = false;
    }

    pub fn add_bin(&mut self, bin: usize) {
        self.bins[bin] += 1.0;
        self.normalized = false;
    }

    /// Copy scaled to unit mass. Empty histograms are rejected.
    pub fn normalize(&self) -> Result<Histogram> {
        let t = self.total();
        if t <= 0.0 {
            return Err(Error::invalid(
                "histogram",
                "cannot normalize an empty histogram",
            ));
        }
        Ok(Histogram {
            bins: self.bins.iter().map(|b| b / t).collect(),
            normalized: true,
        })
    }
}

fn check_bins(op: &'static str, a: &Histogram, b: &Histogram) -> Result<()> {
    if a.bins.len() != b.bins.len() {
        return Err(Error::shape(op, &[a.bins.len()], &[b.bins.len()]));
    }
    Ok(())
}

/// 1-D earth mover's distance: L1 distance of the cumulative sums times
/// the bin width.
pub fn emd_1d(a: &Histogram, b: &Histogram, bin_width: f64) -> Result<f64> {
    check_bins("emd_1d", a, b)?;
    let (mut ca, mut cb, mut acc) = (0.0, 0.0, 0.0);
    for (x, y) in a.bins.iter().zip(&b.bins) {
        ca += x;
        cb += y;
        acc += math::abs(ca - cb);
    }
    Ok(acc * bin_width)
}

pub const CHI2_EPS: f64 = 1e-10;

/// `Σ (a_i − b_i)² / (a_i + b_i + ε)`.
pub fn chi2(a: &Histogram, b: &Histogram) -> Result<f64> {
    check_bins("chi2", a, b)?;
    Ok(a.bins
        .iter()
        .zip(&b.bins)
        .map(|(x, y)| (x - y) * (x - y) / (x + y + CHI2_EPS))
        .sum())
}

pub const COLOR_BINS: usize = 64;
/// Fixed histogram ranges for L, a and b.
pub const LAB_RANGES: [(f64, f64); 3] = [(0.0, 100.0), (-128.0, 127.0), (-128.0, 127.0)];

/// Per-class LAB channel histograms over a set of labeled images.
fn class_color_histograms(set: &[Sample], n: usize) -> Result<Vec<Option<[Histogram; 3]>>> {
    let mut hists: Vec<[Histogram; 3]> = (0..n)
        .map(|_| core::array::from_fn(|_| Histogram::new(COLOR_BINS)))
        .collect();
    for s in set {
        let lab = rgb_to_lab(&s.image)?;
        let plane = s.label.height() * s.label.width();
        if lab.len() != 3 * plane {
            return Err(Error::shape(
                "color_emd",
                s.image.shape(),
                &[3, s.label.height(), s.label.width()],
            ));
        }
        for (p, &c) in s.label.labels().iter().enumerate() {
            let Some(h) = hists.get_mut(c as usize) else {
                return Err(Error::invalid(
                    "color_emd",
                    format!("label {c} outside {n} classes"),
                ));
            };
            for (ch, (lo, hi)) in LAB_RANGES.into_iter().enumerate() {
                h[ch].add_value(lab.data()[ch * plane + p], lo, hi);
            }
        }
    }
    hists
        .into_iter()
        .map(|h| {
            if h[0].total() == 0.0 {
                return Ok(None);
            }
            Ok(Some([
                h[0].normalize()?,
                h[1].normalize()?,
                h[2].normalize()?,
            ]))
        })
        .collect()
}

/// Mean over classes present in both sets of the channel-averaged LAB EMD.
pub fn color_emd(real: &[Sample], fake: &[Sample], num_classes: usize) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::invalid("color_emd", "both sets must be non-empty"));
    }
    let (ha, hb) = (
        class_color_histograms(real, num_classes)?,
        class_color_histograms(fake, num_classes)?,
    );
    let mut per_class = Vec::new();
    for (a, b) in ha.iter().zip(&hb) {
        if let (Some(a), Some(b)) = (a, b) {
            let mut sum = 0.0;
            for (ch, (lo, hi)) in LAB_RANGES.into_iter().enumerate() {
                sum += emd_1d(&a[ch], &b[ch], (hi - lo) / COLOR_BINS as f64)?;
            }
            per_class.push(sum / 3.0);
        }
    }
    mean_or_err("color_emd", &per_class)
}

fn mean_or_err(op: &'static str, v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::invalid(op, "no class is present in both sets"));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

fn luminance(image: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::shape("luminance", image.shape(), &[3, h, w]));
    }
    let plane = h * w;
    let d = image.data();
    Ok((
        (0..plane)
            .map(|p| 0.299 * d[p] + 0.587 * d[plane + p] + 0.114 * d[2 * plane + p])
            .collect(),
        h,
        w,
    ))
}

/// Neighbor offsets clockwise from the top-left; the first is the most
/// significant bit.
const LBP_NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

/// LBP codes of the interior pixels in row-major order, as `(row, col, code)`.
/// A bit is set when the neighbor is ≥ the center.
pub fn lbp_codes(image: &Tensor) -> Result<Vec<(usize, usize, u8)>> {
    let (lum, h, w) = luminance(image)?;
    if h < 3 || w < 3 {
        return Err(Error::invalid(
            "lbp",
            format!("image {h}×{w} is smaller than 3×3"),
        ));
    }
    let mut out = Vec::with_capacity((h - 2) * (w - 2));
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let center = lum[i * w + j];
            let mut code = 0u8;
            for (di, dj) in LBP_NEIGHBORS {
                let v = lum[(i as isize + di) as usize * w + (j as isize + dj) as usize];
                code = (code << 1) | u8::from(v >= center);
            }
            out.push((i, j, code));
        }
    }
    Ok(out)
}

/// Normalized 256-bin LBP histogram of the whole image interior.
pub fn lbp_histogram(image: &Tensor) -> Result<Histogram> {
    let mut h = Histogram::new(256);
    for (_, _, code) in lbp_codes(image)? {
        h.add_bin(code as usize);
    }
    h.normalize()
}

fn class_lbp_histograms(set: &[Sample], n: usize) -> Result<Vec<Option<Histogram>>> {
    let mut hists: Vec<Histogram> = (0..n).map(|_| Histogram::new(256)).collect();
    for s in set {
        if (s.image.shape()[1], s.image.shape()[2]) != (s.label.height(), s.label.width()) {
            return Err(Error::shape(
                "texture_chi2",
                s.image.shape(),
                &[3, s.label.height(), s.label.width()],
            ));
        }
        for (i, j, code) in lbp_codes(&s.image)? {
            let c = s.label.get(i, j) as usize;
            if c >= n {
                return Err(Error::invalid(
                    "texture_chi2",
                    format!("label {c} outside {n} classes"),
                ));
            }
            hists[c].add_bin(code as usize);
        }
    }
    hists
        .into_iter()
        .map(|h| {
            if h.total() == 0.0 {
                Ok(None)
            } else {
                h.normalize().map(Some)
            }
        })
        .collect()
}

/// Mean over classes present in both sets of the χ² distance between
/// per-class LBP histograms. A pixel belongs to the class of its center.
pub fn texture_chi2(real: &[Sample], fake: &[Sample], num_classes: usize) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::invalid(
            "texture_chi2",
            "both sets must be non-empty",
        ));
    }
    let (ha, hb) = (
        class_lbp_histograms(real, num_classes)?,
        class_lbp_histograms(fake, num_classes)?,
    );
    let mut per_class = Vec::new();
    for (a, b) in ha.iter().zip(&hb) {
        if let (Some(a), Some(b)) = (a, b) {
            per_class.push(chi2(a, b)?);
        }
    }
    mean_or_err("texture_chi2", &per_class)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
/// Published five-scale exponents.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Dynamic range of images in [−1, 1].
const SSIM_RANGE: f64 = 2.0;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] = core::array::from_fn(|i| {
        let d = i as f64 - r;
        math::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
    });
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-mode filtering of an h×w plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * x[i * w + j + t])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * rows[(i + t) * ow + j])
                .sum();
        }
    }
    out
}

/// Mean luminance and contrast-structure terms of single-scale SSIM for one
/// channel. Variances and the covariance share one code path, so identical
/// inputs give exactly 1.
fn ssim_terms(x: &[f64], y: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> (f64, f64) {
    let c1 = (0.01 * SSIM_RANGE) * (0.01 * SSIM_RANGE);
    let c2 = (0.03 * SSIM_RANGE) * (0.03 * SSIM_RANGE);
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p * q).collect() };
    let (mx, my) = (filter_valid(x, h, w, k), filter_valid(y, h, w, k));
    let (exx, eyy, exy) = (
        filter_valid(&prod(x, x), h, w, k),
        filter_valid(&prod(y, y), h, w, k),
        filter_valid(&prod(x, y), h, w, k),
    );
    let n = mx.len() as f64;
    let (mut l_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mx.len() {
        let sxx = exx[i] - mx[i] * mx[i];
        let syy = eyy[i] - my[i] * my[i];
        let sxy = exy[i] - mx[i] * my[i];
        l_sum += (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
        cs_sum += (2.0 * sxy + c2) / (sxx + syy + c2);
    }
    (l_sum / n, cs_sum / n)
}

fn downsample(x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            let a = x[2 * i * w + 2 * j] + x[2 * i * w + 2 * j + 1];
            let b = x[(2 * i + 1) * w + 2 * j] + x[(2 * i + 1) * w + 2 * j + 1];
            out[i * ow + j] = (a + b) / 4.0;
        }
    }
    (out, oh, ow)
}

/// Largest scale count (at most 5) that fits an image of side `size`.
pub fn max_ms_ssim_scales(size: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| size >= SSIM_WINDOW << (s - 1))
        .unwrap_or(0)
}

/// Per-scale `(luminance, contrast-structure)` means for each channel.
pub fn ms_ssim_components(x: &Tensor, y: &Tensor, scales: usize) -> Result<Vec<Vec<(f64, f64)>>> {
    if x.shape() != y.shape() {
        return Err(Error::shape("ms_ssim", x.shape(), y.shape()));
    }
    let (c, h, w) = x.chw()?;
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() {
        return Err(Error::invalid(
            "ms_ssim",
            format!("scales must be in 1..=5, got {scales}"),
        ));
    }
    if h.min(w) < SSIM_WINDOW << (scales - 1) {
        return Err(Error::invalid(
            "ms_ssim",
            format!("{h}×{w} is too small for {scales} scales"),
        ));
    }
    let k = gaussian_window();
    Ok((0..c)
        .map(|ch| {
            let (mut a, mut b, mut hh, mut ww) =
                (x.channel(ch).to_vec(), y.channel(ch).to_vec(), h, w);
            let mut terms = Vec::with_capacity(scales);
            for s in 0..scales {
                terms.push(ssim_terms(&a, &b, hh, ww, &k));
                if s + 1 < scales {
                    let (na, nh, nw) = downsample(&a, hh, ww);
                    a = na;
                    b = downsample(&b, hh, ww).0;
                    (hh, ww) = (nh, nw);
                }
            }
            terms
        })
        .collect())
}

/// Multi-scale SSIM averaged over channels. The first `scales` published
/// exponents are renormalized to sum to 1; negative terms are clamped to 0.
pub fn ms_ssim(x: &Tensor, y: &Tensor, scales: usize) -> Result<f64> {
    let comps = ms_ssim_components(x, y, scales)?;
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let per_channel = comps.iter().map(|terms| {
        terms
            .iter()
            .enumerate()
            .map(|(s, &(l, cs))| {
                let v = if s + 1 == scales { l * cs } else { cs };
                math::pow(v.max(0.0), MS_SSIM_WEIGHTS[s] / wsum)
            })
            .product::<f64>()
    });
    Ok(per_channel.sum::<f64>() / comps.len() as f64)
}

/// Mean MS-SSIM over all unordered pairs.
pub fn mean_pairwise_ms_ssim(images: &[Tensor], scales: usize) -> Result<f64> {
    if images.len() < 2 {
        return Err(Error::invalid(
            "pairwise_diversity",
            "need at least two images",
        ));
    }
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..images.len() {
        for j in i + 1..images.len() {
            sum += ms_ssim(&images[i], &images[j], scales)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// For each label map, `num` generations from fresh noise; returns the mean
/// pairwise MS-SSIM averaged over maps. Lower means more diverse.
pub fn pairwise_diversity(
    generator: &Generator,
    labels: &[LabelMap],
    num: usize,
    scheme: NoiseScheme,
    scales: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("pairwise_diversity", "no label maps"));
    }
    let cfg = generator.config();
    let mut total = 0.0;
    for label in labels {
        let t = label.one_hot(cfg.num_classes)?;
        let images = (0..num)
            .map(|_| generator.generate(&sample_noise(scheme, label, cfg.z_channels, rng)?, &t))
            .collect::<Result<Vec<_>>>()?;
        total += mean_pairwise_ms_ssim(&images, scales)?;
    }
    Ok(total / labels.len() as f64)
}

/// One embedding per row, all of dimension `dim`, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "feature_set",
                format!("{} values do not form rows of {dim}", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature".into(),
                index: Some(i / dim),
            });
        }
        Ok(FeatureSet { dim, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("feature_set", "rows differ in length"));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            m.iter_mut().zip(self.row(i)).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|v| *v /= self.len() as f64);
        m
    }

    /// Unbiased covariance, row-major `dim × dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let (d, n) = (self.dim, self.len());
        let mu = self.mean();
        let mut cov = vec![0.0; d * d];
        for i in 0..n {
            let r = self.row(i);
            for a in 0..d {
                let da = r[a] - mu[a];
                for b in a..d {
                    cov[a * d + b] += da * (r[b] - mu[b]);
                }
            }
        }
        let denom = (n - 1) as f64;
        for a in 0..d {
            for b in a..d {
                cov[a * d + b] /= denom;
                cov[b * d + a] = cov[a * d + b];
            }
        }
        cov
    }
}

/// Eigendecomposition of a symmetric `n × n` matrix by cyclic Jacobi
/// rotations. Returns eigenvalues and the row-major matrix whose columns are
/// the eigenvectors.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    (0..n).for_each(|i| v[i * n + i] = 1.0);
    let scale: f64 = a.iter().map(|x| x * x).sum();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (math::abs(theta) + math::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

/// `V·diag(√max(λ, 0))·Vᵀ` of a symmetric matrix.
fn sqrt_psd(a: &[f64], n: usize) -> Vec<f64> {
    let (vals, vecs) = symmetric_eigen(a, n);
    let roots: Vec<f64> = vals.iter().map(|&l| math::sqrt(l.max(0.0))).collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n)
                .map(|k| vecs[i * n + k] * roots[k] * vecs[j * n + k])
                .sum();
        }
    }
    out
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Fréchet distance between Gaussians fitted to two feature sets:
/// `‖μ_A − μ_B‖² + tr(Σ_A + Σ_B − 2(Σ_A^½ Σ_B Σ_A^½)^½)`. Negative
/// eigenvalues are clipped to 0 and the result is clamped at 0.
pub fn frechet(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::shape("frechet", &[a.dim], &[b.dim]));
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(
            "frechet",
            "each set needs at least two rows",
        ));
    }
    let n = a.dim;
    let (ma, mb) = (a.mean(), b.mean());
    let (sa, sb) = (a.covariance(), b.covariance());
    let mean_term: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let ra = sqrt_psd(&sa, n);
    let mut m = matmul(&matmul(&ra, &sb, n), &ra, n);
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    let cross: f64 = symmetric_eigen(&m, n)
        .0
        .iter()
        .map(|&l| math::sqrt(l.max(0.0)))
        .sum();
    let trace: f64 = (0..n).map(|i| sa[i * n + i] + sb[i * n + i]).sum();
    Ok((mean_term + trace - 2.0 * cross).max(0.0))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Distance from each row to its k-th nearest other row.
fn knn_radii(set: &FeatureSet, k: usize) -> Vec<f64> {
    (0..set.len())
        .map(|i| {
            let mut d: Vec<f64> = (0..set.len())
                .filter(|&j| j != i)
                .map(|j| distance(set.row(i), set.row(j)))
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect()
}

fn coverage(support: &FeatureSet, radii: &[f64], queries: &FeatureSet) -> f64 {
    let inside = (0..queries.len())
        .filter(|&q| {
            (0..support.len()).any(|s| distance(queries.row(q), support.row(s)) <= radii[s])
        })
        .count();
    inside as f64 / queries.len() as f64
}

/// Improved precision and recall with k-NN ball manifolds: precision is the
/// fraction of fake rows inside the real manifold, recall the fraction of
/// real rows inside the fake manifold.
pub fn precision_recall(real: &FeatureSet, fake: &FeatureSet, k: usize) -> Result<(f64, f64)> {
    if real.dim != fake.dim {
        return Err(Error::shape("precision_recall", &[real.dim], &[fake.dim]));
    }
    if k == 0 || real.len() <= k || fake.len() <= k {
        return Err(Error::invalid(
            "precision_recall",
            format!("each set needs more than k = {k} rows"),
        ));
    }
    let (rr, rf) = (knn_radii(real, k), knn_radii(fake, k));
    Ok((coverage(real, &rr, fake), coverage(fake, &rf, real)))
}

/// Global-average-pooled discriminator bottleneck, one row per image.
pub fn extract_features<'a>(
    disc: &Discriminator,
    images: impl IntoIterator<Item = &'a Tensor>,
) -> Result<FeatureSet> {
    let rows = images
        .into_iter()
        .map(|x| disc.features(x))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::invalid("extract_features", "no images"));
    }
    FeatureSet::from_rows(rows)
}

/// Confusion of the discriminator's segmentation against each label.
pub fn segmentation_confusion(disc: &Discriminator, set: &[Sample]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(disc.config().num_classes);
    for s in set {
        cm.add(&disc.segment(&s.image)?, &s.label)?;
    }
    Ok(cm)
}
