//! Binary mixing masks and the mixing operator `M ⊙ x + (1 − M) ⊙ x̂`.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::scene::LabelMap;
use crate::tensor::Tensor;
use crate::{math, Error, Result};

/// H×W mask with entries exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Mask {
    pub fn filled(height: usize, width: usize, on: bool) -> Self {
        Mask {
            height,
            width,
            values: vec![if on { 1.0 } else { 0.0 }; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let values = (0..height * width)
            .map(|p| if f(p / width, p % width) { 1.0 } else { 0.0 })
            .collect();
        Mask {
            height,
            width,
            values,
        }
    }

    /// Mask selecting the pixels of `label` whose class is in `classes`.
    pub fn from_classes(label: &LabelMap, classes: &[u8]) -> Self {
        Self::from_fn(label.height(), label.width(), |i, j| {
            classes.contains(&label.get(i, j))
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[i * self.width + j] == 1.0
    }

    pub fn complement(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| 1.0 - v).collect(),
        }
    }

    /// Fraction of pixels set.
    pub fn area(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// One fair coin per class present in `label`; the mask is the union of the
/// classes whose coin came up heads. Coins are drawn in ascending class order.
pub fn sample_labelmix_mask(label: &LabelMap, rng: &mut Rng) -> Mask {
    let mut on = [false; 256];
    for c in label.present_classes() {
        on[c as usize] = rng.coin();
    }
    Mask::from_fn(label.height(), label.width(), |i, j| {
        on[label.get(i, j) as usize]
    })
}

/// CutMix box with area ratio drawn from U(0, 1).
pub fn sample_cutmix_mask(height: usize, width: usize, rng: &mut Rng) -> Mask {
    let ratio = rng.uniform();
    cutmix_mask_with_ratio(height, width, ratio, rng).expect("uniform ratio lies in [0, 1)")
}

/// Axis-aligned box of sides `round(H·√ratio) × round(W·√ratio)`, placed
/// uniformly among the positions where it fits entirely.
pub fn cutmix_mask_with_ratio(
    height: usize,
    width: usize,
    ratio: f64,
    rng: &mut Rng,
) -> Result<Mask> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(
            "cutmix_mask",
            alloc::format!("ratio {ratio} outside [0, 1]"),
        ));
    }
    let side = math::sqrt(ratio);
    let bh = (math::round(height as f64 * side) as usize).min(height);
    let bw = (math::round(width as f64 * side) as usize).min(width);
    let top = rng.below(height - bh + 1);
    let left = rng.below(width - bw + 1);
    Ok(Mask::from_fn(height, width, |i, j| {
        (top..top + bh).contains(&i) && (left..left + bw).contains(&j)
    }))
}

/// `M ⊙ x + (1 − M) ⊙ x̂` for C×H×W tensors, mask broadcast over channels.
pub fn mix(x: &Tensor, xhat: &Tensor, mask: &Mask) -> Result<Tensor> {
    if x.shape() != xhat.shape() {
        return Err(Error::shape("mix", x.shape(), xhat.shape()));
    }
    let (c, h, w) = x.chw()?;
    if (h, w) != (mask.height, mask.width) {
        return Err(Error::shape("mix", x.shape(), &[mask.height, mask.width]));
    }
    let plane = h * w;
    let mut out = x.clone();
    let (o, b) = (out.data_mut(), xhat.data());
    for ch in 0..c {
        for p in 0..plane {
            if mask.values[p] == 0.0 {
                o[ch * plane + p] = b[ch * plane + p];
            }
        }
    }
    Ok(out)
}
