//! 3D noise tensors (D_z×H×W): training-time sampling schemes plus local
//! resampling and latent interpolation for inference.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::labelmix::Mask;
use crate::rng::Rng;
use crate::scene::LabelMap;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NoiseScheme {
    /// One vector replicated over every pixel.
    #[default]
    Image,
    /// One vector per class present in the label map.
    Region,
    /// An independent vector per pixel.
    Pixel,
    /// A fair coin chooses `Image` or `Region` per call.
    Mix,
}

impl NoiseScheme {
    pub const ALL: [NoiseScheme; 4] = [
        NoiseScheme::Image,
        NoiseScheme::Region,
        NoiseScheme::Pixel,
        NoiseScheme::Mix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseScheme::Image => "image",
            NoiseScheme::Region => "region",
            NoiseScheme::Pixel => "pixel",
            NoiseScheme::Mix => "mix",
        }
    }
}

impl fmt::Display for NoiseScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseScheme::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| Error::invalid("noise_scheme", alloc::format!("unknown scheme {s:?}")))
    }
}

fn gaussian_vec(dz: usize, rng: &mut Rng) -> Vec<f64> {
    let mut v = alloc::vec![0.0; dz];
    rng.fill_gaussian(&mut v);
    v
}

/// Writes `v` into every pixel `p` of `z` for which `select(p)` holds.
fn paint(z: &mut Tensor, v: &[f64], select: impl Fn(usize) -> bool) {
    let (_, h, w) = z.chw().expect("noise tensors are 3-D");
    let plane = h * w;
    let data = z.data_mut();
    for p in (0..plane).filter(|&p| select(p)) {
        for (c, &x) in v.iter().enumerate() {
            data[c * plane + p] = x;
        }
    }
}

/// Draws a D_z×H×W noise tensor shaped by `label` under `scheme`.
pub fn sample_noise(
    scheme: NoiseScheme,
    label: &LabelMap,
    dz: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    if dz == 0 {
        return Err(Error::invalid(
            "sample_noise",
            "noise needs at least one channel",
        ));
    }
    let mut z = Tensor::zeros(&[dz, label.height(), label.width()]);
    let scheme = match scheme {
        NoiseScheme::Mix if rng.coin() => NoiseScheme::Region,
        NoiseScheme::Mix => NoiseScheme::Image,
        s => s,
    };
    match scheme {
        NoiseScheme::Image => {
            let v = gaussian_vec(dz, rng);
            paint(&mut z, &v, |_| true);
        }
        NoiseScheme::Region => {
            let labels = label.labels();
            for c in label.present_classes() {
                let v = gaussian_vec(dz, rng);
                paint(&mut z, &v, |p| labels[p] == c);
            }
        }
        NoiseScheme::Pixel => rng.fill_gaussian(z.data_mut()),
        NoiseScheme::Mix => unreachable!("resolved above"),
    }
    Ok(z)
}

/// Replaces the noise inside `region` with one fresh vector; the exterior is
/// left untouched. A fresh vector is drawn even for an empty region.
pub fn resample_local(z: &Tensor, region: &Mask, rng: &mut Rng) -> Result<Tensor> {
    let (dz, h, w) = z.chw()?;
    if (h, w) != (region.height(), region.width()) {
        return Err(Error::shape(
            "resample_local",
            z.shape(),
            &[region.height(), region.width()],
        ));
    }
    let v = gaussian_vec(dz, rng);
    let mut out = z.clone();
    let m = region.values();
    paint(&mut out, &v, |p| m[p] == 1.0);
    Ok(out)
}

/// `steps` tensors `(1 − t)·z0 + t·z1` for `t = k / (steps − 1)`. With a
/// region, pixels outside it keep `z0`.
pub fn interpolate(
    z0: &Tensor,
    z1: &Tensor,
    steps: usize,
    region: Option<&Mask>,
) -> Result<Vec<Tensor>> {
    if z0.shape() != z1.shape() {
        return Err(Error::shape("interpolate", z0.shape(), z1.shape()));
    }
    if steps < 2 {
        return Err(Error::invalid("interpolate", "need at least two steps"));
    }
    let (_, h, w) = z0.chw()?;
    let plane = h * w;
    if let Some(m) = region {
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::shape(
                "interpolate",
                z0.shape(),
                &[m.height(), m.width()],
            ));
        }
    }
    Ok((0..steps)
        .map(|k| {
            let t = k as f64 / (steps - 1) as f64;
            let mut out = z0.clone();
            for (i, (o, &b)) in out.data_mut().iter_mut().zip(z1.data()).enumerate() {
                if region.is_none_or(|m| m.values()[i % plane] == 1.0) {
                    *o = (1.0 - t) * *o + t * b;
                }
            }
            out
        })
        .collect())
}
