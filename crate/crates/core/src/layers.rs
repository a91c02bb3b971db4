//! Composite blocks: convolutions with owned parameters, spatially-adaptive
//! normalization, and residual down / up blocks.
//!
//! Block layout (both networks):
//!
//! ```text
//! main: norm → act → [upsample] → conv1 → norm → act → conv2 → [avgpool]
//! skip: [upsample] → [1×1 conv if channels change] → [avgpool]
//! ```
//!
//! Normalization is per-sample, per-channel over spatial positions. In the
//! generator it is a [`SpadeNorm`] conditioned on the label/noise tensor; in
//! the discriminator it is unconditional.

use alloc::format;

use crate::graph::{Graph, Var};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{math, Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Gaussian with std `sqrt(2 / fan_in)`.
    HeNormal,
    Zeros,
}

/// Stride-1 "same" convolution with odd kernel.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
}

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Self {
        let mut w = Tensor::zeros(&[c_out, c_in, k, k]);
        if init == Init::HeNormal {
            let std = math::sqrt(2.0 / (c_in * k * k) as f64);
            rng.fill_gaussian(w.data_mut());
            w.data_mut().iter_mut().for_each(|v| *v *= std);
        }
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[c_out]));
        Conv {
            weight,
            bias,
            c_in,
            c_out,
            k,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p.var(self.weight), p.var(self.bias), 1, self.k / 2)
    }
}

/// Spatially-adaptive normalization:
/// `out = norm(x) ⊙ (1 + γ(cond)) + β(cond)`.
#[derive(Debug, Clone)]
pub struct SpadeNorm {
    pub shared: Conv,
    pub gamma: Conv,
    pub beta: Conv,
    pub eps: f64,
}

impl SpadeNorm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        cond_channels: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        SpadeNorm {
            shared: Conv::new(
                store,
                &format!("{name}.shared"),
                cond_channels,
                hidden,
                3,
                Init::HeNormal,
                rng,
            ),
            gamma: Conv::new(
                store,
                &format!("{name}.gamma"),
                hidden,
                channels,
                3,
                Init::Zeros,
                rng,
            ),
            beta: Conv::new(
                store,
                &format!("{name}.beta"),
                hidden,
                channels,
                3,
                Init::Zeros,
                rng,
            ),
            eps: NORM_EPS,
        }
    }

    /// `cond` must already match the spatial extents of `features`.
    pub fn forward(&self, g: &mut Graph<'_>, p: &Bound, features: Var, cond: Var) -> Result<Var> {
        let fs = g.shape(features);
        let cs = g.shape(cond);
        if fs.len() != 3 || cs.len() != 3 || fs[1..] != cs[1..] {
            return Err(Error::shape("spade_norm", fs, cs));
        }
        let normalized = g.instance_norm(features, self.eps)?;
        let hidden = self.shared.forward(g, p, cond)?;
        let hidden = g.leaky_relu(hidden, LEAKY_SLOPE);
        let gamma = self.gamma.forward(g, p, hidden)?;
        let beta = self.beta.forward(g, p, hidden)?;
        let scale = g.add_scalar(gamma, 1.0);
        let modulated = g.mul(normalized, scale)?;
        g.add(modulated, beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
    None,
}

#[derive(Debug, Clone)]
pub enum BlockNorm {
    Plain,
    Spade(SpadeNorm, SpadeNorm),
}

#[derive(Debug, Clone)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
    pub skip: Option<Conv>,
    pub direction: Direction,
    pub norm: BlockNorm,
    /// When false the first normalize/activate pair is omitted, so raw
    /// input values reach `conv1` (used for the block that sees the image).
    pub preactivate: bool,
}

pub struct ResBlockSpec<'a> {
    pub name: &'a str,
    pub c_in: usize,
    pub c_out: usize,
    pub direction: Direction,
    /// `Some((cond_channels, hidden))` builds SPADE normalization.
    pub spade: Option<(usize, usize)>,
    pub preactivate: bool,
}

impl ResBlock {
    pub fn new(store: &mut ParamStore, spec: ResBlockSpec<'_>, rng: &mut Rng) -> Self {
        let ResBlockSpec {
            name,
            c_in,
            c_out,
            direction,
            spade,
            preactivate,
        } = spec;
        let norm = match spade {
            Some((cond, hidden)) => BlockNorm::Spade(
                SpadeNorm::new(store, &format!("{name}.norm1"), c_in, cond, hidden, rng),
                SpadeNorm::new(store, &format!("{name}.norm2"), c_out, cond, hidden, rng),
            ),
            None => BlockNorm::Plain,
        };
        let conv1 = Conv::new(
            store,
            &format!("{name}.conv1"),
            c_in,
            c_out,
            3,
            Init::HeNormal,
            rng,
        );
        let conv2 = Conv::new(
            store,
            &format!("{name}.conv2"),
            c_out,
            c_out,
            3,
            Init::HeNormal,
            rng,
        );
        let skip = (c_in != c_out).then(|| {
            Conv::new(
                store,
                &format!("{name}.skip"),
                c_in,
                c_out,
                1,
                Init::HeNormal,
                rng,
            )
        });
        ResBlock {
            conv1,
            conv2,
            skip,
            direction,
            norm,
            preactivate,
        }
    }

    fn normalize(
        &self,
        g: &mut Graph<'_>,
        p: &Bound,
        x: Var,
        cond: Option<Var>,
        second: bool,
    ) -> Result<Var> {
        match &self.norm {
            BlockNorm::Plain => g.instance_norm(x, NORM_EPS),
            BlockNorm::Spade(n1, n2) => {
                let cond = cond.ok_or_else(|| {
                    Error::invalid("resblock", "SPADE block needs a conditioning tensor")
                })?;
                let s = g.shape(x);
                let (h, w) = (s[1], s[2]);
                let cs = g.shape(cond);
                let cond = if cs.len() == 3 && cs[1] == h && cs[2] == w {
                    cond
                } else {
                    g.resize_nearest(cond, h, w)?
                };
                if second { n2 } else { n1 }.forward(g, p, x, cond)
            }
        }
    }

    /// Residual block. `cond` (any resolution) is required for SPADE blocks
    /// and resized to each normalization layer with nearest-neighbour.
    pub fn forward(&self, g: &mut Graph<'_>, p: &Bound, x: Var, cond: Option<Var>) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[0] != self.conv1.c_in {
            return Err(Error::shape("resblock", &s, &[self.conv1.c_in]));
        }
        let (h, w) = (s[1], s[2]);
        if self.direction == Direction::Down && (h % 2 != 0 || w % 2 != 0) {
            return Err(Error::invalid(
                "resblock_down",
                format!("odd extents {h}×{w}"),
            ));
        }

        let mut main = x;
        if self.preactivate {
            main = self.normalize(g, p, main, cond, false)?;
            main = g.leaky_relu(main, LEAKY_SLOPE);
        }
        if self.direction == Direction::Up {
            main = g.resize_nearest(main, 2 * h, 2 * w)?;
        }
        main = self.conv1.forward(g, p, main)?;
        main = self.normalize(g, p, main, cond, true)?;
        main = g.leaky_relu(main, LEAKY_SLOPE);
        main = self.conv2.forward(g, p, main)?;
        if self.direction == Direction::Down {
            main = g.avg_pool2(main)?;
        }

        let mut skip = x;
        if self.direction == Direction::Up {
            skip = g.resize_nearest(skip, 2 * h, 2 * w)?;
        }
        if let Some(conv) = &self.skip {
            skip = conv.forward(g, p, skip)?;
        }
        if self.direction == Direction::Down {
            skip = g.avg_pool2(skip)?;
        }
        g.add(main, skip)
    }
}
