//! SPADE generator and U-Net segmentation discriminator.
//!
//! Channel schedules, for base width `b` and depth `d`:
//!
//! - discriminator encoder `down_k` (k = 1..d): `b · 2^⌊(k−1)/2⌋` channels at
//!   `H / 2^k`;
//! - discriminator decoder `up_k`: input `down_d` for k = 1, otherwise
//!   `concat(up_{k−1}, down_{d−k+1})`; output width of `down_{d−k}`, or `b/2`
//!   for the last block; resolution `H / 2^{d−k}`;
//! - generator `up_k`: `min(8b, (b/2) · 2^{d−k})` channels at `H / 2^{d−k}`,
//!   preceded by a 3×3 conv from `interp(z_y)` at `H / 2^d`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::layers::{Conv, Direction, Init, ResBlock, ResBlockSpec, LEAKY_SLOPE};
use crate::params::{Bound, ParamStore};
use crate::rng::Rng;
use crate::scene::LabelMap;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub num_classes: usize,
    pub image_size: usize,
    pub z_channels: usize,
    pub base_width: usize,
    pub depth: usize,
    /// When false the generator ignores its noise input and sees zeros.
    pub use_noise: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_classes: 6,
            image_size: 64,
            z_channels: 16,
            base_width: 32,
            depth: 3,
            use_noise: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        let h = self.image_size;
        if h < 16 || !h.is_power_of_two() {
            return fail(format!("image_size must be a power of two >= 16, got {h}"));
        }
        if self.depth == 0
            || self.depth >= usize::BITS as usize
            || !h.is_multiple_of(1 << self.depth)
        {
            return fail(format!("image_size {h} not divisible by 2^{}", self.depth));
        }
        if !(2..=256).contains(&self.num_classes) {
            return fail(format!(
                "num_classes must be in 2..=256, got {}",
                self.num_classes
            ));
        }
        if self.z_channels == 0 {
            return fail("z_channels must be at least 1".into());
        }
        if self.base_width < 2 || !self.base_width.is_multiple_of(2) {
            return fail(format!(
                "base_width must be even and >= 2, got {}",
                self.base_width
            ));
        }
        Ok(())
    }

    /// Spatial extent of the generator's first feature map.
    pub fn initial_size(&self) -> usize {
        self.image_size >> self.depth
    }

    pub fn generator_widths(&self) -> Vec<usize> {
        let b = self.base_width;
        (1..=self.depth)
            .map(|k| (8 * b).min((b / 2) << (self.depth - k)))
            .collect()
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        (1..=self.depth)
            .map(|k| self.base_width << ((k - 1) / 2))
            .collect()
    }

    /// (input, output) widths of the decoder blocks.
    pub fn decoder_widths(&self) -> Vec<(usize, usize)> {
        let down = self.encoder_widths();
        let d = self.depth;
        let mut prev = down[d - 1];
        (1..=d)
            .map(|k| {
                let c_in = if k == 1 { prev } else { prev + down[d - k] };
                let c_out = if k < d {
                    down[d - k - 1]
                } else {
                    self.base_width / 2
                };
                prev = c_out;
                (c_in, c_out)
            })
            .collect()
    }

    fn check_map(&self, what: &'static str, shape: &[usize], channels: usize) -> Result<()> {
        let want = [channels, self.image_size, self.image_size];
        if shape != want {
            return Err(Error::shape(what, shape, &want));
        }
        Ok(())
    }
}

/// SPADE generator `G(z, t)`.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: ModelConfig,
    params: ParamStore,
    input: Conv,
    blocks: Vec<ResBlock>,
    output: Conv,
}

impl Generator {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let cond = cfg.z_channels + cfg.num_classes;
        let widths = cfg.generator_widths();
        let input = Conv::new(
            &mut store,
            "g.input",
            cond,
            widths[0],
            3,
            Init::HeNormal,
            rng,
        );
        let mut c_in = widths[0];
        let blocks = widths
            .iter()
            .enumerate()
            .map(|(i, &c_out)| {
                let block = ResBlock::new(
                    &mut store,
                    ResBlockSpec {
                        name: &format!("g.up{}", i + 1),
                        c_in,
                        c_out,
                        direction: Direction::Up,
                        spade: Some((cond, cfg.base_width)),
                        preactivate: true,
                    },
                    rng,
                );
                c_in = c_out;
                block
            })
            .collect();
        let output = Conv::new(&mut store, "g.output", c_in, 3, 3, Init::HeNormal, rng);
        Ok(Generator {
            cfg: cfg.clone(),
            params: store,
            input,
            blocks,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records `z` and `t` (D_z×H×W and N×H×W) into `g` and returns the image.
    pub fn forward(&self, g: &mut Graph<'_>, p: &Bound, z: Var, t: Var) -> Result<Var> {
        let cfg = &self.cfg;
        cfg.check_map("generator noise", g.shape(z), cfg.z_channels)?;
        cfg.check_map("generator labels", g.shape(t), cfg.num_classes)?;
        let z = if cfg.use_noise {
            z
        } else {
            g.constant(Tensor::zeros(&[
                cfg.z_channels,
                cfg.image_size,
                cfg.image_size,
            ]))
        };
        let zy = g.concat_channels(z, t)?;
        let s0 = cfg.initial_size();
        let mut x = g.resize_nearest(zy, s0, s0)?;
        x = self.input.forward(g, p, x)?;
        for block in &self.blocks {
            x = block.forward(g, p, x, Some(zy))?;
        }
        x = g.leaky_relu(x, LEAKY_SLOPE);
        x = self.output.forward(g, p, x)?;
        Ok(g.tanh(x))
    }

    /// Inference-only convenience wrapper around [`Generator::forward`].
    pub fn generate(&self, z: &Tensor, t: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let zv = g.constant(z.clone());
        let tv = g.constant(t.clone());
        let out = self.forward(&mut g, &p, zv, tv)?;
        Ok(g.tensor(out))
    }
}

/// U-Net discriminator producing per-pixel logits over N real classes and
/// one fake class (the last channel).
#[derive(Debug, Clone)]
pub struct Discriminator {
    cfg: ModelConfig,
    params: ParamStore,
    down: Vec<ResBlock>,
    up: Vec<ResBlock>,
    output: Conv,
}

/// Logits and the encoder bottleneck of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct DiscriminatorOutput {
    pub logits: Var,
    pub bottleneck: Var,
}

impl Discriminator {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut c_in = 3;
        let mut down = Vec::with_capacity(cfg.depth);
        for (i, &c_out) in cfg.encoder_widths().iter().enumerate() {
            down.push(ResBlock::new(
                &mut store,
                ResBlockSpec {
                    name: &format!("d.down{}", i + 1),
                    c_in,
                    c_out,
                    direction: Direction::Down,
                    spade: None,
                    preactivate: i > 0,
                },
                rng,
            ));
            c_in = c_out;
        }
        let mut up = Vec::with_capacity(cfg.depth);
        for (i, &(c_in, c_out)) in cfg.decoder_widths().iter().enumerate() {
            up.push(ResBlock::new(
                &mut store,
                ResBlockSpec {
                    name: &format!("d.up{}", i + 1),
                    c_in,
                    c_out,
                    direction: Direction::Up,
                    spade: None,
                    preactivate: true,
                },
                rng,
            ));
        }
        let output = Conv::new(
            &mut store,
            "d.output",
            cfg.base_width / 2,
            cfg.num_classes + 1,
            3,
            Init::Zeros,
            rng,
        );
        Ok(Discriminator {
            cfg: cfg.clone(),
            params: store,
            down,
            up,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Records the U-Net on image `x` (3×H×W) and returns its logits.
    pub fn forward(&self, g: &mut Graph<'_>, p: &Bound, x: Var) -> Result<Var> {
        Ok(self.forward_full(g, p, x, &mut |_, _| {})?.logits)
    }

    /// Full forward pass. `trace` receives the name and shape of every stage.
    pub fn forward_full(
        &self,
        g: &mut Graph<'_>,
        p: &Bound,
        x: Var,
        trace: &mut dyn FnMut(&str, &[usize]),
    ) -> Result<DiscriminatorOutput> {
        self.cfg.check_map("discriminator input", g.shape(x), 3)?;
        let d = self.cfg.depth;
        let mut skips = Vec::with_capacity(d);
        let mut h = x;
        for (i, block) in self.down.iter().enumerate() {
            h = block.forward(g, p, h, None)?;
            trace(&format!("down{}", i + 1), g.shape(h));
            skips.push(h);
        }
        let bottleneck = h;
        for (i, block) in self.up.iter().enumerate() {
            if i > 0 {
                h = g.concat_channels(h, skips[d - i - 1])?;
                trace(&format!("cat(up{}, down{})", i, d - i), g.shape(h));
            }
            h = block.forward(g, p, h, None)?;
            trace(&format!("up{}", i + 1), g.shape(h));
        }
        let logits = self.output.forward(g, p, h)?;
        trace("out", g.shape(logits));
        Ok(DiscriminatorOutput { logits, bottleneck })
    }

    /// Inference-only logits for one image.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = self.forward(&mut g, &p, xv)?;
        Ok(g.tensor(out))
    }

    /// Per-pixel class prediction over the N real classes.
    pub fn segment(&self, x: &Tensor) -> Result<LabelMap> {
        segment_logits(&self.logits(x)?, self.cfg.num_classes)
    }

    /// Global average of the bottleneck feature map; one value per channel.
    pub fn features(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = self.forward_full(&mut g, &p, xv, &mut |_, _| {})?;
        let t = g.tensor(out.bottleneck);
        let (c, h, w) = t.chw()?;
        let n = (h * w) as f64;
        Ok((0..c)
            .map(|ch| t.channel(ch).iter().sum::<f64>() / n)
            .collect())
    }

    /// Stage names and shapes of a forward pass at the configured size.
    pub fn shape_trace(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let s = self.cfg.image_size;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(Tensor::zeros(&[3, s, s]));
        let mut out = Vec::new();
        self.forward_full(&mut g, &p, xv, &mut |name, shape| {
            out.push((String::from(name), shape.to_vec()))
        })?;
        Ok(out)
    }
}

/// Argmax over the first `num_classes` logit channels; the fake channel is
/// ignored. Ties resolve to the lowest class index.
pub fn segment_logits(logits: &Tensor, num_classes: usize) -> Result<LabelMap> {
    let (c, _, _) = logits.chw()?;
    if c != num_classes + 1 {
        return Err(Error::shape("segment", logits.shape(), &[num_classes + 1]));
    }
    LabelMap::argmax(logits, num_classes)
}
