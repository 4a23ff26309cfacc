//! Toy video generators.
//!
//! Both share a frame upscaler that maps a per-frame code `[z_c; z_m^t]`
//! to a `size x size x channels` image: linear to 4x4, then nearest x2
//! upsampling and 3x3 convolutions, `tanh` on the output.
//!
//! * TGAN-style: a temporal stage maps `z_c` to `T` motion codes (linear,
//!   then a 1D temporal convolution).
//! * MoCoGAN-style: a GRU runs over per-frame motion noise `z_m^t`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::autodiff::{ConvGeom, Graph, NodeId, ParamSet};
use crate::error::{Error, Result};
use crate::nn::kaiming_uniform;
use crate::nn::ops::{gru_cell, GruNodes};
use crate::nn::Shape;
use crate::tensor::Tensor;

const SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorKind {
    Tgan,
    Mocogan,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::Tgan => "tgan",
            GeneratorKind::Mocogan => "mocogan",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tgan" => Some(GeneratorKind::Tgan),
            "mocogan" => Some(GeneratorKind::Mocogan),
            _ => None,
        }
    }
}

/// Content and motion code sizes and clip length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatentSpec {
    pub content: usize,
    pub motion: usize,
    pub frames: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub latent: LatentSpec,
    /// Frame height and width; `4 * 2^n`.
    pub size: usize,
    pub channels: usize,
    /// Feature channels of the upscaler.
    pub width: usize,
}

impl GeneratorConfig {
    pub fn toy(kind: GeneratorKind) -> Self {
        GeneratorConfig {
            kind,
            latent: LatentSpec {
                content: 8,
                motion: 4,
                frames: 16,
            },
            size: 16,
            channels: 1,
            width: 8,
        }
    }

    pub fn output_shape(&self) -> Shape {
        Shape::new(self.latent.frames, self.size, self.size, self.channels)
    }

    fn stages(&self) -> Result<usize> {
        let mut s = 4;
        let mut n = 0;
        while s < self.size {
            s *= 2;
            n += 1;
        }
        if s != self.size {
            return Err(Error::invalid(format!(
                "generator frame size must be 4 * 2^n, got {}",
                self.size
            )));
        }
        Ok(n)
    }

    fn validate(&self) -> Result<()> {
        let l = self.latent;
        if l.content == 0 || l.motion == 0 || l.frames < 2 || self.channels == 0 || self.width == 0 {
            return Err(Error::invalid(format!(
                "generator needs content, motion, channels, width >= 1 and frames >= 2, got {self:?}"
            )));
        }
        self.stages().map(|_| ())
    }
}

/// One batch of latent codes.
#[derive(Clone, Debug, PartialEq)]
pub struct Latents {
    /// `[B, content]`
    pub content: Tensor,
    /// `[B, T, motion]`; only the MoCoGAN-style generator reads it.
    pub motion: Tensor,
}

impl Latents {
    pub fn batch(&self) -> usize {
        self.content.shape()[0]
    }
}

#[derive(Clone, Debug)]
pub struct Generator {
    cfg: GeneratorConfig,
    params: ParamSet,
}

impl Generator {
    pub fn build(cfg: GeneratorConfig, seed: u64) -> Result<Generator> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let LatentSpec { content, motion, frames } = cfg.latent;
        match cfg.kind {
            GeneratorKind::Tgan => {
                let n = frames * motion;
                p.push("temporal.fc.weight", kaiming_uniform(&[content, n], content, SLOPE, &mut rng))?;
                p.push("temporal.fc.bias", Tensor::zeros(&[n]))?;
                p.push(
                    "temporal.conv.weight",
                    kaiming_uniform(&[motion, motion, 3, 1, 1], motion * 3, SLOPE, &mut rng),
                )?;
                p.push("temporal.conv.bias", Tensor::zeros(&[motion]))?;
            }
            GeneratorKind::Mocogan => {
                let k = 1.0 / (motion as f64).sqrt();
                p.push("gru.w_ih", Tensor::uniform(&[motion, 3 * motion], -k, k, &mut rng))?;
                p.push("gru.w_hh", Tensor::uniform(&[motion, 3 * motion], -k, k, &mut rng))?;
                p.push("gru.b_ih", Tensor::uniform(&[3 * motion], -k, k, &mut rng))?;
                p.push("gru.b_hh", Tensor::uniform(&[3 * motion], -k, k, &mut rng))?;
            }
        }
        let f = content + motion;
        let w = cfg.width;
        p.push("up.fc.weight", kaiming_uniform(&[f, 16 * w], f, SLOPE, &mut rng))?;
        p.push("up.fc.bias", Tensor::zeros(&[16 * w]))?;
        for i in 0..cfg.stages()? {
            p.push(format!("up.conv{i}.weight"), kaiming_uniform(&[w, w, 1, 3, 3], w * 9, SLOPE, &mut rng))?;
            p.push(format!("up.conv{i}.bias"), Tensor::zeros(&[w]))?;
        }
        p.push("up.out.weight", kaiming_uniform(&[cfg.channels, w, 1, 3, 3], w * 9, SLOPE, &mut rng))?;
        p.push("up.out.bias", Tensor::zeros(&[cfg.channels]))?;
        Ok(Generator { cfg, params: p })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn output_shape(&self) -> Shape {
        self.cfg.output_shape()
    }

    /// Standard normal codes.
    pub fn sample_latents<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Latents {
        let l = self.cfg.latent;
        Latents {
            content: Tensor::randn(&[batch, l.content], rng),
            motion: Tensor::randn(&[batch, l.frames, l.motion], rng),
        }
    }

    /// `[B, T, size, size, channels]` video node.
    pub fn forward(&self, g: &mut Graph, p: &[NodeId], z: &Latents) -> Result<NodeId> {
        let zc = g.constant(z.content.clone());
        let zm = g.constant(z.motion.clone());
        self.forward_nodes(g, p, zc, zm)
    }

    /// As [`Generator::forward`] with the codes already on the graph.
    pub fn forward_nodes(&self, g: &mut Graph, p: &[NodeId], zc: NodeId, zm: NodeId) -> Result<NodeId> {
        if p.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "generator has {} parameter tensors, got {} nodes",
                self.params.len(),
                p.len()
            )));
        }
        let LatentSpec { content, motion, frames } = self.cfg.latent;
        let b = g.value(zc).shape()[0];
        if g.value(zc).shape() != [b, content] {
            return Err(Error::shape("content code", g.value(zc).shape(), &[b, content]));
        }
        let at = |name: &str| p[self.params.index_of(name).expect("known parameter")];
        let codes = match self.cfg.kind {
            GeneratorKind::Tgan => {
                let h = g.matmul(zc, at("temporal.fc.weight"))?;
                let h = g.add_channel(h, at("temporal.fc.bias"))?;
                let h = g.tanh(h);
                let h = g.reshape(h, &[b, frames, 1, 1, motion])?;
                let h = g.conv(h, at("temporal.conv.weight"), ConvGeom::new([1, 1, 1], [1, 0, 0]))?;
                let h = g.add_channel(h, at("temporal.conv.bias"))?;
                g.tanh(h)
            }
            GeneratorKind::Mocogan => {
                if g.value(zm).shape() != [b, frames, motion] {
                    return Err(Error::shape("motion code", g.value(zm).shape(), &[b, frames, motion]));
                }
                let nodes = GruNodes {
                    w_ih: at("gru.w_ih"),
                    w_hh: at("gru.w_hh"),
                    b_ih: at("gru.b_ih"),
                    b_hh: at("gru.b_hh"),
                };
                let mut h = g.constant(Tensor::zeros(&[b, motion]));
                let mut outs = Vec::with_capacity(frames);
                for t in 0..frames {
                    let x = g.slice(zm, &[0, t, 0], &[b, 1, motion])?;
                    let x = g.reshape(x, &[b, motion])?;
                    h = gru_cell(g, x, h, nodes)?;
                    outs.push(g.reshape(h, &[b, 1, 1, 1, motion])?);
                }
                g.concat(&outs, 1)?
            }
        };
        let zc5 = g.reshape(zc, &[b, 1, 1, 1, content])?;
        let zc_t = g.concat(&vec![zc5; frames], 1)?;
        let feat = g.concat(&[zc_t, codes], 4)?;
        self.upscale(g, p, feat, b)
    }

    fn upscale(&self, g: &mut Graph, p: &[NodeId], feat: NodeId, b: usize) -> Result<NodeId> {
        let at = |name: &str| p[self.params.index_of(name).expect("known parameter")];
        let LatentSpec { content, motion, frames } = self.cfg.latent;
        let w = self.cfg.width;
        let x = g.reshape(feat, &[b * frames, content + motion])?;
        let x = g.matmul(x, at("up.fc.weight"))?;
        let x = g.add_channel(x, at("up.fc.bias"))?;
        let x = g.reshape(x, &[b, frames, 4, 4, w])?;
        let mut x = g.leaky_relu(x, SLOPE);
        let geom = ConvGeom::new([1, 1, 1], [0, 1, 1]);
        for i in 0..self.cfg.stages()? {
            x = g.upsample(x, 2)?;
            x = g.conv(x, at(&format!("up.conv{i}.weight")), geom)?;
            x = g.add_channel(x, at(&format!("up.conv{i}.bias")))?;
            x = g.leaky_relu(x, SLOPE);
        }
        let x = g.conv(x, at("up.out.weight"), geom)?;
        let x = g.add_channel(x, at("up.out.bias"))?;
        Ok(g.tanh(x))
    }

    /// Evaluate without recording gradients.
    pub fn generate(&self, z: &Latents) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.register_constant(&mut g);
        let out = self.forward(&mut g, &p, z)?;
        Ok(g.value(out).clone())
    }
}
