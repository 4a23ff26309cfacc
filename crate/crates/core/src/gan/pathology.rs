//! A discriminator that separates real from generated clips by a wide
//! margin, for comparing generator gradients under the two G losses.

use super::generator::{Generator, GeneratorConfig, GeneratorKind, LatentSpec, Latents};
use super::loss::{g_loss, LossKind};
use crate::autodiff::Graph;
use crate::error::Result;
use crate::nn::{BnMode, LayerSpec, NetSpec, Network, Shape};
use crate::rng_stream;
use crate::tensor::Tensor;

/// Logit margin of the constructed discriminator.
pub const MARGIN: f64 = 20.0;

pub struct PerfectDSetup {
    pub generator: Generator,
    pub discriminator: Network,
    pub real: Tensor,
    pub latents: Latents,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorGradient {
    pub d_real_mean: f64,
    pub d_fake_mean: f64,
    /// Norm of the loss gradient at the generated clip (D's input).
    pub fake_input_norm: f64,
    /// Norm of the loss gradient with respect to all generator parameters.
    pub theta_norm: f64,
}

/// Real clips are all +1. D is linear, `w * sum(x) + b`, with `w` and `b`
/// fitted to the generator's clips so that real clips score `+MARGIN` and
/// every generated clip scores at most `-MARGIN`.
pub fn perfect_discriminator_setup(seed: u64, batch: usize) -> Result<PerfectDSetup> {
    let input = Shape::new(4, 4, 4, 1);
    let gcfg = GeneratorConfig {
        kind: GeneratorKind::Tgan,
        latent: LatentSpec {
            content: 4,
            motion: 2,
            frames: 4,
        },
        size: 4,
        channels: 1,
        width: 4,
    };
    let generator = Generator::build(gcfg, seed)?;
    let spec = NetSpec::new("perfect-d", input, vec![LayerSpec::linear("fc", 1).with_bias(true)]);
    let mut discriminator = Network::build(&spec, seed)?;
    let n = input.numel();
    let real = Tensor::ones(&input.batched(batch));
    let latents = generator.sample_latents(batch, &mut rng_stream(seed, 9));
    let fake = generator.generate(&latents)?;
    // tanh output keeps every clip sum strictly below n.
    let top = fake
        .data()
        .chunks(n)
        .map(|c| c.iter().sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let w = 2.0 * MARGIN / (n as f64 - top);
    *discriminator.params_mut().tensor_mut(0) = Tensor::full(&[n, 1], w);
    *discriminator.params_mut().tensor_mut(1) = Tensor::full(&[1], -MARGIN - w * top);
    Ok(PerfectDSetup {
        generator,
        discriminator,
        real,
        latents,
    })
}

pub fn generator_gradient(s: &PerfectDSetup, kind: LossKind) -> Result<GeneratorGradient> {
    let d_real_mean = s.discriminator.forward_value(&s.real, BnMode::Frozen)?.mean();
    let mut g = Graph::new();
    let pg = s.generator.params().register(&mut g, None)?;
    let pd = s.discriminator.params().register_constant(&mut g);
    let fake = s.generator.forward(&mut g, &pg, &s.latents)?;
    let df = s.discriminator.logits(&mut g, &pd, fake, BnMode::Frozen)?.output;
    let d_fake_mean = g.value(df).mean();
    let loss = g_loss(&mut g, df, kind);
    g.backward(loss)?;
    let fake_input_norm = g.adjoint(fake).map_or(0.0, |a| a.norm());
    let theta_norm = pg
        .iter()
        .map(|&p| g.adjoint(p).map_or(0.0, |a| a.data().iter().map(|x| x * x).sum()))
        .sum::<f64>()
        .sqrt();
    Ok(GeneratorGradient {
        d_real_mean,
        d_fake_mean,
        fake_input_norm,
        theta_norm,
    })
}
