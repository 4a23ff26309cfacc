//! The adversarial game: losses, toy generators, Adam and the training loop.

mod adam;
mod generator;
pub mod loss;
pub mod pathology;
mod train;

pub use adam::{Adam, AdamConfig};
pub use generator::{Generator, GeneratorConfig, GeneratorKind, LatentSpec, Latents};
pub use loss::{gan_value, LossKind};
pub use train::{
    train, train_with, Checkpoint, Failure, LossRecord, RunArtifacts, RunSeeds, SpectrumBatch, TrainConfig,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One TGAN-style clip `[T, H, W, C]` from a content code.
pub fn tgan_toy_generate(gen: &Generator, z_c: &[f64]) -> Result<Tensor> {
    if gen.config().kind != GeneratorKind::Tgan {
        return Err(Error::invalid("tgan_toy_generate needs a TGAN-style generator"));
    }
    let l = gen.config().latent;
    single(gen, z_c, &vec![vec![0.0; l.motion]; l.frames])
}

/// One MoCoGAN-style clip from a content code and `T` motion codes.
pub fn mocogan_toy_generate(gen: &Generator, z_c: &[f64], z_m: &[Vec<f64>]) -> Result<Tensor> {
    if gen.config().kind != GeneratorKind::Mocogan {
        return Err(Error::invalid("mocogan_toy_generate needs a MoCoGAN-style generator"));
    }
    single(gen, z_c, z_m)
}

fn single(gen: &Generator, z_c: &[f64], z_m: &[Vec<f64>]) -> Result<Tensor> {
    let l = gen.config().latent;
    if z_m.len() != l.frames || z_m.iter().any(|v| v.len() != l.motion) {
        return Err(Error::invalid(format!(
            "expected {} motion codes of length {}",
            l.frames, l.motion
        )));
    }
    let z = Latents {
        content: Tensor::new(vec![1, z_c.len()], z_c.to_vec())?,
        motion: Tensor::new(vec![1, l.frames, l.motion], z_m.concat())?,
    };
    let out = gen.generate(&z)?;
    let s = out.shape()[1..].to_vec();
    out.reshape(&s)
}
