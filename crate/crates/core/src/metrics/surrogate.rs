//! Small fixed video classifier used as the feature extractor for the
//! scores. Trained once on the synthetic motion classes, then frozen and
//! shipped with a SHA-256 checksum.

use std::path::Path;

use crate::autodiff::{grad_flat, Graph, NodeId, ParamSet};
use crate::checkpoint::{decode_params, encode_params, sha256_hex};
use crate::error::{Error, Result};
use crate::gan::{Adam, AdamConfig};
use crate::nn::presets::TOY_INPUT;
use crate::nn::{BnMode, LayerSpec, NetSpec, Network};
use crate::tensor::Tensor;
use crate::video::{Motion, SynthDataConfig, SynthDataset};

/// Feature width (output of the second-to-last linear layer).
pub const FEATURE_DIM: usize = 32;
pub const CLASSES: usize = 3;

static BUNDLED: &[u8] = include_bytes!("../../assets/surrogate.ldps");
/// Checksum of the bundled weights.
pub const BUNDLED_SHA256: &str = "31237d9b0d160e5bbd7d3507fdb71181106745e8f50d5b7f220c840e3bbac22b";

fn spec(trunk_only: bool) -> NetSpec {
    let mut layers = vec![
        LayerSpec::conv3d("c0", 4, [4; 3], [2; 3], [1; 3]).with_bias(true).lrelu(),
        LayerSpec::conv3d("c1", 8, [4; 3], [2; 3], [1; 3]).with_bias(true).lrelu(),
        LayerSpec::linear("fc1", FEATURE_DIM).with_bias(true).lrelu(),
    ];
    if !trunk_only {
        layers.push(LayerSpec::linear("fc2", CLASSES).with_bias(true));
    }
    NetSpec::new("surrogate", TOY_INPUT, layers)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Held-out clips scored after training.
    pub holdout: usize,
}

impl Default for SurrogateTrainConfig {
    fn default() -> Self {
        SurrogateTrainConfig {
            steps: 400,
            batch: 16,
            lr: 2e-3,
            seed: 20_240,
            holdout: 300,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Surrogate {
    full: Network,
    trunk: Network,
}

/// Features and class probabilities for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Extracted {
    pub features: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl Surrogate {
    pub fn from_params(p: ParamSet) -> Result<Self> {
        let mut full = Network::build(&spec(false), 0)?;
        full.set_params(p)?;
        let mut trunk = Network::build(&spec(true), 0)?;
        let mut tp = ParamSet::new();
        for (name, t) in full.params().entries().iter().take(trunk.params().len()) {
            tp.push(name.clone(), t.clone())?;
        }
        trunk.set_params(tp)?;
        Ok(Surrogate { full, trunk })
    }

    /// The shipped extractor, after checking its checksum.
    pub fn bundled() -> Result<Self> {
        Self::from_bytes(BUNDLED, BUNDLED_SHA256)
    }

    pub fn load(path: impl AsRef<Path>, expected_sha256: &str) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?, expected_sha256)
    }

    pub fn from_bytes(bytes: &[u8], expected_sha256: &str) -> Result<Self> {
        let found = sha256_hex(bytes);
        if found != expected_sha256 {
            return Err(Error::Checksum {
                expected: expected_sha256.to_string(),
                found,
            });
        }
        Self::from_params(decode_params(bytes)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_params(self.full.params())
    }

    pub fn params(&self) -> &ParamSet {
        self.full.params()
    }

    /// Train from scratch on synthetic clips; returns the extractor and its
    /// held-out accuracy.
    pub fn train(cfg: &SurrogateTrainConfig) -> Result<(Surrogate, f64)> {
        let mut net = Network::build(&spec(false), cfg.seed)?;
        let mut data = SynthDataset::new(SynthDataConfig {
            batch: cfg.batch,
            seed: cfg.seed,
            ..SynthDataConfig::default()
        })?;
        let mut adam = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                beta1: 0.9,
                ..AdamConfig::default()
            },
            net.params().total_dim(),
        );
        for _ in 0..cfg.steps {
            let (x, labels) = data.next_labeled()?;
            let onehot = one_hot(&labels)?;
            let (_, grad) = grad_flat(net.params(), |g: &mut Graph, p: &[NodeId]| {
                let xn = g.constant(x.clone());
                let logits = net.logits(g, p, xn, BnMode::Train)?.output;
                let logp = g.log_softmax(logits);
                let y = g.constant(onehot.clone());
                let picked = g.mul(logp, y)?;
                let s = g.sum(picked);
                Ok(g.scale(s, -1.0 / labels.len() as f64))
            })?;
            adam.step(net.params_mut(), &grad)?;
        }
        let s = Surrogate::from_params(net.params().clone())?;
        let acc = s.holdout_accuracy(cfg.holdout, cfg.seed.wrapping_add(1))?;
        Ok((s, acc))
    }

    /// Accuracy on fresh synthetic clips drawn from `seed`.
    pub fn holdout_accuracy(&self, n: usize, seed: u64) -> Result<f64> {
        let mut data = SynthDataset::new(SynthDataConfig {
            batch: 50,
            seed,
            ..SynthDataConfig::default()
        })?;
        let (mut right, mut total) = (0usize, 0usize);
        while total < n {
            let (x, labels) = data.next_labeled()?;
            let probs = self.extract(&x)?.probs;
            for (p, &l) in probs.iter().zip(&labels) {
                let arg = (0..CLASSES).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                right += (arg == l) as usize;
                total += 1;
            }
        }
        Ok(right as f64 / total as f64)
    }

    pub fn input_shape(&self) -> crate::nn::Shape {
        self.full.input_shape()
    }

    /// Features and softmax probabilities for a `[B, T, H, W, C]` batch.
    pub fn extract(&self, batch: &Tensor) -> Result<Extracted> {
        let s = self.input_shape();
        if batch.rank() != 5 || batch.shape()[1..] != s.batched(1)[1..] {
            return Err(Error::invalid(format!(
                "surrogate expects [B, {}, {}, {}, {}] clips, got {:?}",
                s.t,
                s.h,
                s.w,
                s.c,
                batch.shape()
            )));
        }
        let b = batch.shape()[0];
        let feats = self.trunk.forward_value(batch, BnMode::Frozen)?;
        let w = self.full.params().get("fc2.weight").expect("fc2 weight");
        let bias = self.full.params().get("fc2.bias").expect("fc2 bias");
        let f = feats.reshape(&[b, FEATURE_DIM])?;
        let logits = f.matmul(w)?;
        let mut probs = Vec::with_capacity(b);
        for row in logits.data().chunks(CLASSES) {
            let z: Vec<f64> = row.iter().zip(bias.data()).map(|(a, c)| a + c).collect();
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            probs.push(e.into_iter().map(|v| v / s).collect());
        }
        Ok(Extracted {
            features: f.data().chunks(FEATURE_DIM).map(|r| r.to_vec()).collect(),
            probs,
        })
    }
}

fn one_hot(labels: &[usize]) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), CLASSES]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= CLASSES {
            return Err(Error::invalid(format!("label {l} outside {CLASSES} classes")));
        }
        t.set(&[i, l], 1.0);
    }
    Ok(t)
}

/// Motion classes in label order.
pub fn class_names() -> [&'static str; CLASSES] {
    Motion::ALL.map(|m| m.as_str())
}
