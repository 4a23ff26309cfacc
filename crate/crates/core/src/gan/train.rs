//! Alternating D/G training with Lipschitz hooks, spectrum snapshots and
//! gradient-norm probes.

use rand::RngCore;

use super::adam::{Adam, AdamConfig};
use super::generator::{Generator, GeneratorConfig, Latents};
use super::loss::{d_loss, d_loss_real, g_loss, LossKind};
use crate::autodiff::{Graph, ParamSet};
use crate::curvature::{analyze_snapshots, gradient_norm_probe, BatchKind, GradNormRecord, Snapshot, SpectrumConfig, SpectrumRecord};
use crate::error::{Error, Result};
use crate::lipschitz::{apply_svc, reshape_to_matrix, spectral_norm, LipschitzConfig, LipschitzKind};
use crate::nn::{BatchStats, BnMode, NetSpec, Network};
use crate::rng_stream;
use crate::tensor::Tensor;
use crate::video::BatchSource;

/// Which batch the Hessian is evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumBatch {
    /// The minibatch of the sampled iteration.
    Minibatch,
    /// One real batch drawn before training and fixed latent codes.
    Fixed,
}

impl SpectrumBatch {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumBatch::Minibatch => "minibatch",
            SpectrumBatch::Fixed => "fixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "minibatch" => Some(SpectrumBatch::Minibatch),
            "fixed" => Some(SpectrumBatch::Fixed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub adam_d: AdamConfig,
    pub adam_g: AdamConfig,
    /// D updates per G update.
    pub d_steps: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub lipschitz: LipschitzConfig,
    /// Spectrum cadence; 0 disables spectra.
    pub spectrum_every: usize,
    pub spectrum: SpectrumConfig,
    pub spectrum_batch: SpectrumBatch,
    /// Gradient-norm probe cadence; 0 disables probes.
    pub gradnorm_every: usize,
    /// Checkpoint cadence; the final state is always kept.
    pub checkpoint_every: usize,
    /// Record the largest singular value after every SVC pass.
    pub audit_svc: bool,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 200,
            adam_d: AdamConfig::default(),
            adam_g: AdamConfig::default(),
            d_steps: 1,
            seed: 0,
            loss: LossKind::NonSaturating,
            lipschitz: LipschitzConfig::default(),
            spectrum_every: 20,
            spectrum: SpectrumConfig::default(),
            spectrum_batch: SpectrumBatch::Minibatch,
            gradnorm_every: 0,
            checkpoint_every: 0,
            audit_svc: false,
            threads: 1,
        }
    }
}

/// Seeds for the independent random streams of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub generator_init: u64,
    pub discriminator_init: u64,
    pub latents: u64,
    pub spectra: u64,
    pub data: u64,
    pub spectral_norm: u64,
    pub fixed_batch: u64,
}

impl RunSeeds {
    pub fn from_seed(seed: u64) -> Self {
        let s = |k| rng_stream(seed, k).next_u64();
        RunSeeds {
            generator_init: s(1),
            discriminator_init: s(2),
            latents: s(3),
            spectra: s(4),
            data: s(5),
            spectral_norm: s(6),
            fixed_batch: s(7),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss_d: f64,
    pub loss_g: f64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub iteration: usize,
    pub generator: ParamSet,
    pub discriminator: ParamSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    /// Iteration at which a non-finite value appeared.
    pub iteration: usize,
    /// Last iteration whose state is intact.
    pub last_good: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub losses: Vec<LossRecord>,
    pub spectra: Vec<SpectrumRecord>,
    pub gradnorms: Vec<(usize, GradNormRecord)>,
    pub checkpoints: Vec<Checkpoint>,
    /// `(iteration, max σ over all clipped matrices)` after each SVC pass.
    pub svc_audit: Vec<(usize, f64)>,
    pub failure: Option<Failure>,
    pub generator: Generator,
    pub discriminator: Network,
}

/// Build G and D from the run seed and train them.
pub fn train(cfg: &TrainConfig, g_cfg: GeneratorConfig, d_spec: &NetSpec, data: &mut dyn BatchSource) -> Result<RunArtifacts> {
    let seeds = RunSeeds::from_seed(cfg.seed);
    let g = Generator::build(g_cfg, seeds.generator_init)?;
    let d = Network::build(d_spec, seeds.discriminator_init)?;
    train_with(cfg, g, d, data)
}

fn check_finite(what: &str, xs: &[f64]) -> std::result::Result<(), String> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(format!("{what} has non-finite entry {} at index {i}", xs[i])),
        None => Ok(()),
    }
}

/// D-step loss and gradient; also returns train-mode BN statistics.
fn d_step_grad(d: &Network, real: &Tensor, fake: &Tensor) -> Result<(f64, Vec<f64>, BatchStats, BatchStats)> {
    let mut stats = (Vec::new(), Vec::new());
    let (loss, grad) = crate::autodiff::grad_flat(d.params(), |g, p| {
        let r = g.constant(real.clone());
        let f = g.constant(fake.clone());
        let out_r = d.logits(g, p, r, BnMode::Train)?;
        let out_f = d.logits(g, p, f, BnMode::Train)?;
        stats = (out_r.batch_stats, out_f.batch_stats);
        d_loss(g, out_r.output, out_f.output)
    })?;
    Ok((loss, grad, stats.0, stats.1))
}

fn g_step_grad(gen: &Generator, d: &Network, z: &Latents, kind: LossKind) -> Result<(f64, Vec<f64>)> {
    crate::autodiff::grad_flat(gen.params(), |g, p| {
        let dp = d.params().register_constant(g);
        let fake = gen.forward(g, p, z)?;
        let df = d.logits(g, &dp, fake, BnMode::Train)?.output;
        Ok(g_loss(g, df, kind))
    })
}

fn probe_real(d: &Network, real: &Tensor) -> Result<Vec<GradNormRecord>> {
    let mut g = Graph::new();
    let p = d.params().register(&mut g, None)?;
    let x = g.variable(real.clone(), None)?;
    let out = d.logits(&mut g, &p, x, BnMode::Train)?.output;
    let loss = d_loss_real(&mut g, out);
    g.backward(loss)?;
    gradient_norm_probe(&g, BatchKind::Real)
}

fn probe_fake(gen: &Generator, d: &Network, z: &Latents, kind: LossKind) -> Result<Vec<GradNormRecord>> {
    let mut g = Graph::new();
    let pg = gen.params().register(&mut g, None)?;
    let pd = d.params().register(&mut g, None)?;
    let fake = gen.forward(&mut g, &pg, z)?;
    let out = d.logits(&mut g, &pd, fake, BnMode::Train)?.output;
    let loss = g_loss(&mut g, out, kind);
    g.backward(loss)?;
    gradient_norm_probe(&g, BatchKind::Fake)
}

fn max_sigma(d: &Network) -> Result<f64> {
    let mut m: f64 = 0.0;
    for idx in d.matrix_param_indices() {
        m = m.max(spectral_norm(&reshape_to_matrix(d.params().tensor(idx))?)?);
    }
    Ok(m)
}

/// Train prepared networks. Every random draw comes from streams derived
/// from `cfg.seed`; spectra are computed on snapshots after the loop, so
/// enabling them does not change the trajectory.
pub fn train_with(cfg: &TrainConfig, mut gen: Generator, mut d: Network, data: &mut dyn BatchSource) -> Result<RunArtifacts> {
    if cfg.d_steps == 0 {
        return Err(Error::invalid("d_steps must be >= 1"));
    }
    let seeds = RunSeeds::from_seed(cfg.seed);
    if gen.output_shape() != d.input_shape() {
        return Err(Error::invalid(format!(
            "generator emits {} clips but the discriminator expects {}",
            gen.output_shape(),
            d.input_shape()
        )));
    }
    if data.sample_shape() != d.input_shape() {
        return Err(Error::invalid(format!(
            "data yields {} clips but the discriminator expects {}",
            data.sample_shape(),
            d.input_shape()
        )));
    }
    let mut svc_audit_init = None;
    if cfg.lipschitz.kind == LipschitzKind::Sn && !d.spectral_enabled() {
        d.enable_spectral_norm(seeds.spectral_norm)?;
    }
    // Start SVC runs inside the constraint set.
    if cfg.lipschitz.kind == LipschitzKind::Svc
        && apply_svc(&mut d, cfg.lipschitz.cap, cfg.lipschitz.every_n, 0, cfg.lipschitz.clip_bn)?
        && cfg.audit_svc
    {
        svc_audit_init = Some((0, max_sigma(&d)?));
    }
    let mut z_rng = rng_stream(seeds.latents, 0);
    let mut adam_d = Adam::new(cfg.adam_d, d.params().total_dim());
    let mut adam_g = Adam::new(cfg.adam_g, gen.params().total_dim());

    let fixed = if cfg.spectrum_every > 0 && cfg.spectrum_batch == SpectrumBatch::Fixed {
        let real = data.next_batch()?;
        let mut rng = rng_stream(seeds.fixed_batch, 0);
        let z = gen.sample_latents(real.shape()[0], &mut rng);
        Some((real, z))
    } else {
        None
    };

    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut snaps: Vec<Snapshot> = Vec::new();
    let mut gradnorms = Vec::new();
    let mut checkpoints = Vec::new();
    let mut svc_audit: Vec<(usize, f64)> = svc_audit_init.into_iter().collect();
    let mut failure = None;
    let mut last_batch: Option<(Tensor, Tensor)> = None;
    let mut last_good = Checkpoint {
        iteration: 0,
        generator: gen.params().clone(),
        discriminator: d.params().clone(),
    };
    let mut last_good_d = d.clone();

    let snapshot = |d: &Network, gen: &Generator, it: usize, batch: &(Tensor, Tensor)| -> Result<Snapshot> {
        let (real, fake) = match &fixed {
            Some((r, z)) => (r.clone(), gen.generate(z)?),
            None => batch.clone(),
        };
        Ok(Snapshot {
            iteration: it,
            d: d.clone(),
            real,
            fake,
        })
    };

    for it in 1..=cfg.iterations {
        let mut step = || -> Result<std::result::Result<(f64, f64, (Tensor, Tensor)), String>> {
            let mut loss_d = 0.0;
            let mut batch = None;
            for _ in 0..cfg.d_steps {
                let real = data.next_batch()?;
                let z = gen.sample_latents(real.shape()[0], &mut z_rng);
                let fake = gen.generate(&z)?;
                d.spectral_step(cfg.lipschitz.power_iters)?;
                let (l, grad, sr, sf) = d_step_grad(&d, &real, &fake)?;
                if !l.is_finite() {
                    return Ok(Err(format!("discriminator loss is {l}")));
                }
                if let Err(m) = check_finite("discriminator gradient", &grad) {
                    return Ok(Err(m));
                }
                adam_d.step(d.params_mut(), &grad)?;
                d.update_running_stats(&sr);
                d.update_running_stats(&sf);
                loss_d = l;
                batch = Some((real, fake));
            }
            if cfg.lipschitz.kind == LipschitzKind::Svc
                && apply_svc(&mut d, cfg.lipschitz.cap, cfg.lipschitz.every_n, it, cfg.lipschitz.clip_bn)?
                && cfg.audit_svc
            {
                svc_audit.push((it, max_sigma(&d)?));
            }
            let batch = batch.expect("d_steps >= 1");
            let z = gen.sample_latents(batch.0.shape()[0], &mut z_rng);
            let (loss_g, grad) = g_step_grad(&gen, &d, &z, cfg.loss)?;
            if !loss_g.is_finite() {
                return Ok(Err(format!("generator loss is {loss_g}")));
            }
            if let Err(m) = check_finite("generator gradient", &grad) {
                return Ok(Err(m));
            }
            adam_g.step(gen.params_mut(), &grad)?;
            if cfg.gradnorm_every > 0 && it % cfg.gradnorm_every == 0 {
                for r in probe_real(&d, &batch.0)? {
                    gradnorms.push((it, r));
                }
                for r in probe_fake(&gen, &d, &z, cfg.loss)? {
                    gradnorms.push((it, r));
                }
            }
            Ok(Ok((loss_d, loss_g, batch)))
        };
        match step()? {
            Ok((loss_d, loss_g, batch)) => {
                losses.push(LossRecord { iteration: it, loss_d, loss_g });
                if cfg.spectrum_every > 0 && it % cfg.spectrum_every == 0 {
                    snaps.push(snapshot(&d, &gen, it, &batch)?);
                }
                last_good = Checkpoint {
                    iteration: it,
                    generator: gen.params().clone(),
                    discriminator: d.params().clone(),
                };
                last_good_d = d.clone();
                if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 && it < cfg.iterations {
                    checkpoints.push(last_good.clone());
                }
                last_batch = Some(batch);
            }
            Err(message) => {
                failure = Some(Failure {
                    iteration: it,
                    last_good: last_good.iteration,
                    message,
                });
                gen.params_mut().assign_flat(&last_good.generator.flatten())?;
                d = last_good_d.clone();
                break;
            }
        }
    }

    let end = last_good.iteration;
    if cfg.spectrum_every > 0 && snaps.last().map(|s| s.iteration) != Some(end) {
        let batch = match last_batch {
            Some(b) => b,
            None => {
                let real = data.next_batch()?;
                let z = gen.sample_latents(real.shape()[0], &mut z_rng);
                let fake = gen.generate(&z)?;
                (real, fake)
            }
        };
        snaps.push(snapshot(&d, &gen, end, &batch)?);
    }
    checkpoints.push(last_good);
    let spec_cfg = SpectrumConfig {
        seed: seeds.spectra ^ cfg.spectrum.seed,
        ..cfg.spectrum
    };
    let spectra = analyze_snapshots(&snaps, &spec_cfg, cfg.threads)?;
    Ok(RunArtifacts {
        losses,
        spectra,
        gradnorms,
        checkpoints,
        svc_audit,
        failure,
        generator: gen,
        discriminator: d,
    })
}
