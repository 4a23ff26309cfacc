use std::sync::{Arc, Mutex};

use ldvd::checkpoint::{decode_params, encode_params};
use ldvd::gan::pathology::{generator_gradient, perfect_discriminator_setup};
use ldvd::gan::{gan_value, train, GeneratorConfig, GeneratorKind, LossKind, TrainConfig};
use ldvd::nn::{presets, Shape};
use ldvd::tensor::Tensor;
use ldvd::video::{BatchSource, SynthDataConfig, SynthDataset};
use proptest::prelude::*;

/// Passes batches through and keeps a copy of each.
struct Recording {
    inner: SynthDataset,
    seen: Arc<Mutex<Vec<Vec<f64>>>>,
}

impl BatchSource for Recording {
    fn next_batch(&mut self) -> ldvd::Result<Tensor> {
        let b = self.inner.next_batch()?;
        self.seen.lock().unwrap().push(b.data().to_vec());
        Ok(b)
    }

    fn sample_shape(&self) -> Shape {
        self.inner.sample_shape()
    }
}

fn cfg(iterations: usize, seed: u64, spectrum_every: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        seed,
        spectrum_every,
        threads: 2,
        ..TrainConfig::default()
    }
}

fn run(preset: &str, c: &TrainConfig) -> (ldvd::gan::RunArtifacts, Vec<Vec<f64>>) {
    let spec = presets::toy(preset, None, presets::TOY_WIDTH).unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let mut data = Recording {
        inner: SynthDataset::new(SynthDataConfig { seed: c.seed, ..SynthDataConfig::default() }).unwrap(),
        seen: seen.clone(),
    };
    let r = train(c, GeneratorConfig::toy(GeneratorKind::Tgan), &spec, &mut data).unwrap();
    let batches = seen.lock().unwrap().clone();
    (r, batches)
}

#[test]
fn spectrum_sampling_leaves_the_trajectory_unchanged() {
    let (a, _) = run("toy-f", &cfg(8, 2, 0));
    let (b, _) = run("toy-f", &cfg(8, 2, 3));
    assert!(!b.spectra.is_empty());
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.generator.params().flatten(), b.generator.params().flatten());
    assert_eq!(a.discriminator.params().flatten(), b.discriminator.params().flatten());
}

#[test]
fn swapping_the_discriminator_keeps_generator_and_data_matched() {
    let c = cfg(5, 7, 0);
    let (a, da) = run("toy-3d", &c);
    let (b, db) = run("toy-f", &c);
    let (t, dt) = run("toy-tsm", &c);
    assert_eq!(da, db);
    assert_eq!(da, dt);
    let init = |p: &str| {
        let mut c0 = cfg(0, 7, 0);
        c0.iterations = 0;
        run(p, &c0).0.generator.params().flatten()
    };
    assert_eq!(init("toy-3d"), init("toy-f"));
    assert_ne!(a.losses, b.losses);
    assert_ne!(a.losses, t.losses);
}

#[test]
fn runs_are_pure_functions_of_config_and_seed() {
    let (a, _) = run("toy-3d", &cfg(6, 11, 3));
    let (b, _) = run("toy-3d", &cfg(6, 11, 3));
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.spectra, b.spectra);
    let (c, _) = run("toy-3d", &cfg(6, 12, 3));
    assert_ne!(a.losses, c.losses);
}

#[test]
fn divergence_is_reported_with_last_good_iteration() {
    let mut c = cfg(6, 0, 0);
    c.adam_d.lr = 1e300;
    c.checkpoint_every = 1;
    let (r, _) = run("toy-3d", &c);
    let f = r.failure.expect("expected a failure");
    assert!(f.last_good < f.iteration, "{f:?}");
    assert!(r.losses.iter().all(|l| l.loss_d.is_finite() && l.loss_g.is_finite()));
}

#[test]
fn saturating_loss_starves_the_generator() {
    for seed in 0..5 {
        let s = perfect_discriminator_setup(seed, 8).unwrap();
        let sat = generator_gradient(&s, LossKind::Saturating).unwrap();
        let ns = generator_gradient(&s, LossKind::NonSaturating).unwrap();
        assert!(sat.theta_norm <= 0.1 * ns.theta_norm, "seed {seed}: {sat:?} vs {ns:?}");
        assert!(sat.d_real_mean > 10.0 && sat.d_fake_mean < -10.0);
    }
}

#[test]
fn checkpoints_round_trip_exactly() {
    let mut c = cfg(4, 1, 0);
    c.checkpoint_every = 2;
    let (r, _) = run("toy-f", &c);
    assert_eq!(r.checkpoints.iter().map(|k| k.iteration).collect::<Vec<_>>(), vec![2, 4]);
    for k in &r.checkpoints {
        let back = decode_params(&encode_params(&k.discriminator)).unwrap();
        assert_eq!(back.flatten(), k.discriminator.flatten());
        assert_eq!(back.entries().iter().map(|e| &e.0).collect::<Vec<_>>(), k.discriminator.entries().iter().map(|e| &e.0).collect::<Vec<_>>());
    }
}

proptest! {
    #[test]
    fn gan_value_is_finite_for_huge_logits(
        r in prop::collection::vec(-1e6f64..1e6, 1..6),
        f in prop::collection::vec(-1e6f64..1e6, 1..6),
    ) {
        for kind in [LossKind::Saturating, LossKind::NonSaturating] {
            let (d, g) = gan_value(&r, &f, kind).unwrap();
            prop_assert!(d.is_finite() && g.is_finite());
            prop_assert!(d >= 0.0);
        }
    }
}
