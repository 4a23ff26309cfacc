use ldvd::gan::{train, GeneratorConfig, GeneratorKind, TrainConfig};
use ldvd::lipschitz::*;
use ldvd::nn::{presets, Network};
use ldvd::tensor::Tensor;
use ldvd::video::{SynthDataConfig, SynthDataset};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn frob(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Independent SVD audit through nalgebra.
fn sigma_max(m: &Tensor) -> f64 {
    let (r, c) = (m.shape()[0], m.shape()[1]);
    let d = DMatrix::from_row_slice(r, c, m.data());
    d.singular_values().max()
}

#[test]
fn scaled_identity_is_clipped_to_identity() {
    let w = Tensor::new(vec![2, 2], vec![3.0, 0.0, 0.0, 3.0]).unwrap();
    let c = svd_clip(&w, 1.0).unwrap();
    assert!(c.max_abs_diff(&Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()) < 1e-12);
}

#[test]
fn apply_svc_bounds_every_layer_and_respects_cadence() {
    for name in ["toy-3d", "toy-f", "toy-tsm", "tiny-bn"] {
        let mut d = Network::build(&presets::net(name).unwrap(), 1).unwrap();
        let before = d.params().clone();
        assert!(!apply_svc(&mut d, 1.0, 5, 3, true).unwrap());
        assert_eq!(d.params().flatten(), before.flatten());
        assert!(apply_svc(&mut d, 1.0, 5, 10, true).unwrap());
        for i in d.matrix_param_indices() {
            let s = sigma_max(&reshape_to_matrix(d.params().tensor(i)).unwrap());
            assert!(s <= 1.0 + 1e-6, "{name} {}: {s}", d.params().name(i));
        }
        for i in d.bn_scale_indices() {
            assert!(d.params().tensor(i).data().iter().all(|g| g.abs() <= 1.0));
        }
    }
}

#[test]
fn spectral_normalization_converges_to_unit_norm() {
    let mut rng = ldvd::rng_stream(2, 0);
    for (r, c) in [(8, 27), (16, 48), (1, 64), (32, 4)] {
        let w = Tensor::uniform(&[r, c], -1.0, 1.0, &mut rng);
        let mut st = SpectralState::new(r, 7);
        st.step(&w, 50).unwrap();
        for _ in 0..20 {
            let (wn, _) = spectral_normalize(&w, &mut st, 1).unwrap();
            let s = sigma_max(&wn);
            assert!(s > 0.0);
        }
        let (wn, _) = spectral_normalize(&w, &mut st, 1).unwrap();
        let s = sigma_max(&wn);
        assert!((0.99..=1.01).contains(&s), "{r}x{c}: {s}");
    }
}

#[test]
fn svc_training_keeps_sigma_bounded_at_every_clip() {
    let mut cfg = TrainConfig {
        iterations: 12,
        seed: 3,
        spectrum_every: 0,
        audit_svc: true,
        ..TrainConfig::default()
    };
    cfg.lipschitz.kind = LipschitzKind::Svc;
    cfg.lipschitz.every_n = 3;
    let spec = presets::toy("toy-3d", None, presets::TOY_WIDTH).unwrap();
    let mut data = SynthDataset::new(SynthDataConfig { seed: 3, ..SynthDataConfig::default() }).unwrap();
    let run = train(&cfg, GeneratorConfig::toy(GeneratorKind::Tgan), &spec, &mut data).unwrap();
    let its: Vec<usize> = run.svc_audit.iter().map(|a| a.0).collect();
    assert_eq!(its, vec![0, 3, 6, 9, 12]);
    for (it, s) in &run.svc_audit {
        assert!(*s <= 1.0 + 1e-6, "iteration {it}: {s}");
    }
}

#[test]
fn spectral_norm_training_lowers_generator_loss() {
    let mut cfg = TrainConfig {
        iterations: 80,
        seed: 1,
        spectrum_every: 0,
        ..TrainConfig::default()
    };
    cfg.lipschitz.kind = LipschitzKind::Sn;
    let spec = presets::toy("toy-3d", None, presets::TOY_WIDTH).unwrap();
    let mut data = SynthDataset::new(SynthDataConfig { seed: 1, ..SynthDataConfig::default() }).unwrap();
    let run = train(&cfg, GeneratorConfig::toy(GeneratorKind::Tgan), &spec, &mut data).unwrap();
    assert!(run.failure.is_none());
    let first = run.losses[0].loss_g;
    let tail: f64 = run.losses[run.losses.len() - 10..].iter().map(|l| l.loss_g).sum::<f64>() / 10.0;
    assert!(tail < first, "loss_G {first} -> {tail}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn svd_clip_is_an_idempotent_projection(seed in 0u64..10_000, r in 1usize..9, c in 1usize..9, scale in 0.1f64..4.0) {
        let mut rng = ldvd::rng_stream(seed, 0);
        let w = Tensor::uniform(&[r, c], -scale, scale, &mut rng);
        let p = svd_clip(&w, 1.0).unwrap();
        prop_assert!(svd_clip(&p, 1.0).unwrap().max_abs_diff(&p) < 1e-12);
        let before = singular_values(&w).unwrap();
        let after = singular_values(&p).unwrap();
        for (a, b) in after.iter().zip(&before) {
            prop_assert!(*a <= b + 1e-12);
            prop_assert!(*a <= 1.0 + 1e-12);
        }
        // Any feasible M is no closer to W than the clip.
        let d = frob(&w, &p);
        for _ in 0..8 {
            let m = Tensor::uniform(&[r, c], -1.0, 1.0, &mut rng);
            let m = svd_clip(&m, 1.0).unwrap();
            prop_assert!(d <= frob(&w, &m) + 1e-12);
        }
    }
}
