use ldvd::autodiff::ParamSet;
use ldvd::nn::ops::temporal_shift;
use ldvd::nn::presets::{self, Discriminator};
use ldvd::nn::{BnMode, NetSpec, Network};
use ldvd::tensor::Tensor;
use proptest::prelude::*;

#[test]
fn eight_headline_presets_match_published_counts() {
    let want = [
        ("mocogan-image-d", 0.7),
        ("mocogan-video-d", 2.7),
        ("mocogan-d", 3.3),
        ("tgan-d", 11.0),
        ("tgan-f-c0", 2.8),
        ("tgan-f-c0c1", 2.8),
        ("tgan-f-c0c2", 3.1),
        ("tgan-f-c0c3", 4.2),
        ("mocogan-f-c0", 0.7),
        ("mocogan-f-c0c1", 0.7),
        ("mocogan-f-c0c2", 1.0),
        ("mocogan-f-c0c3", 1.0),
    ];
    for (name, m) in want {
        let n = presets::lookup(name).unwrap().count_params().unwrap();
        assert_eq!(presets::round_millions(n), m, "{name}: {n}");
    }
}

#[test]
fn reductions_within_one_point() {
    for r in presets::reduction_table().unwrap() {
        assert!((r.computed_percent - r.published_percent).abs() <= 1.0, "{r:?}");
    }
    let tgan = presets::net("tgan-d").unwrap();
    assert_eq!(ldvd::metrics::param_reduction_report(&tgan, &tgan).unwrap(), 0.0);
    let f = presets::net("tgan-f").unwrap();
    let r = ldvd::metrics::param_reduction_report(&tgan, &f).unwrap();
    assert!((r - 74.19).abs() < 1.0, "{r}");
}

#[test]
fn pair_preset_sums_its_members() {
    let Discriminator::Pair { image, video } = presets::lookup("mocogan-d").unwrap() else {
        panic!("expected a pair");
    };
    let total = presets::lookup("mocogan-d").unwrap().count_params().unwrap();
    assert_eq!(total, image.count_params().unwrap() + video.count_params().unwrap());
}

#[test]
fn unknown_preset_lists_known_ones() {
    let e = presets::lookup("tgan-x").unwrap_err().to_string();
    assert!(e.contains("tgan-d") && e.contains("mocogan-f-c0c3"), "{e}");
}

#[test]
fn built_networks_match_spec_counts_for_any_seed() {
    for name in ["toy-3d", "toy-f", "toy-tsm", "toy-2d", "tiny-3d", "tiny-f", "tiny-bn"] {
        let spec = presets::net(name).unwrap();
        let want = spec.count_params().unwrap();
        for seed in [0, 1, 99] {
            let n = Network::build(&spec, seed).unwrap();
            assert_eq!(n.params().total_dim(), want, "{name} seed {seed}");
        }
    }
}

#[test]
fn spec_text_round_trips() {
    for name in ["tgan-d", "tgan-f-c0c2", "tgan-tsm-c0c1", "mocogan-video-d", "mocogan-tsm-c0", "toy-f"] {
        let spec = presets::net(name).unwrap();
        let back = NetSpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(back, spec, "{name}");
        assert_eq!(back.to_text(), spec.to_text());
    }
}

#[test]
fn forward_is_deterministic() {
    let spec = presets::net("toy-tsm").unwrap();
    let d = Network::build(&spec, 3).unwrap();
    let x = Tensor::uniform(&spec.input.batched(2), -1.0, 1.0, &mut ldvd::rng_stream(3, 0));
    let a = d.forward_value(&x, BnMode::Frozen).unwrap();
    let b = d.forward_value(&x, BnMode::Frozen).unwrap();
    assert_eq!(a.data(), b.data());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn temporal_shift_keeps_shape_and_unshifted_channels(
        seed in 0u64..1000, t in 1usize..6, c in 1usize..9, den in 2usize..9,
    ) {
        let x = Tensor::uniform(&[2, t, 2, 3, c], -1.0, 1.0, &mut ldvd::rng_stream(seed, 0));
        let y = temporal_shift(&x, 1, den, 1).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        let fold = c / den;
        let moved = if 2 * fold > c { 0 } else { 2 * fold };
        let sum_rest = |v: &Tensor| -> f64 { v.data().chunks(c).map(|p| p[moved..].iter().sum::<f64>()).sum() };
        prop_assert_eq!(sum_rest(&y), sum_rest(&x));
    }

    #[test]
    fn flatten_unflatten_is_bit_exact(seed in 0u64..1000, dims in prop::collection::vec(1usize..5, 1..4)) {
        let mut rng = ldvd::rng_stream(seed, 0);
        let mut p = ParamSet::new();
        for (i, d) in dims.iter().enumerate() {
            p.push(format!("t{i}"), Tensor::uniform(&[*d, i + 1], -1e3, 1e3, &mut rng)).unwrap();
        }
        let flat = p.flatten();
        let q = p.unflatten(&flat).unwrap();
        prop_assert_eq!(q.flatten(), flat);
        for (a, b) in p.entries().iter().zip(q.entries()) {
            prop_assert_eq!(a.1.data(), b.1.data());
        }
    }
}
