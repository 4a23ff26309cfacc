use ldvd::gan::{train, Generator, GeneratorConfig, GeneratorKind, RunSeeds, TrainConfig};
use ldvd::metrics::*;
use ldvd::nn::presets;
use ldvd::video::{SynthDataConfig, SynthDataset};
use proptest::prelude::*;

/// exp of the mean KL divergence, by explicit double loops.
fn naive_is(p: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let c = p[0].len();
    let mut marg = vec![0.0; c];
    for row in p {
        for k in 0..c {
            marg[k] += row[k] / n as f64;
        }
    }
    let mut kl = 0.0;
    for row in p {
        for k in 0..c {
            if row[k] > 0.0 {
                kl += row[k] * (row[k].ln() - marg[k].ln());
            }
        }
    }
    (kl / n as f64).exp()
}

fn iso(mean: f64, var: f64, n: usize) -> FeatureStats {
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        cov[i * n + i] = var;
    }
    FeatureStats::new(vec![mean; n], cov, 10).unwrap()
}

fn random_stats(seed: u64, n: usize) -> FeatureStats {
    let mut rng = ldvd::rng_stream(seed, 0);
    let rows: Vec<Vec<f64>> = (0..3 * n)
        .map(|_| (0..n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
        .collect();
    FeatureStats::from_rows(&rows).unwrap()
}

#[test]
fn score_identities() {
    let fixed = vec![vec![0.2, 0.5, 0.3]; 7];
    assert!((inception_style_score(&fixed).unwrap() - 1.0).abs() < 1e-12);
    for c in [2, 3, 5] {
        let rows: Vec<Vec<f64>> = (0..4 * c).map(|i| (0..c).map(|k| (i % c == k) as u8 as f64).collect()).collect();
        assert!((inception_style_score(&rows).unwrap() - c as f64).abs() < 1e-12);
    }
    assert!(inception_style_score(&[vec![0.5, 0.6]]).is_err());
    assert!(inception_style_score(&[]).is_err());
}

#[test]
fn frechet_closed_forms() {
    for n in [1, 4, 16] {
        for d in [0.5, 2.0] {
            let got = frechet_distance(&iso(0.0, 0.3, n), &iso(d, 0.3, n)).unwrap();
            assert!((got - d * d * n as f64).abs() < 1e-8, "n {n} d {d}: {got}");
        }
        let (a, b) = (0.7f64, 3.1f64);
        let got = frechet_distance(&iso(1.0, a, n), &iso(1.0, b, n)).unwrap();
        assert!((got - n as f64 * (a.sqrt() - b.sqrt()).powi(2)).abs() < 1e-8);
    }
    let s = random_stats(3, 6);
    assert!(frechet_distance(&s, &s).unwrap().abs() < 1e-8);
    assert!(frechet_distance(&iso(0.0, 1.0, 3), &iso(0.0, 1.0, 4)).is_err());
}

#[test]
fn extractor_contract() {
    let ext = Surrogate::bundled().unwrap();
    let mut data = SynthDataset::new(SynthDataConfig { seed: 31, ..SynthDataConfig::default() }).unwrap();
    let (x, _) = data.next_labeled().unwrap();
    let a = ext.extract(&x).unwrap();
    let b = ext.extract(&x).unwrap();
    assert_eq!(a, b);
    for p in &a.probs {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(ext.holdout_accuracy(300, 4242).unwrap() > 0.9);
    let mut bytes = ext.to_bytes();
    assert!(Surrogate::from_bytes(&bytes, BUNDLED_SHA256).is_ok());
    bytes[100] ^= 1;
    assert!(matches!(Surrogate::from_bytes(&bytes, BUNDLED_SHA256), Err(ldvd::Error::Checksum { .. })));
}

#[test]
fn trained_generator_is_closer_to_real_data_than_untrained() {
    let ext = Surrogate::bundled().unwrap();
    let mut real_src = SynthDataset::new(SynthDataConfig { seed: 999, batch: 50, ..SynthDataConfig::default() }).unwrap();
    let real = real_feature_stats(&ext, &mut real_src, 500).unwrap();
    let ev = EvalConfig { samples: 200, repeats: 1, batch: 50, seed: 5 };
    let g_cfg = GeneratorConfig::toy(GeneratorKind::Tgan);
    let results: Vec<(u64, f64, f64)> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..3u64)
            .map(|seed| {
                let (ext, real) = (&ext, &real);
                s.spawn(move || {
                    let cfg = TrainConfig { iterations: 400, seed, spectrum_every: 0, threads: 1, ..TrainConfig::default() };
                    let spec = presets::toy("toy-3d", None, presets::TOY_WIDTH).unwrap();
                    let mut data = SynthDataset::new(SynthDataConfig { seed, ..SynthDataConfig::default() }).unwrap();
                    let run = train(&cfg, g_cfg, &spec, &mut data).unwrap();
                    let untrained = Generator::build(g_cfg, RunSeeds::from_seed(seed).generator_init).unwrap();
                    let before = evaluate_generator(&untrained, ext, real, &ev).unwrap().fd.value;
                    let after = evaluate_generator(&run.generator, ext, real, &ev).unwrap().fd.value;
                    (seed, before, after)
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (seed, before, after) in results {
        assert!(after < before, "seed {seed}: FD untrained {before:.2}, trained {after:.2}");
    }
}

#[test]
fn metrics_csv_columns() {
    let m = MetricValue::from_samples(&[1.0, 3.0]);
    let s = EvalSummary { is: m, fd: m, samples: 10, repeats: 2 };
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &[("r".into(), s)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run_id,metric,value,stddev,n_samples,n_repeats"));
    assert!(lines.next().unwrap().starts_with("r,is,2.0000000000000000e0,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_matches_double_loop_and_ignores_row_order(
        raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..30),
        rot in 0usize..30,
    ) {
        let rows: Vec<Vec<f64>> = raw.iter().map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|x| x / s).collect() }).collect();
        let a = inception_style_score(&rows).unwrap();
        prop_assert!((a - naive_is(&rows)).abs() < 1e-10);
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rot % rows.len());
        shuffled.reverse();
        prop_assert!((a - inception_style_score(&shuffled).unwrap()).abs() < 1e-12);
        prop_assert!((1.0 - 1e-12..=4.0 + 1e-12).contains(&a));
    }

    #[test]
    fn frechet_is_symmetric_and_nonnegative(s1 in 0u64..1000, s2 in 0u64..1000, n in 1usize..8) {
        let (a, b) = (random_stats(s1, n), random_stats(s2 + 5000, n));
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn accumulator_merge_matches_single_pass(seed in 0u64..1000, split in 1usize..40) {
        let mut rng = ldvd::rng_stream(seed, 0);
        let rows: Vec<Vec<f64>> = (0..41).map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect()).collect();
        let mut one = FeatureAccumulator::new(3);
        rows.iter().for_each(|r| one.push(r).unwrap());
        let (mut a, mut b) = (FeatureAccumulator::new(3), FeatureAccumulator::new(3));
        rows[..split].iter().for_each(|r| a.push(r).unwrap());
        rows[split..].iter().for_each(|r| b.push(r).unwrap());
        a.merge(&b).unwrap();
        let (x, y) = (one.finish().unwrap(), a.finish().unwrap());
        for (p, q) in x.mean.iter().zip(&y.mean).chain(x.cov.iter().zip(&y.cov)) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
