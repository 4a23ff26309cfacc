//! One test per acceptance criterion. Each writes a single `PASS` or `FAIL`
//! line to stderr (bypassing output capture) before asserting.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ldvd::autodiff::{grad_flat, hvp};
use ldvd::curvature::{dense_hessian, hessian_spectrum, lanczos_extremal, SpectrumConfig, SpectrumRecord};
use ldvd::gan::pathology::{generator_gradient, perfect_discriminator_setup};
use ldvd::gan::{train, GeneratorConfig, GeneratorKind, LossKind, TrainConfig};
use ldvd::lipschitz::{apply_svc, reshape_to_matrix, singular_values, spectral_normalize, svd_clip, LipschitzKind, SpectralState};
use ldvd::metrics::{frechet_distance, inception_style_score, FeatureStats};
use ldvd::nn::ops::{factorized_conv, FactorizedKernels};
use ldvd::nn::{presets, Network};
use ldvd::tensor::Tensor;
use ldvd::verify::{compare_extremes, compose_factorized, naive_conv, rel_err, tiny_d_loss};
use ldvd::video::{SynthDataConfig, SynthDataset};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

fn report(n: u32, title: &str, passed: bool, detail: &str, t0: Instant) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "{verdict} criterion {n:>2}: {title} ({detail}; {:.1}s)",
        t0.elapsed().as_secs_f64()
    );
}

/// Largest singular value through nalgebra's SVD.
fn sigma_max(m: &Tensor) -> f64 {
    let d = DMatrix::from_row_slice(m.shape()[0], m.shape()[1], m.data());
    d.singular_values().max()
}

fn sorted_desc(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn criterion_01_parameter_count_conformance() {
    let t0 = Instant::now();
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
    let mut bad = Vec::new();
    for (name, m) in want {
        let n = presets::lookup(name).unwrap().count_params().unwrap();
        if ((n as f64 / 1e5).round() / 10.0 - m).abs() > 1e-9 {
            bad.push(format!("{name} {n} vs {m}M"));
        }
    }
    let fast = t0.elapsed().as_secs_f64() < 1.0;
    let ok = bad.is_empty() && fast;
    report(1, "parameter counts round to the published values", ok, &format!("{} presets, mismatches {bad:?}", want.len()), t0);
    assert!(ok, "{bad:?}");
}

#[test]
fn criterion_02_parameter_reduction_conformance() {
    let t0 = Instant::now();
    let count = |n: &str| presets::lookup(n).unwrap().count_params().unwrap() as f64;
    let rows = [
        ("TGAN-F", "tgan-d", "tgan-f-c0c1", 74.19),
        ("TGAN-TSM", "tgan-d", "tgan-tsm-c0c2", 74.93),
        ("MoCoGAN-F", "mocogan-d", "mocogan-f-c0c3", 69.61),
        ("MoCoGAN-TSM", "mocogan-d", "mocogan-tsm-c0c1", 79.99),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (label, base, variant, want) in rows {
        let got = 100.0 * (1.0 - count(variant) / count(base));
        worst = worst.max((got - want).abs());
        parts.push(format!("{label} {got:.2}%"));
    }
    let ok = worst <= 1.0 && t0.elapsed().as_secs_f64() < 1.0;
    report(2, "parameter reductions within 1 point", ok, &format!("{}, worst gap {worst:.2}", parts.join(", ")), t0);
    assert!(ok);
}

#[test]
fn criterion_03_factorization_oracle() {
    let t0 = Instant::now();
    let mut rng = ldvd::rng_stream(303, 0);
    let mut worst = 0.0f64;
    for case in 0..50usize {
        let ci = rng.random_range(1..4);
        let mid = rng.random_range(1..5);
        let co = rng.random_range(1..4);
        let kt = rng.random_range(1..5);
        let kh = rng.random_range(1..5);
        let kw = rng.random_range(1..5);
        let k = FactorizedKernels {
            spatial: Tensor::uniform(&[mid, ci, 1, kh, kw], -1.0, 1.0, &mut rng),
            temporal: Tensor::uniform(&[co, mid, kt, 1, 1], -1.0, 1.0, &mut rng),
        };
        let x = Tensor::uniform(&[2, 6 + case % 3, 8, 9, ci], -1.0, 1.0, &mut rng);
        let s = [rng.random_range(1..3), rng.random_range(1..3), rng.random_range(1..3)];
        let p = [kt / 2, kh / 2, kw / 2];
        let f = factorized_conv(&x, &k, s, p, 1.0).unwrap();
        let d = naive_conv(&x, &compose_factorized(&k), s, p).unwrap();
        assert_eq!(f.shape(), d.shape());
        worst = worst.max(f.max_abs_diff(&d));
    }
    let ok = worst < 1e-9;
    report(3, "factorized path equals dense 3D convolution", ok, &format!("50 kernels, max abs diff {worst:.2e}"), t0);
    assert!(ok);
}

#[test]
fn criterion_04_second_order_correctness() {
    let t0 = Instant::now();
    let (mut fd_worst, mut dense_worst, mut sym_worst) = (0.0f64, 0.0f64, 0.0f64);
    let mut max_n = 0;
    for (preset, seed) in [("tiny-3d", 4u64), ("tiny-f", 5), ("tiny-bn", 6)] {
        let (d, f) = tiny_d_loss(preset, seed).unwrap();
        let p = d.params();
        let n = p.total_dim();
        max_n = max_n.max(n);
        let x = p.flatten();
        let dense = dense_hessian(p, &f).unwrap();
        let eps = 1e-4;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = hvp(p, &e, &f).unwrap();
            let mut up = x.clone();
            up[j] += eps;
            let mut dn = x.clone();
            dn[j] -= eps;
            let gu = grad_flat(&p.unflatten(&up).unwrap(), &f).unwrap().1;
            let gd = grad_flat(&p.unflatten(&dn).unwrap(), &f).unwrap().1;
            let fd: Vec<f64> = gu.iter().zip(&gd).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            fd_worst = fd_worst.max(rel_err(&col, &fd));
            let row: Vec<f64> = (0..n).map(|i| dense[i][j]).collect();
            dense_worst = dense_worst.max(rel_err(&col, &row));
        }
        let mut rng = ldvd::rng_stream(seed, 44);
        for _ in 0..5 {
            let u = Tensor::uniform(&[n], -1.0, 1.0, &mut rng).data().to_vec();
            let v = Tensor::uniform(&[n], -1.0, 1.0, &mut rng).data().to_vec();
            let hu = hvp(p, &u, &f).unwrap();
            let hv = hvp(p, &v, &f).unwrap();
            let a: f64 = v.iter().zip(&hu).map(|(x, y)| x * y).sum();
            let b: f64 = u.iter().zip(&hv).map(|(x, y)| x * y).sum();
            sym_worst = sym_worst.max((a - b).abs() / (1.0 + a.abs()));
        }
    }
    let ok = max_n <= 200 && fd_worst < 1e-4 && dense_worst < 1e-6 && sym_worst < 1e-8;
    report(
        4,
        "HVP against FD gradients and dense Hessians",
        ok,
        &format!("up to {max_n} params, FD {fd_worst:.2e}, dense {dense_worst:.2e}, symmetry {sym_worst:.2e}"),
        t0,
    );
    assert!(ok);
}

#[test]
fn criterion_05_lanczos_oracle() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (seed, n) in [(0u64, 100usize), (1, 150), (2, 200)] {
        let mut rng = ldvd::rng_stream(seed, 55);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = (&a + a.transpose()) * 0.5;
        let want = sorted_desc(s.clone());
        let op = |v: &[f64]| -> ldvd::Result<Vec<f64>> { Ok((&s * DVector::from_column_slice(v)).as_slice().to_vec()) };
        let r = lanczos_extremal(op, n, 10, n, seed).unwrap();
        let e = compare_extremes(&r.top(10), &r.bottom(10), &want);
        worst = worst.max(e);
        parts.push(format!("n={n} {e:.1e}"));
    }
    for preset in ["tiny-3d", "tiny-f"] {
        let (d, f) = tiny_d_loss(preset, 9).unwrap();
        let h = dense_hessian(d.params(), &f).unwrap();
        let n = h.len();
        let want = sorted_desc(DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i])));
        let cfg = SpectrumConfig { k: 10, max_iters: Some(n), seed: 9 };
        let r = hessian_spectrum(d.params(), &f, &cfg).unwrap();
        let e = compare_extremes(&r.top(10), &r.bottom(10), &want);
        worst = worst.max(e);
        parts.push(format!("{preset} {e:.1e}"));
    }
    let ok = worst < 1e-8;
    report(5, "Lanczos top/bottom 10 match dense eigensolves", ok, &parts.join(", "), t0);
    assert!(ok);
}

#[test]
fn criterion_06_svc_and_sn_contracts() {
    let t0 = Instant::now();
    let mut svc_worst = 0.0f64;
    for name in ["toy-3d", "toy-f", "toy-tsm", "tiny-bn", "mocogan-video-d", "tgan-f-c0c3"] {
        let mut d = Network::build(&presets::net(name).unwrap(), 6).unwrap();
        // Inflate the weights so clipping has work to do.
        for i in d.matrix_param_indices() {
            let t = d.params().tensor(i).scale(5.0);
            *d.params_mut().tensor_mut(i) = t;
        }
        assert!(apply_svc(&mut d, 1.0, 1, 0, true).unwrap());
        for i in d.matrix_param_indices() {
            svc_worst = svc_worst.max(sigma_max(&reshape_to_matrix(d.params().tensor(i)).unwrap()));
        }
    }
    let mut rng = ldvd::rng_stream(6, 0);
    let mut idem = 0.0f64;
    for _ in 0..50 {
        let (r, c) = (rng.random_range(1..40), rng.random_range(1..40));
        let w = Tensor::uniform(&[r, c], -3.0, 3.0, &mut rng);
        let p = svd_clip(&w, 1.0).unwrap();
        idem = idem.max(svd_clip(&p, 1.0).unwrap().max_abs_diff(&p));
        let s = singular_values(&p).unwrap();
        assert!(s.iter().all(|&x| x <= 1.0 + 1e-9));
    }
    let mut sn = Vec::new();
    for (r, c) in [(8, 27), (16, 48), (1, 64), (32, 4), (64, 64)] {
        let w = Tensor::uniform(&[r, c], -1.0, 1.0, &mut rng);
        let mut st = SpectralState::new(r, 11);
        for _ in 0..100 {
            spectral_normalize(&w, &mut st, 1).unwrap();
        }
        let (wn, _) = spectral_normalize(&w, &mut st, 1).unwrap();
        sn.push(sigma_max(&wn));
    }
    let sn_ok = sn.iter().all(|s| (0.99..=1.01).contains(s));
    let ok = svc_worst <= 1.0 + 1e-6 && idem < 1e-12 && sn_ok;
    report(
        6,
        "SVC bound, clip idempotence, SN unit norm",
        ok,
        &format!("max sigma after SVC {svc_worst:.9}, idempotence {idem:.1e}, SN sigma {sn:.4?}"),
        t0,
    );
    assert!(ok);
}

fn median_top_abs(records: &[SpectrumRecord]) -> f64 {
    let mut v: Vec<f64> = records.iter().flat_map(|r| r.eigenvalues.iter().take(10).map(|x| x.abs())).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn max_abs(records: &[SpectrumRecord]) -> f64 {
    records.iter().map(|r| r.max_abs()).fold(0.0, f64::max)
}

fn toy_run(preset: &str, lip: LipschitzKind, seed: u64, iterations: usize) -> Vec<SpectrumRecord> {
    let mut cfg = TrainConfig {
        iterations,
        seed,
        spectrum_every: iterations / 4,
        threads: ldvd::worker_threads(),
        ..TrainConfig::default()
    };
    cfg.lipschitz.kind = lip;
    let spec = presets::toy(preset, None, presets::TOY_WIDTH).unwrap();
    let mut data = SynthDataset::new(SynthDataConfig { seed, ..SynthDataConfig::default() }).unwrap();
    let run = train(&cfg, GeneratorConfig::toy(GeneratorKind::Tgan), &spec, &mut data).unwrap();
    assert!(run.failure.is_none(), "{preset} {} seed {seed}", lip.as_str());
    run.spectra
}

#[test]
fn criterion_07_curvature_ordering() {
    let t0 = Instant::now();
    let iterations = 80;
    let seeds = [0u64, 1, 2];
    let mut ordered = 0;
    let mut clipped_lower = 0;
    let (mut m3, mut mf, mut a_off, mut a_on) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut lines = Vec::new();
    for &seed in &seeds {
        let full = toy_run("toy-3d", LipschitzKind::None, seed, iterations);
        let fact = toy_run("toy-f", LipschitzKind::None, seed, iterations);
        let svc = toy_run("toy-3d", LipschitzKind::Svc, seed, iterations);
        let (a, b) = (median_top_abs(&full), median_top_abs(&fact));
        let (c, d) = (max_abs(&full), max_abs(&svc));
        ordered += (a > b) as usize;
        clipped_lower += (d < c) as usize;
        lines.push(format!("seed {seed}: 3D {a:.3} F {b:.3}, max |ev| off {c:.1} on {d:.1}"));
        m3.push(a);
        mf.push(b);
        a_off.push(c);
        a_on.push(d);
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let pooled_order = med(&mut m3) > med(&mut mf);
    let pooled_svc = med(&mut a_on) < med(&mut a_off);
    for l in &lines {
        let _ = writeln!(std::io::stderr(), "    {l}");
    }
    let ok = ordered == seeds.len() && clipped_lower == seeds.len() && pooled_order && pooled_svc;
    report(
        7,
        "3D curvature above factorized, SVC lowers max |eigenvalue|",
        ok,
        &format!(
            "{} seeds x {iterations} iterations, 3D > F on {ordered}, SVC lower on {clipped_lower}",
            seeds.len()
        ),
        t0,
    );
    assert!(ok, "{lines:#?}");
}

#[test]
fn criterion_08_saturating_loss_pathology() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let s = perfect_discriminator_setup(seed, 8).unwrap();
        let sat = generator_gradient(&s, LossKind::Saturating).unwrap();
        let ns = generator_gradient(&s, LossKind::NonSaturating).unwrap();
        assert!(sat.d_real_mean > 10.0 && sat.d_fake_mean < -10.0, "seed {seed}: not a perfect D");
        worst = worst.max(sat.theta_norm / ns.theta_norm);
    }
    let ok = worst <= 0.1;
    report(8, "saturating generator gradient starves against a perfect D", ok, &format!("worst ratio over 5 seeds {worst:.2e}"), t0);
    assert!(ok);
}

fn iso(mean: f64, var: f64, n: usize) -> FeatureStats {
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        cov[i * n + i] = var;
    }
    FeatureStats::new(vec![mean; n], cov, 10).unwrap()
}

#[test]
fn criterion_09_metric_identities() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for p in [vec![0.2, 0.5, 0.3], vec![1.0, 0.0], vec![0.25; 4]] {
        worst = worst.max((inception_style_score(&vec![p; 9]).unwrap() - 1.0).abs());
    }
    for c in [2usize, 3, 7] {
        let rows: Vec<Vec<f64>> = (0..3 * c).map(|i| (0..c).map(|k| if i % c == k { 1.0 } else { 0.0 }).collect()).collect();
        worst = worst.max((inception_style_score(&rows).unwrap() - c as f64).abs());
    }
    for n in [1usize, 5, 32] {
        for d in [0.3, 1.0, 2.5] {
            let got = frechet_distance(&iso(0.0, 0.4, n), &iso(d, 0.4, n)).unwrap();
            worst = worst.max((got - d * d * n as f64).abs());
        }
        for (a, b) in [(0.5f64, 2.0f64), (1.0, 9.0)] {
            let got = frechet_distance(&iso(0.1, a, n), &iso(0.1, b, n)).unwrap();
            worst = worst.max((got - n as f64 * (a.sqrt() - b.sqrt()).powi(2)).abs());
        }
    }
    let ok = worst < 1e-8 && t0.elapsed().as_secs_f64() < 1.0;
    report(9, "IS and Frechet distance identities", ok, &format!("max deviation {worst:.1e}"), t0);
    assert!(ok);
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|x| x.to_str()), Some("csv" | "svg")) {
                out.push((p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_10_determinism_gate() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ldvd::cli::cmd_run("smoke", &a, Some(5)).unwrap();
    ldvd::cli::cmd_run("smoke", &b, Some(5)).unwrap();
    let (x, y) = (artifacts(&a), artifacts(&b));
    let differing: Vec<&str> = x
        .iter()
        .zip(&y)
        .filter(|(p, q)| p != q)
        .map(|(p, _)| p.0.as_str())
        .collect();
    let ok = !x.is_empty() && x.len() == y.len() && differing.is_empty();
    report(10, "repeated runs write identical CSV and SVG bytes", ok, &format!("{} files compared, differing {differing:?}", x.len()), t0);
    assert!(ok);
}
