use std::fs;
use std::path::Path;
use std::process::Command;

use ldvd::cli::{cmd_params, cmd_plot, cmd_run, cmd_verify, resolve_config, CliError, Figure};
use ldvd::config::ExperimentConfig;
use ldvd::gan::LossKind;
use ldvd::lipschitz::LipschitzKind;
use proptest::prelude::*;

fn ldvd(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ldvd"))
        .args(args)
        .env("LDVD_THREADS", "2")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// Every regular file under `dir`, relative path and bytes.
fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, d: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

const TINY: &str = "[discriminator]\npresets = toy-3d\n\n[train]\niterations = 4\n\n[analysis]\nspectrum_every = 2\nk = 3\ngradnorm_every = 2\n";

#[test]
fn bundled_configs_parse_and_are_canonical_fixed_points() {
    for name in ldvd::cli::bundled_names() {
        let (c, _) = resolve_config(name).unwrap();
        let text = c.canonical();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(back, c, "{name}");
        assert_eq!(back.canonical(), text, "{name}");
    }
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    let presets = prop::sample::subsequence(vec!["toy-3d", "toy-f", "toy-tsm", "tiny-3d"], 1..=4);
    let kinds = prop::sample::subsequence(vec![LipschitzKind::None, LipschitzKind::Svc, LipschitzKind::Sn], 1..=3);
    (
        presets,
        kinds,
        0usize..500,
        1e-6f64..1e-1,
        any::<bool>(),
        1usize..20,
        any::<u64>(),
        0.5f64..4.0,
    )
        .prop_map(|(p, kinds, iters, lr, sat, k, seed, cap)| {
            let mut c = ExperimentConfig::default();
            c.discriminator.presets = p.into_iter().map(String::from).collect();
            c.lipschitz.kinds = kinds;
            c.lipschitz.cap = cap;
            c.train.iterations = iters;
            c.train.lr_d = lr;
            c.train.lr_g = lr / 3.0;
            c.train.seed = seed;
            c.train.loss = if sat { LossKind::Saturating } else { LossKind::NonSaturating };
            c.analysis.k = k;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn canonical_dump_is_a_fixed_point(c in arb_config()) {
        let text = c.canonical();
        let back = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.canonical(), text);
    }
}

#[test]
fn misspelled_section_is_a_usage_error_naming_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.ini", "[train]\niterations = 3\n\n[lipschtz]\nkind = svc\n");
    let out = dir.path().join("out");
    let (code, _, err) = ldvd(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("lipschtz.kind"), "{err}");
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn unknown_key_and_bad_value_are_usage_errors() {
    for text in ["[train]\niteratons = 3\n", "[train]\nloss = hinge\n", "[analysis]\nk = 0\n"] {
        match ExperimentConfig::parse(text) {
            Err(ldvd::Error::Config { line, .. }) => assert_eq!(line, 2, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn curvature_config_writes_spectra_for_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let s = cmd_run("tgan-vs-tganf-curvature", dir.path(), None).unwrap();
    let names: Vec<&str> = s.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["toy-3d", "toy-f"]);
    for v in &s.variants {
        assert_eq!(v.iterations, 60);
        let rows = ldvd::report::read_spectra(&v.dir.join("spectra.csv")).unwrap();
        let its: Vec<usize> = rows.iter().map(|r| r.iteration).collect();
        assert_eq!(its, [10, 20, 30, 40, 50, 60], "{}", v.name);
        assert!(rows.iter().all(|r| r.eigenvalues.len() == 10));
        for f in ["spectra.svg", "gradnorms.svg", "losses.svg"] {
            assert!(v.dir.join(f).is_file());
        }
    }
}

#[test]
fn seed_override_reproduces_a_run_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.ini", &TINY.replace("iterations = 4\n", "iterations = 4\nseed = 11\n"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    cmd_run(&cfg, &a, None).unwrap();
    let plain = write(dir.path(), "b.ini", TINY);
    cmd_run(&plain, &b, Some(11)).unwrap();
    cmd_run(&plain, &c, Some(12)).unwrap();
    let ta = tree(&a.join("toy-3d"));
    assert_eq!(ta, tree(&b.join("toy-3d")));
    assert_ne!(ta, tree(&c.join("toy-3d")));
    let seeded = ExperimentConfig::load(a.join("config.ini")).unwrap();
    assert_eq!(seeded.train.seed, 11);
}

#[test]
fn zero_iteration_run_plots_single_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "z.ini", "[discriminator]\npresets = toy-f\n\n[train]\niterations = 0\n\n[analysis]\nk = 2\n");
    let s = cmd_run(&cfg, &dir.path().join("run"), None).unwrap();
    assert_eq!(s.variants[0].iterations, 0);
    let paths = cmd_plot(&dir.path().join("run"), None).unwrap();
    assert_eq!(paths.len(), 3);
    let spectra = fs::read_to_string(dir.path().join("run/toy-f/spectra.svg")).unwrap();
    assert_eq!(spectra.matches("class=\"eig-point\"").count(), 2, "{spectra}");
}

#[test]
fn plot_without_csv_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.ini", TINY);
    let run = dir.path().join("run");
    cmd_run(&cfg, &run, None).unwrap();
    fs::remove_file(run.join("toy-3d/gradnorms.csv")).unwrap();
    assert!(cmd_plot(&run, Some(Figure::Losses)).is_ok());
    let e = cmd_plot(&run, Some(Figure::Gradnorms)).unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
    let (code, _, err) = ldvd(&["plot", run.to_str().unwrap(), "--figure", "gradnorms"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = ldvd(&["plot", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _, _) = ldvd(&["plot", run.to_str().unwrap(), "--figure", "histogram"]);
    assert_eq!(code, 2);
}

#[test]
fn params_reports_published_totals() {
    for (name, total) in [("tgan-d", "11.0M"), ("tgan-f-c0c3", "4.2M"), ("mocogan-video-d", "2.7M")] {
        let t = cmd_params(name, None).unwrap();
        assert!(t.contains(&format!("({total})")), "{name}:\n{t}");
    }
    let t = cmd_params("tgan-f-c0c3", None).unwrap();
    assert!(t.contains("reduction vs tgan-d"), "{t}");
    let (code, out, _) = ldvd(&["params", "tgan-d"]);
    assert_eq!(code, 0);
    assert!(out.contains("(11.0M)"));
}

#[test]
fn params_accepts_a_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ldvd::nn::presets::lookup("tgan-f-c0c3").unwrap();
    let ldvd::nn::presets::Discriminator::Single(s) = spec else { panic!() };
    let path = write(dir.path(), "f.spec", &s.to_text());
    let t = cmd_params(&path, Some("tgan-d")).unwrap();
    assert!(t.contains("(4.2M)"), "{t}");
}

#[test]
fn unknown_preset_exits_2_and_lists_presets() {
    let e = cmd_params("tgan-x", None).unwrap_err();
    assert!(matches!(e, CliError::Usage(_)));
    let (code, _, err) = ldvd(&["params", "tgan-x"]);
    assert_eq!(code, 2);
    assert!(err.contains("tgan-d") && err.contains("toy-3d"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.ini", "[discriminator]\npresets = tgan-x\n");
    let (code, _, err) = ldvd(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = ldvd(&["run", "--config", "no-such-config", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn divergent_learning_rate_exits_3_with_last_good_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "d.ini",
        "[discriminator]\npresets = toy-3d\n\n[train]\niterations = 6\nlr_d = 1e300\n\n[analysis]\nspectrum_every = 0\n",
    );
    let out = dir.path().join("out");
    let (code, _, err) = ldvd(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("last good iteration"), "{err}");
    let failure = fs::read_to_string(out.join("toy-3d/failure.txt")).unwrap();
    assert!(failure.contains("last_good = "), "{failure}");
}

#[test]
fn verify_passes() {
    let (report, res) = cmd_verify(0);
    assert!(res.is_ok(), "{report}");
    assert!(!report.contains("FAIL"), "{report}");
}
