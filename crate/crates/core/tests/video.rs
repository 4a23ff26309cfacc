use ldvd::tensor::Tensor;
use ldvd::video::*;
use proptest::prelude::*;

/// Triangle wave written independently of the library: distance travelled
/// modulo the round trip, folded back.
fn bounce_coord(p0: f64, v: f64, t: f64, span: f64) -> f64 {
    let period = 2.0 * span;
    let mut m = (p0 + v * t) % period;
    if m < 0.0 {
        m += period;
    }
    if m > span {
        period - m
    } else {
        m
    }
}

fn centre_of_mass(frame: &Tensor, t: usize, n: usize) -> (f64, f64) {
    let (mut sx, mut sy, mut k) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if frame.get(&[t, i, j, 0]) > 0.0 {
                sx += j as f64 + 0.5;
                sy += i as f64 + 0.5;
                k += 1.0;
            }
        }
    }
    (sx / k, sy / k)
}

#[test]
fn bounce_centre_of_mass_follows_closed_form() {
    for seed in 0..20 {
        let cfg = SynthSceneConfig::new(32, Motion::Bounce, seed);
        let s = scene_states(&cfg).unwrap()[0];
        let video = synth_video(&cfg, 40).unwrap();
        let span = 32.0 - cfg.shape_size;
        for t in 0..40 {
            let x = bounce_coord(s.x0, s.vx, t as f64, span) + cfg.shape_size / 2.0;
            let y = bounce_coord(s.y0, s.vy, t as f64, span) + cfg.shape_size / 2.0;
            let (cx, cy) = centre_of_mass(&video, t, 32);
            assert!((cx - x).abs() <= 1.0 && (cy - y).abs() <= 1.0, "seed {seed} t {t}: ({cx},{cy}) vs ({x},{y})");
        }
    }
}

#[test]
fn zero_velocity_gives_identical_frames() {
    let mut cfg = SynthSceneConfig::new(16, Motion::Drift, 2);
    cfg.speed = (0.0, 0.0);
    let v = synth_video(&cfg, 5).unwrap();
    let frame = 16 * 16;
    for t in 1..5 {
        assert_eq!(v.data()[..frame], v.data()[t * frame..(t + 1) * frame]);
    }
}

#[test]
fn different_seeds_start_in_different_places() {
    let mut same = 0;
    for seed in 0..200u64 {
        let a = scene_states(&SynthSceneConfig::new(32, Motion::Bounce, seed)).unwrap()[0];
        let b = scene_states(&SynthSceneConfig::new(32, Motion::Bounce, seed + 1000)).unwrap()[0];
        same += (a.x0 == b.x0 && a.y0 == b.y0) as usize;
    }
    assert_eq!(same, 0);
}

#[test]
fn full_size_center_crop_of_320_by_240() {
    let mut rng = ldvd::rng_stream(0, 0);
    assert_eq!(crop_window(240, 320, Crop::Center, &mut rng), (0, 40, 240));
}

#[test]
fn forty_frames_subsampled_by_two() {
    assert_eq!(clip_starts(40, 2, 16), 5);
    let last = clip_indices(2, 16, 4);
    assert_eq!(*last.last().unwrap(), 38);
    let cfg = PreprocessConfig::new(2, 16, Crop::Center, 8);
    let v = Tensor::zeros(&[40, 12, 16, 1]);
    for seed in 0..50 {
        preprocess(&v, &cfg, &mut ldvd::rng_stream(seed, 0)).unwrap();
    }
    let short = Tensor::zeros(&[30, 12, 16, 1]);
    let e = preprocess(&short, &cfg, &mut ldvd::rng_stream(0, 0)).unwrap_err().to_string();
    assert!(e.contains("31"), "{e}");
}

#[test]
fn preprocess_identity_case() {
    let x = Tensor::uniform(&[6, 8, 8, 2], -1.0, 1.0, &mut ldvd::rng_stream(1, 0));
    let cfg = PreprocessConfig::new(1, 6, Crop::None, 8);
    let y = preprocess(&x, &cfg, &mut ldvd::rng_stream(1, 1)).unwrap();
    assert!(y.max_abs_diff(&x) < 1e-12);
}

#[test]
fn corrupted_or_empty_containers_are_rejected() {
    let v = Tensor::uniform(&[2, 3, 3, 1], -1.0, 1.0, &mut ldvd::rng_stream(0, 0));
    let mut bytes = encode_video(&v).unwrap();
    bytes[0] = b'X';
    assert!(decode_video(&bytes).unwrap_err().to_string().contains("byte 0"));
    let ok = encode_video(&v).unwrap();
    let e = decode_video(&ok[..ok.len() - 3]).unwrap_err().to_string();
    assert!(e.contains("byte"), "{e}");
    let mut empty = b"LDVD".to_vec();
    empty.extend(1u32.to_le_bytes());
    empty.extend(0u32.to_le_bytes());
    assert!(decode_video(&empty).is_err());
}

#[test]
fn batches_are_in_range_and_deterministic() {
    let mk = || SynthDataset::new(SynthDataConfig { seed: 4, ..SynthDataConfig::default() }).unwrap();
    let (mut a, mut b) = (mk(), mk());
    for _ in 0..3 {
        let x = a.next_batch().unwrap();
        assert!(x.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(x.data(), b.next_batch().unwrap().data());
    }
    let mut p = Prefetch::new(mk(), 2);
    let mut c = mk();
    for _ in 0..3 {
        assert_eq!(p.next_batch().unwrap().data(), c.next_batch().unwrap().data());
    }
}

#[test]
fn directory_dataset_reads_ldvd_files() {
    let dir = tempfile::tempdir().unwrap();
    for (i, m) in Motion::ALL.iter().enumerate() {
        let v = synth_video(&SynthSceneConfig::new(20, *m, i as u64), 12).unwrap();
        save_video(dir.path().join(format!("{i}.ldvd")), &v).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let pre = PreprocessConfig::new(1, 8, Crop::Random, 16);
    let mut ds = LdvdDirDataset::open(dir.path(), pre, 4, 0).unwrap();
    assert_eq!(ds.len(), 3);
    let b = ds.next_batch().unwrap();
    assert_eq!(b.shape(), &[4, 8, 16, 16, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subsample_then_clip_equals_clip_of_strided_indices(
        frames in 1usize..200, sub in 1usize..5, len in 1usize..20, pick in 0usize..1000,
    ) {
        let strided: Vec<usize> = (0..frames).step_by(sub).collect();
        let starts = clip_starts(frames, sub, len);
        prop_assert_eq!(starts, (strided.len() + 1).saturating_sub(len));
        if starts > 0 {
            let s = pick % starts;
            prop_assert_eq!(clip_indices(sub, len, s), strided[s..s + len].to_vec());
        }
    }

    #[test]
    fn container_round_trip_is_bit_exact(seed in 0u64..1000, dims in prop::collection::vec(1usize..5, 1..5)) {
        let mut t = Tensor::uniform(&dims, -1.0, 1.0, &mut ldvd::rng_stream(seed, 0));
        // The container stores 32-bit floats.
        t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        let back = decode_video(&encode_video(&t).unwrap()).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert_eq!(back.data(), t.data());
    }

    #[test]
    fn center_crop_preprocess_is_pure(seed in 0u64..100) {
        let x = Tensor::uniform(&[10, 9, 13, 1], -1.0, 1.0, &mut ldvd::rng_stream(seed, 0));
        let cfg = PreprocessConfig::new(1, 10, Crop::Center, 5);
        let a = preprocess(&x, &cfg, &mut ldvd::rng_stream(seed, 1)).unwrap();
        let b = preprocess(&x, &cfg, &mut ldvd::rng_stream(seed + 7, 2)).unwrap();
        prop_assert_eq!(a.data(), b.data());
        prop_assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
