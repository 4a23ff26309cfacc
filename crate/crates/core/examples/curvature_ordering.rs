//! Train toy-3d and toy-f against the same toy generator and data, then
//! compare the median top-10 |eigenvalue| over the run. Also compares the
//! 3D preset with and without singular value clipping.
//!
//! cargo run --release --example curvature_ordering -- [iterations] [seeds]

use ldvd::curvature::SpectrumRecord;
use ldvd::gan::{train, GeneratorConfig, GeneratorKind, TrainConfig};
use ldvd::lipschitz::LipschitzKind;
use ldvd::nn::presets;
use ldvd::video::{SynthDataConfig, SynthDataset};

fn median_top(records: &[SpectrumRecord]) -> f64 {
    let mut v: Vec<f64> = records.iter().flat_map(|r| r.eigenvalues.iter().map(|x| x.abs())).collect();
    v.sort_by(f64::total_cmp);
    v.get(v.len() / 2).copied().unwrap_or(f64::NAN)
}

fn max_abs(records: &[SpectrumRecord]) -> f64 {
    records.iter().map(|r| r.max_abs()).fold(0.0, f64::max)
}

fn main() -> ldvd::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let iterations = args.first().copied().unwrap_or(100);
    let seeds = args.get(1).copied().unwrap_or(3) as u64;
    let g_cfg = GeneratorConfig::toy(GeneratorKind::Tgan);
    for seed in 0..seeds {
        let mut row = Vec::new();
        for (preset, lip) in [("toy-3d", LipschitzKind::None), ("toy-f", LipschitzKind::None), ("toy-3d", LipschitzKind::Svc)] {
            let mut cfg = TrainConfig {
                iterations,
                seed,
                spectrum_every: std::env::var("EVERY").ok().and_then(|v| v.parse().ok()).unwrap_or((iterations / 5).max(1)),
                threads: ldvd::worker_threads(),
                ..TrainConfig::default()
            };
            cfg.lipschitz.kind = lip;
            let spec = presets::toy(preset, None, presets::TOY_WIDTH)?;
            let mut data = SynthDataset::new(SynthDataConfig {
                seed,
                ..SynthDataConfig::default()
            })?;
            let t0 = std::time::Instant::now();
            let run = train(&cfg, g_cfg, &spec, &mut data)?;
            row.push((preset, lip, median_top(&run.spectra), max_abs(&run.spectra), t0.elapsed().as_secs_f64()));
        }
        for (p, l, m, a, s) in &row {
            println!("seed {seed} {p:7} {:4} median|top10| {m:.4e} max|ev| {a:.4e} ({s:.1}s)", l.as_str());
        }
    }
    Ok(())
}
