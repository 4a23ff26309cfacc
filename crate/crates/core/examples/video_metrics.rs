//! Score generators with the bundled feature extractor: an untrained toy
//! generator against real synthetic clips, and real clips against
//! themselves.

use ldvd::gan::{Generator, GeneratorConfig, GeneratorKind};
use ldvd::metrics::{evaluate_generator, frechet_distance, real_feature_stats, EvalConfig, Surrogate};
use ldvd::video::{SynthDataConfig, SynthDataset};

fn main() -> ldvd::Result<()> {
    let ext = Surrogate::bundled()?;
    println!("held-out accuracy of the extractor: {:.3}", ext.holdout_accuracy(300, 77)?);
    let data = |seed| SynthDataset::new(SynthDataConfig { seed, batch: 50, ..SynthDataConfig::default() });
    let real = real_feature_stats(&ext, &mut data(100)?, 500)?;
    let other = real_feature_stats(&ext, &mut data(200)?, 500)?;
    println!("FD(real, real'): {:.3}", frechet_distance(&real, &other)?);
    let gen = Generator::build(GeneratorConfig::toy(GeneratorKind::Tgan), 1)?;
    let cfg = EvalConfig {
        samples: 200,
        repeats: 3,
        ..EvalConfig::default()
    };
    let s = evaluate_generator(&gen, &ext, &real, &cfg)?;
    println!("untrained generator: IS {:.3} ± {:.3}, FD {:.2} ± {:.2}", s.is.value, s.is.stddev, s.fd.value, s.fd.stddev);
    Ok(())
}
