//! Extremal Hessian eigenvalues of the toy 3D and factorized
//! discriminators at initialization, by Lanczos on Hessian-vector products.

use ldvd::curvature::{discriminator_spectrum, SpectrumConfig};
use ldvd::gan::{Generator, GeneratorConfig, GeneratorKind};
use ldvd::nn::{presets, Network};
use ldvd::video::{BatchSource, SynthDataConfig, SynthDataset};

fn main() -> ldvd::Result<()> {
    let mut data = SynthDataset::new(SynthDataConfig::default())?;
    let real = data.next_batch()?;
    let gen = Generator::build(GeneratorConfig::toy(GeneratorKind::Tgan), 1)?;
    let z = gen.sample_latents(real.shape()[0], &mut ldvd::rng_stream(1, 3));
    let fake = gen.generate(&z)?;
    let cfg = SpectrumConfig::default();
    for name in ["toy-3d", "toy-f"] {
        let d = Network::build(&presets::toy(name, None, presets::TOY_WIDTH)?, 2)?;
        let t0 = std::time::Instant::now();
        let r = discriminator_spectrum(&d, &real, &fake, &cfg, 0)?;
        println!("{name} ({} params, {:.2}s)", d.count_params(), t0.elapsed().as_secs_f64());
        println!("  top    {:?}", r.eigenvalues.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
        println!("  bottom {:?}", r.bottom.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
    }
    Ok(())
}
