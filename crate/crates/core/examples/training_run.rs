//! Run a bundled experiment end to end and summarize the artifacts.
//!
//! cargo run --release --example training_run -- [config] [out_dir] [seed]

use ldvd::report::{read_losses, read_spectra};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let config = args.first().map_or("tgan-vs-tganf-curvature", String::as_str);
    let out = args.get(1).map_or_else(|| std::env::temp_dir().join("ldvd-run"), Into::into);
    let seed = args.get(2).map(|s| s.parse()).transpose()?;
    let summary = ldvd::cli::cmd_run(config, &out, seed)?;
    println!("seed {} -> {}", summary.seed, summary.out_dir.display());
    for v in &summary.variants {
        let losses = read_losses(&v.dir.join("losses.csv"))?;
        let spectra = read_spectra(&v.dir.join("spectra.csv"))?;
        let last = losses.last().map_or((f64::NAN, f64::NAN), |l| (l.loss_d, l.loss_g));
        let lp = spectra.last().map_or(f64::NAN, |s| s.lambda_plus);
        println!(
            "{:<10} final loss_D {:.4} loss_G {:.4}; λ+ over the run {:.3}",
            v.name, last.0, last.1, lp
        );
    }
    Ok(())
}
