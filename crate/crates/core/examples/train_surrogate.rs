//! Train the surrogate feature extractor from scratch and write its weights.
//!
//! cargo run --release --example train_surrogate -- [out.ldps]

use ldvd::checkpoint::sha256_hex;
use ldvd::metrics::{Surrogate, SurrogateTrainConfig};

fn main() -> ldvd::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "surrogate.ldps".into());
    let cfg = SurrogateTrainConfig::default();
    let t0 = std::time::Instant::now();
    let (s, acc) = Surrogate::train(&cfg)?;
    let bytes = s.to_bytes();
    std::fs::write(&out, &bytes)?;
    println!("held-out accuracy {:.3} over {} clips", acc, cfg.holdout);
    println!("sha256 {}", sha256_hex(&bytes));
    println!("wrote {out} in {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
