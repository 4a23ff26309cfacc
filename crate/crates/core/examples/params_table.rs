//! Parameter counts of the preset discriminators against the published
//! figures, the reduction table, and a per-layer breakdown of one preset.
//!
//! cargo run --example params_table -- [preset]

use ldvd::nn::presets;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:<24} {:>8} {:>12} {:>9}", "preset", "published M", "computed", "rounded");
    for r in presets::conformance_table()? {
        println!(
            "{:<24} {:>8.1} {:>12} {:>9.1}{}",
            r.preset,
            r.published_millions,
            r.computed,
            r.rounded_millions(),
            if r.matches() { "" } else { "  <- mismatch" }
        );
    }
    println!();
    for r in presets::reduction_table()? {
        println!(
            "{:<12} {} vs {}: published {:.2}%, computed {:.2}%",
            r.label, r.variant, r.base, r.published_percent, r.computed_percent
        );
    }
    let name = std::env::args().nth(1).unwrap_or_else(|| "tgan-f-c0c1".into());
    println!();
    print!("{}", ldvd::cli::cmd_params(&name, None)?);
    Ok(())
}
