//! Runs the numerical self-checks and prints one line per check.

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut failed = 0;
    for c in ldvd::verify::run_all(seed) {
        println!("{} {:<34} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += !c.passed as usize;
    }
    std::process::exit((failed > 0) as i32);
}
