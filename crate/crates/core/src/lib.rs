//! Video-GAN discriminators with 3D, factorized (2+1)D and temporal-shift
//! convolutions, and the tooling to measure their loss-surface curvature.
//!
//! Everything runs on `f64` tensors with a taped autodiff engine that also
//! computes exact Hessian-vector products.

pub mod autodiff;
pub mod cli;
pub mod checkpoint;
pub mod config;
pub mod curvature;
pub mod error;
pub mod gan;
pub mod ini;
pub mod lipschitz;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod tensor;
pub mod verify;
pub mod video;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Worker-thread bound: `LDVD_THREADS` if set to a positive integer, else the
/// machine's available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("LDVD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Independent deterministic RNG stream `stream` derived from `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
