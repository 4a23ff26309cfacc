//! Singular value clipping and spectral normalization on discriminator
//! weights, audited with a full SVD.

use ldvd::lipschitz::{apply_svc, reshape_to_matrix, singular_values, spectral_norm, spectral_normalize, svd_clip, SpectralState};
use ldvd::nn::{presets, Network};
use ldvd::tensor::Tensor;

fn main() -> ldvd::Result<()> {
    let mut d = Network::build(&presets::toy("toy-3d", None, presets::TOY_WIDTH)?, 5)?;
    for i in d.matrix_param_indices() {
        let m = reshape_to_matrix(d.params().tensor(i))?;
        println!("{:<12} σ_max {:.4}", d.params().name(i), spectral_norm(&m)?);
    }
    apply_svc(&mut d, 1.0, 5, 0, true)?;
    println!("after clipping:");
    for i in d.matrix_param_indices() {
        let m = reshape_to_matrix(d.params().tensor(i))?;
        println!("{:<12} σ_max {:.12}", d.params().name(i), spectral_norm(&m)?);
    }

    let mut rng = ldvd::rng_stream(5, 1);
    let w = Tensor::uniform(&[16, 48], -1.0, 1.0, &mut rng);
    let once = svd_clip(&w, 1.0)?;
    println!("clip twice vs once: {:.2e}", svd_clip(&once, 1.0)?.max_abs_diff(&once));

    let true_sigma = singular_values(&w)?[0];
    // One power iteration per call, warm-started from the previous u.
    let mut state = SpectralState::new(16, 9);
    for call in 1..=20 {
        let (wn, est) = spectral_normalize(&w, &mut state, 1)?;
        if [1, 2, 5, 10, 20].contains(&call) {
            println!(
                "after {call:>2} calls: σ̂ {:.6} (true {true_sigma:.6}), σ_max(W/σ̂) {:.6}",
                est.sigma,
                spectral_norm(&wn)?
            );
        }
    }
    Ok(())
}
