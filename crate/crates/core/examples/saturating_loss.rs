//! Generator gradients against a discriminator that separates real and
//! generated clips by a wide logit margin: the saturating (minimax) loss
//! gives almost no signal, the non-saturating loss does.

use ldvd::gan::pathology::{generator_gradient, perfect_discriminator_setup};
use ldvd::gan::LossKind;

fn main() -> ldvd::Result<()> {
    for seed in 0..3 {
        let s = perfect_discriminator_setup(seed, 8)?;
        let sat = generator_gradient(&s, LossKind::Saturating)?;
        let ns = generator_gradient(&s, LossKind::NonSaturating)?;
        println!(
            "seed {seed}: D(real) {:.2}, D(fake) {:.2}; |grad G| saturating {:.3e}, non-saturating {:.3e}, ratio {:.2e}",
            sat.d_real_mean,
            sat.d_fake_mean,
            sat.theta_norm,
            ns.theta_norm,
            sat.theta_norm / ns.theta_norm
        );
    }
    Ok(())
}
