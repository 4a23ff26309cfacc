//! A (2+1)D factorized convolution with identity activation equals a dense
//! 3D convolution with the composed kernel, at a fraction of the weights.

use ldvd::nn::ops::{conv_nd, factorized_conv, FactorizedKernels};
use ldvd::tensor::Tensor;
use ldvd::verify::compose_factorized;

fn main() -> ldvd::Result<()> {
    let mut rng = ldvd::rng_stream(7, 0);
    let (cin, mid, cout) = (3, 6, 8);
    let k = FactorizedKernels {
        spatial: Tensor::uniform(&[mid, cin, 1, 3, 3], -0.5, 0.5, &mut rng),
        temporal: Tensor::uniform(&[cout, mid, 3, 1, 1], -0.5, 0.5, &mut rng),
    };
    let x = Tensor::uniform(&[2, 8, 12, 12, cin], -1.0, 1.0, &mut rng);
    let factorized = factorized_conv(&x, &k, [1, 2, 2], [1, 1, 1], 1.0)?;
    let dense_kernel = compose_factorized(&k);
    let dense = conv_nd(&x, &dense_kernel, [1, 2, 2], [1, 1, 1])?;
    println!("output shape {:?}", dense.shape());
    println!("max |dense - factorized| = {:.3e}", dense.max_abs_diff(&factorized));
    println!(
        "weights: dense {} vs factorized {} + {}",
        dense_kernel.len(),
        k.spatial.len(),
        k.temporal.len()
    );
    // With leaky ReLU between the two stages the paths differ.
    let nonlinear = factorized_conv(&x, &k, [1, 2, 2], [1, 1, 1], 0.2)?;
    println!("with slope 0.2 between stages: max diff {:.3e}", dense.max_abs_diff(&nonlinear));
    Ok(())
}
