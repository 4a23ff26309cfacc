use ldvd::nn::ops::{conv_nd, factorized_conv, kron_kernel, FactorizedKernels};
use ldvd::tensor::Tensor;
use ldvd::verify::{compose_factorized, naive_conv};
use proptest::prelude::*;

#[test]
fn fifty_random_separable_kernels_match_dense_convolution() {
    let mut rng = ldvd::rng_stream(50, 0);
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let (ci, mid, co) = (1 + case as usize % 3, 1 + (case as usize / 3) % 4, 1 + (case as usize / 5) % 3);
        let (kt, kh) = (1 + case as usize % 4, 1 + (case as usize / 2) % 4);
        let k = FactorizedKernels {
            spatial: Tensor::uniform(&[mid, ci, 1, kh, kh], -1.0, 1.0, &mut rng),
            temporal: Tensor::uniform(&[co, mid, kt, 1, 1], -1.0, 1.0, &mut rng),
        };
        let x = Tensor::uniform(&[2, 7, 8, 8, ci], -1.0, 1.0, &mut rng);
        let (s, p) = ([1 + case as usize % 2, 2, 1], [kt / 2, kh / 2, kh / 2]);
        let f = factorized_conv(&x, &k, s, p, 1.0).unwrap();
        let d = naive_conv(&x, &compose_factorized(&k), s, p).unwrap();
        assert_eq!(f.shape(), d.shape());
        worst = worst.max(f.max_abs_diff(&d));
    }
    assert!(worst < 1e-9, "max abs diff {worst:.3e}");
}

#[test]
fn single_channel_kernel_is_the_kronecker_product() {
    let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let b = Tensor::new(vec![3], vec![1.0, -1.0, 0.5]).unwrap();
    let k = kron_kernel(&a, &b).unwrap();
    assert_eq!(k.shape(), &[2, 2, 3]);
    for i in 0..2 {
        for j in 0..2 {
            for t in 0..3 {
                assert_eq!(k.get(&[i, j, t]), a.get(&[i, j]) * b.get(&[t]));
            }
        }
    }
}

#[test]
fn identity_kernel_is_identity() {
    let mut rng = ldvd::rng_stream(1, 1);
    let x = Tensor::uniform(&[1, 3, 4, 4, 2], -1.0, 1.0, &mut rng);
    let mut w = Tensor::zeros(&[2, 2, 1, 1, 1]);
    w.set(&[0, 0, 0, 0, 0], 1.0);
    w.set(&[1, 1, 0, 0, 0], 1.0);
    assert_eq!(conv_nd(&x, &w, [1; 3], [0; 3]).unwrap().max_abs_diff(&x), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_direct_loops(
        seed in 0u64..10_000,
        k in prop::array::uniform3(1usize..4),
        s in prop::array::uniform3(1usize..3),
        ci in 1usize..4,
        co in 1usize..4,
        b in 1usize..3,
    ) {
        let mut rng = ldvd::rng_stream(seed, 0);
        let p = [seed as usize % k[0], (seed as usize / 3) % k[1], (seed as usize / 9) % k[2]];
        let x = Tensor::uniform(&[b, 5, 6, 7, ci], -1.0, 1.0, &mut rng);
        let w = Tensor::uniform(&[co, ci, k[0], k[1], k[2]], -1.0, 1.0, &mut rng);
        let fast = conv_nd(&x, &w, s, p).unwrap();
        let slow = naive_conv(&x, &w, s, p).unwrap();
        prop_assert_eq!(fast.shape(), slow.shape());
        prop_assert!(fast.max_abs_diff(&slow) < 1e-12);
    }
}
