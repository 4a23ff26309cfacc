use ldvd::autodiff::{Graph, NodeId};
use ldvd::curvature::{dense_hessian, hessian_spectrum, lanczos_extremal, SpectrumConfig};
use ldvd::verify::{compare_extremes, tiny_d_loss};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

fn sorted_desc(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn lanczos_matches_dense_eigensolve_on_random_operators() {
    for (seed, n) in [(0u64, 100usize), (1, 137), (2, 200)] {
        let mut rng = ldvd::rng_stream(seed, 0);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = (&a + a.transpose()) * 0.5;
        let want = sorted_desc(s.clone());
        let op = |v: &[f64]| -> ldvd::Result<Vec<f64>> { Ok((&s * DVector::from_column_slice(v)).as_slice().to_vec()) };
        let r = lanczos_extremal(op, n, 10, n, seed).unwrap();
        let err = compare_extremes(&r.top(10), &r.bottom(10), &want);
        assert!(err < 1e-8, "n={n}: rel err {err:.2e}");
    }
}

#[test]
fn lanczos_matches_dense_hessian_of_tiny_discriminators() {
    for preset in ["tiny-3d", "tiny-f"] {
        let (d, f) = tiny_d_loss(preset, 6).unwrap();
        let h = dense_hessian(d.params(), &f).unwrap();
        let n = h.len();
        let want = sorted_desc(DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i])));
        let cfg = SpectrumConfig {
            k: 10,
            max_iters: Some(n),
            seed: 6,
        };
        let r = hessian_spectrum(d.params(), &f, &cfg).unwrap();
        let err = compare_extremes(&r.top(10), &r.bottom(10), &want);
        assert!(err < 1e-8, "{preset}: rel err {err:.2e}");
    }
}

#[test]
fn spectrum_does_not_depend_on_flatten_order() {
    let (d, f) = tiny_d_loss("tiny-3d", 2).unwrap();
    let p = d.params();
    let n = p.len();
    let order: Vec<usize> = (0..n).rev().collect();
    let q = p.permuted(&order).unwrap();
    let g = |gr: &mut Graph, ids: &[NodeId]| -> ldvd::Result<NodeId> {
        let mut back = vec![ids[0]; n];
        for (k, &i) in order.iter().enumerate() {
            back[i] = ids[k];
        }
        f(gr, &back)
    };
    let m = p.total_dim();
    let cfg = SpectrumConfig {
        k: 10,
        max_iters: Some(m),
        seed: 1,
    };
    let a = hessian_spectrum(p, &f, &cfg).unwrap();
    let b = hessian_spectrum(&q, g, &cfg).unwrap();
    let scale = a.top(1)[0].abs();
    for (x, y) in a.top(10).iter().zip(b.top(10)).chain(a.bottom(10).iter().zip(b.bottom(10))) {
        assert!((x - y).abs() < 1e-9 * scale, "{x} vs {y}");
    }
}

#[test]
fn breakdown_on_low_rank_operator() {
    // Rank-3 operator: the Krylov space closes after three steps.
    let n = 40;
    let mut rng = ldvd::rng_stream(3, 0);
    let u = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
    let s = &u * DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, -2.0, 1.0])) * u.transpose();
    let op = |v: &[f64]| -> ldvd::Result<Vec<f64>> { Ok((&s * DVector::from_column_slice(v)).as_slice().to_vec()) };
    let r = lanczos_extremal(op, n, 2, n, 0).unwrap();
    assert!(r.breakdown);
    let want = sorted_desc(s.clone());
    assert!((r.top(1)[0] - want[0]).abs() < 1e-9 * want[0].abs());
}
