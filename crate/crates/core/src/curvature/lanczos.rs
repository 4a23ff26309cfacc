//! Lanczos iteration with full reorthogonalization and an implicit-QL
//! tridiagonal eigensolver.

use crate::error::{Error, Result};
use crate::rng_stream;
use crate::tensor::Tensor;

/// Ritz values of one Lanczos run.
#[derive(Clone, Debug, PartialEq)]
pub struct LanczosResult {
    /// All Ritz values, descending.
    pub ritz: Vec<f64>,
    /// Krylov dimension reached.
    pub steps: usize,
    /// An invariant subspace was found before `max_iters`; the Ritz values
    /// are then exact eigenvalues of the operator restricted to it.
    pub breakdown: bool,
}

impl LanczosResult {
    /// Up to `k` largest values, descending.
    pub fn top(&self, k: usize) -> Vec<f64> {
        self.ritz.iter().take(k).copied().collect()
    }

    /// Up to `k` smallest values, ascending (most negative first).
    pub fn bottom(&self, k: usize) -> Vec<f64> {
        self.ritz.iter().rev().take(k).copied().collect()
    }
}

/// Relative size of `β` treated as an exact breakdown.
const BREAKDOWN_TOL: f64 = 1e-10;

/// Extremal eigenvalues of the symmetric operator `op` on `R^dim`.
///
/// Runs at most `max_iters` steps from a seeded Gaussian start vector.
pub fn lanczos_extremal<F>(mut op: F, dim: usize, k: usize, max_iters: usize, seed: u64) -> Result<LanczosResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if dim == 0 {
        return Err(Error::invalid("Lanczos on an empty operator"));
    }
    if k == 0 || k > max_iters || max_iters > dim {
        return Err(Error::invalid(format!(
            "Lanczos needs 1 <= k <= max_iters <= dim, got k={k}, max_iters={max_iters}, dim={dim}"
        )));
    }
    let mut rng = rng_stream(seed, 0x1a2c);
    let mut q = Tensor::randn(&[dim], &mut rng).into_data();
    scale_to_unit(&mut q);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iters);
    let mut alpha = Vec::with_capacity(max_iters);
    let mut beta: Vec<f64> = Vec::with_capacity(max_iters);
    let mut breakdown = false;
    let mut scale = 0.0f64;
    loop {
        let mut w = op(&q)?;
        if w.len() != dim {
            return Err(Error::invalid(format!(
                "operator returned {} entries for a {dim}-dim input",
                w.len()
            )));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("operator output in Lanczos".into()));
        }
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q);
        alpha.push(a);
        // Two Gram-Schmidt sweeps against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm(&w);
        scale = scale.max(a.abs()).max(b);
        if basis.len() == max_iters {
            break;
        }
        if b <= BREAKDOWN_TOL * scale.max(f64::MIN_POSITIVE) {
            breakdown = true;
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        q = w;
    }
    let mut ritz = tridiagonal_eigenvalues(&alpha, &beta)?;
    ritz.sort_by(|a, b| b.total_cmp(a));
    Ok(LanczosResult {
        steps: alpha.len(),
        ritz,
        breakdown,
    })
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off.len() == diag.len() - 1`), by implicit QL with
/// Wilkinson shifts. Returned in descending order.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(Error::invalid(format!(
            "tridiagonal matrix needs n >= 1 diagonal and n - 1 off-diagonal entries, got {} and {}",
            n,
            off.len()
        )));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::invalid("tridiagonal QL did not converge"));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(d)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

fn scale_to_unit(x: &mut [f64]) {
    let n = norm(x);
    x.iter_mut().for_each(|v| *v /= n);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl FnMut(&[f64]) -> Result<Vec<f64>> {
        move |v| Ok(v.iter().zip(&d).map(|(a, b)| a * b).collect())
    }

    #[test]
    fn diagonal_extremes() {
        let r = lanczos_extremal(diag_op(vec![5.0, 2.0, 1.0, -3.0]), 4, 2, 4, 1).unwrap();
        assert_eq!(r.top(2).len(), 2);
        for (a, b) in r.top(2).iter().zip([5.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in r.bottom(2).iter().zip([-3.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_breaks_down_after_one_step() {
        let r = lanczos_extremal(|v| Ok(v.to_vec()), 10, 1, 10, 3).unwrap();
        assert!(r.breakdown);
        assert_eq!(r.steps, 1);
        assert!((r.ritz[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(lanczos_extremal(|v| Ok(v.to_vec()), 4, 5, 4, 0).is_err());
        assert!(lanczos_extremal(|v| Ok(v.to_vec()), 4, 2, 5, 0).is_err());
    }

    #[test]
    fn ql_two_by_two() {
        let ev = tridiagonal_eigenvalues(&[2.0, 3.0], &[1.0]).unwrap();
        let s = 5f64.sqrt();
        assert!((ev[0] - (5.0 + s) / 2.0).abs() < 1e-12);
        assert!((ev[1] - (5.0 - s) / 2.0).abs() < 1e-12);
    }
}
