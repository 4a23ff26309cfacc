//! Per-layer Lipschitz control: singular value clipping and spectral normalization.
//!
//! Kernels are viewed as `C_out x (C_in * k_t * k_h * k_w)` matrices, which is
//! a plain row-major reinterpretation of the `[C_out, C_in, k_t, k_h, k_w]`
//! layout.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Floor applied to a vanishing spectral-norm estimate.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Power iterations on the first normalization of a fresh state.
pub const WARMUP_POWER_ITERS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LipschitzKind {
    None,
    Svc,
    Sn,
}

impl LipschitzKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LipschitzKind::None => "none",
            LipschitzKind::Svc => "svc",
            LipschitzKind::Sn => "sn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(LipschitzKind::None),
            "svc" => Some(LipschitzKind::Svc),
            "sn" => Some(LipschitzKind::Sn),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzConfig {
    pub kind: LipschitzKind,
    pub cap: f64,
    pub every_n: usize,
    pub clip_bn: bool,
    /// Power iterations per training step once warm.
    pub power_iters: usize,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        LipschitzConfig {
            kind: LipschitzKind::None,
            cap: 1.0,
            every_n: 5,
            clip_bn: true,
            power_iters: 1,
        }
    }
}

/// `C_out x rest` view of a kernel; rank-2 weights are returned as they are.
pub fn reshape_to_matrix(kernel: &Tensor) -> Result<Tensor> {
    match kernel.rank() {
        0 => Err(Error::invalid("scalar has no matrix view")),
        1 => kernel.reshape(&[1, kernel.len()]),
        2 => Ok(kernel.clone()),
        _ => {
            let rows = kernel.shape()[0];
            kernel.reshape(&[rows, kernel.len() / rows])
        }
    }
}

pub fn matrix_to_kernel(m: &Tensor, shape: &[usize]) -> Result<Tensor> {
    m.reshape(shape)
}

fn to_dmatrix(m: &Tensor) -> Result<DMatrix<f64>> {
    if m.rank() != 2 {
        return Err(Error::invalid(format!("expected a matrix, got {:?}", m.shape())));
    }
    if !m.all_finite() {
        return Err(Error::NonFinite("matrix passed to SVD".into()));
    }
    Ok(DMatrix::from_row_slice(m.shape()[0], m.shape()[1], m.data()))
}

fn from_dmatrix(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = m.shape();
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(m[(i, j)]);
        }
    }
    Tensor::new(vec![r, c], data).expect("matrix shape")
}

/// Singular values in descending order.
pub fn singular_values(m: &Tensor) -> Result<Vec<f64>> {
    let d = to_dmatrix(m)?;
    let mut s: Vec<f64> = d.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn spectral_norm(m: &Tensor) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// `U min(Σ, cap) Vᵀ`: the Frobenius-nearest matrix whose spectral norm is at most `cap`.
pub fn svd_clip(w: &Tensor, cap: f64) -> Result<Tensor> {
    let d = to_dmatrix(w)?;
    if cap.is_infinite() {
        return Ok(w.clone());
    }
    if cap.is_nan() || cap < 0.0 {
        return Err(Error::invalid(format!("clip cap {cap}")));
    }
    // Singular directions come from the eigenvectors of the smaller Gram
    // matrix; nalgebra's SVD vectors are unreliable once singular values
    // repeat, which is exactly the state of an already-clipped matrix.
    // W - sum_j (1 - cap / s_j) u_j u_j^T W over the s_j above the cap.
    let wide = d.nrows() <= d.ncols();
    let gram = if wide { &d * d.transpose() } else { d.transpose() * &d };
    let eig = SymmetricEigen::new(gram);
    let mut shrink = DMatrix::zeros(eig.eigenvalues.len(), eig.eigenvalues.len());
    let mut any = false;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.max(0.0).sqrt();
        if s > cap * (1.0 + 1e-12) {
            let u = eig.eigenvectors.column(j);
            shrink += (1.0 - cap / s) * &u * u.transpose();
            any = true;
        }
    }
    if !any {
        return Ok(w.clone());
    }
    let out = if wide { &d - shrink * &d } else { &d - &d * shrink };
    Ok(from_dmatrix(&out))
}

/// Clip every conv/linear weight matrix of `net` (and BN scales when
/// `clip_bn`) if `iteration` falls on the cadence. Returns whether it ran.
pub fn apply_svc(net: &mut Network, cap: f64, every_n: usize, iteration: usize, clip_bn: bool) -> Result<bool> {
    if every_n == 0 || iteration % every_n != 0 {
        return Ok(false);
    }
    if cap.is_infinite() {
        return Ok(true);
    }
    for idx in net.matrix_param_indices() {
        let w = net.params().tensor(idx).clone();
        let m = reshape_to_matrix(&w)?;
        let clipped = svd_clip(&m, cap)?;
        *net.params_mut().tensor_mut(idx) = matrix_to_kernel(&clipped, w.shape())?;
    }
    if clip_bn {
        for idx in net.bn_scale_indices() {
            for g in net.params_mut().tensor_mut(idx).data_mut() {
                *g = g.clamp(-cap, cap);
            }
        }
    }
    Ok(true)
}

/// Power-iteration state for one weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    u: Vec<f64>,
    iterations: usize,
}

/// Result of one normalization.
#[derive(Clone, Debug)]
pub struct SpectralEstimate {
    pub sigma: f64,
    /// Right singular vector estimate used for `σ̂ = uᵀ W v`.
    pub v: Vec<f64>,
    /// Set when the estimate hit [`SIGMA_FLOOR`].
    pub floored: bool,
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        for a in x.iter_mut() {
            *a /= n;
        }
    }
    n
}

impl SpectralState {
    /// Seeded random unit vector of length `rows`.
    pub fn new(rows: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = Tensor::randn(&[rows], &mut rng).into_data();
        normalize(&mut u);
        SpectralState { u, iterations: 0 }
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Advance `iters` power iterations on `m` (rows x cols) and estimate σ_max.
    pub fn step(&mut self, m: &Tensor, iters: usize) -> Result<SpectralEstimate> {
        if m.rank() != 2 || m.shape()[0] != self.u.len() {
            return Err(Error::shape("spectral state", m.shape(), &[self.u.len()]));
        }
        if iters == 0 {
            return Err(Error::invalid("power_iters must be >= 1"));
        }
        let (r, c) = (m.shape()[0], m.shape()[1]);
        let a = m.data();
        let mut v = vec![0.0; c];
        for _ in 0..iters {
            v = self.rt_mul(a, r, c);
            normalize(&mut v);
            let mut u = vec![0.0; r];
            for i in 0..r {
                u[i] = a[i * c..(i + 1) * c].iter().zip(&v).map(|(x, y)| x * y).sum();
            }
            if normalize(&mut u) > 0.0 {
                self.u = u;
            }
            self.iterations += 1;
        }
        let v = {
            let mut v = self.rt_mul(a, r, c);
            normalize(&mut v);
            v
        };
        let sigma = self.sigma_with(a, r, c, &v);
        let floored = !(sigma > SIGMA_FLOOR);
        Ok(SpectralEstimate {
            sigma: if floored { SIGMA_FLOOR } else { sigma },
            v,
            floored,
        })
    }

    /// `v = normalize(Wᵀu)` and `σ̂ = uᵀWv` without advancing the state.
    pub fn estimate(&self, m: &Tensor) -> Result<SpectralEstimate> {
        if m.rank() != 2 || m.shape()[0] != self.u.len() {
            return Err(Error::shape("spectral state", m.shape(), &[self.u.len()]));
        }
        let (r, c) = (m.shape()[0], m.shape()[1]);
        let mut v = self.rt_mul(m.data(), r, c);
        normalize(&mut v);
        let sigma = self.sigma_with(m.data(), r, c, &v);
        let floored = !(sigma > SIGMA_FLOOR);
        Ok(SpectralEstimate {
            sigma: if floored { SIGMA_FLOOR } else { sigma },
            v,
            floored,
        })
    }

    fn rt_mul(&self, a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut v = vec![0.0; c];
        for i in 0..r {
            let ui = self.u[i];
            for (vj, aij) in v.iter_mut().zip(&a[i * c..(i + 1) * c]) {
                *vj += ui * aij;
            }
        }
        v
    }

    fn sigma_with(&self, a: &[f64], r: usize, c: usize, v: &[f64]) -> f64 {
        (0..r)
            .map(|i| {
                self.u[i]
                    * a[i * c..(i + 1) * c]
                        .iter()
                        .zip(v)
                        .map(|(x, y)| x * y)
                        .sum::<f64>()
            })
            .sum()
    }
}

/// `W / σ̂` after `power_iters` warm-started power iterations.
pub fn spectral_normalize(w: &Tensor, state: &mut SpectralState, power_iters: usize) -> Result<(Tensor, SpectralEstimate)> {
    let m = reshape_to_matrix(w)?;
    let est = state.step(&m, power_iters)?;
    Ok((w.scale(1.0 / est.sigma), est))
}
