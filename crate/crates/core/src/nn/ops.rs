//! Tensor-level building blocks: convolutions, the Kronecker kernel
//! factorization, temporal shifting and the GRU cell.

use crate::autodiff::kernels::{self, ConvGeom};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Zero-padded correlation of a `[B,T,H,W,C_in]` input with a
/// `[C_out,C_in,k_t,k_h,k_w]` kernel. 2D and temporal-1D convolutions are the
/// `k_t = 1` and `k_h = k_w = 1` cases.
pub fn conv_nd(input: &Tensor, kernel: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> Result<Tensor> {
    kernels::conv_forward(input, kernel, &ConvGeom::new(stride, pad))
}

/// `K[h,w,t] = A[h,w] * b[t]`.
pub fn kron_kernel(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 1 {
        return Err(Error::invalid(format!(
            "kron_kernel expects A (k_h x k_w) and b (k_t), got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (kh, kw, kt) = (a.shape()[0], a.shape()[1], b.shape()[0]);
    let mut out = Vec::with_capacity(kh * kw * kt);
    for &av in a.data() {
        for &bv in b.data() {
            out.push(av * bv);
        }
    }
    Tensor::new(vec![kh, kw, kt], out)
}

/// Spatial and temporal kernel banks for a factorized convolution.
#[derive(Clone, Debug)]
pub struct FactorizedKernels {
    /// `[C_mid, C_in, 1, k_h, k_w]`
    pub spatial: Tensor,
    /// `[C_out, C_mid, k_t, 1, 1]`
    pub temporal: Tensor,
}

/// `conv_temporal(act(conv_spatial(x)))` where `act` is LReLU with `slope`
/// (`slope = 1` gives the purely linear factorization).
pub fn factorized_conv(
    input: &Tensor,
    k: &FactorizedKernels,
    stride: [usize; 3],
    pad: [usize; 3],
    slope: f64,
) -> Result<Tensor> {
    if k.spatial.rank() != 5 || k.temporal.rank() != 5 || k.spatial.shape()[2] != 1 {
        return Err(Error::invalid("spatial kernel must be [C_mid,C_in,1,k_h,k_w]"));
    }
    if k.temporal.shape()[1] != k.spatial.shape()[0]
        || k.temporal.shape()[3] != 1
        || k.temporal.shape()[4] != 1
    {
        return Err(Error::shape(
            "factorized_conv",
            k.spatial.shape(),
            k.temporal.shape(),
        ));
    }
    let mid = conv_nd(input, &k.spatial, [1, stride[1], stride[2]], [0, pad[1], pad[2]])?;
    let mid = mid.map(|x| if x >= 0.0 { x } else { slope * x });
    conv_nd(&mid, &k.temporal, [stride[0], 1, 1], [pad[0], 0, 0])
}

/// Shift `floor(C * num / den)` channels one way and as many the other way
/// by `steps` frames; zero fill at the clip boundary. Identity when the fold is 0.
pub fn temporal_shift(input: &Tensor, num: usize, den: usize, steps: isize) -> Result<Tensor> {
    if den == 0 {
        return Err(Error::invalid("zero denominator in shift fraction"));
    }
    let c = *input.shape().last().unwrap_or(&0);
    kernels::temporal_shift(input, c * num / den, steps)
}

/// GRU weights in gate order (reset, update, candidate).
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    /// `[input, 3 * hidden]`
    pub w_ih: Tensor,
    /// `[hidden, 3 * hidden]`
    pub w_hh: Tensor,
    /// `[3 * hidden]`
    pub b_ih: Tensor,
    /// `[3 * hidden]`
    pub b_hh: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_ih: Tensor::zeros(&[input, 3 * hidden]),
            w_hh: Tensor::zeros(&[hidden, 3 * hidden]),
            b_ih: Tensor::zeros(&[3 * hidden]),
            b_hh: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.w_ih.shape()[0]
    }
}

/// Graph nodes holding the four GRU tensors.
#[derive(Clone, Copy, Debug)]
pub struct GruNodes {
    pub w_ih: NodeId,
    pub w_hh: NodeId,
    pub b_ih: NodeId,
    pub b_hh: NodeId,
}

/// One GRU update on `[B, input]` / `[B, hidden]` nodes:
/// `h' = (1 - z) * n + z * h`.
pub fn gru_cell(g: &mut Graph, x: NodeId, h: NodeId, p: GruNodes) -> Result<NodeId> {
    let hidden = g.value(p.w_hh).shape()[0];
    let b = g.value(h).shape()[0];
    let gi = g.matmul(x, p.w_ih)?;
    let gi = g.add_channel(gi, p.b_ih)?;
    let gh = g.matmul(h, p.w_hh)?;
    let gh = g.add_channel(gh, p.b_hh)?;
    let part = |g: &mut Graph, n: NodeId, k: usize| g.slice(n, &[0, k * hidden], &[b, hidden]);
    let (ir, iz, inn) = (part(g, gi, 0)?, part(g, gi, 1)?, part(g, gi, 2)?);
    let (hr, hz, hn) = (part(g, gh, 0)?, part(g, gh, 1)?, part(g, gh, 2)?);
    let r = g.add(ir, hr)?;
    let r = g.sigmoid(r);
    let z = g.add(iz, hz)?;
    let z = g.sigmoid(z);
    let rn = g.mul(r, hn)?;
    let n = g.add(inn, rn)?;
    let n = g.tanh(n);
    let hm = g.sub(h, n)?;
    let zh = g.mul(z, hm)?;
    g.add(n, zh)
}

/// Tensor-level GRU step for `h: [B, hidden]` (or `[hidden]`) and matching `x`.
pub fn gru_step(h: &Tensor, x: &Tensor, p: &GruParams) -> Result<Tensor> {
    let lift = |t: &Tensor| -> Result<Tensor> {
        match t.rank() {
            1 => t.reshape(&[1, t.len()]),
            2 => Ok(t.clone()),
            _ => Err(Error::invalid(format!("GRU operand of shape {:?}", t.shape()))),
        }
    };
    let (h2, x2) = (lift(h)?, lift(x)?);
    if h2.shape()[1] != p.hidden() || x2.shape()[1] != p.input() || h2.shape()[0] != x2.shape()[0] {
        return Err(Error::shape("gru_step", h.shape(), x.shape()));
    }
    let mut g = Graph::new();
    let xn = g.constant(x2);
    let hn = g.constant(h2);
    let nodes = GruNodes {
        w_ih: g.constant(p.w_ih.clone()),
        w_hh: g.constant(p.w_hh.clone()),
        b_ih: g.constant(p.b_ih.clone()),
        b_hh: g.constant(p.b_hh.clone()),
    };
    let out = gru_cell(&mut g, xn, hn, nodes)?;
    g.value(out).reshape(h.shape())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(&[2, 3, 4, 4, 1], &mut rng);
        let k = Tensor::ones(&[1, 1, 1, 1, 1]);
        assert_eq!(conv_nd(&x, &k, [1; 3], [0; 3]).unwrap(), x);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let x = Tensor::zeros(&[1, 2, 2, 2, 1]);
        let k = Tensor::zeros(&[1, 1, 3, 3, 3]);
        assert!(conv_nd(&x, &k, [1; 3], [0; 3]).is_err());
        assert!(conv_nd(&x, &k, [1; 3], [1; 3]).is_ok());
    }

    #[test]
    fn kron_examples() {
        let a = Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let k = kron_kernel(&a, &Tensor::vector(vec![1.0])).unwrap();
        assert_eq!(k.shape(), &[2, 2, 1]);
        assert_eq!(k.data(), a.data());

        let ones = Tensor::ones(&[2, 2]);
        let k = kron_kernel(&ones, &Tensor::vector(vec![1.0, 2.0])).unwrap();
        for h in 0..2 {
            for w in 0..2 {
                assert_eq!(k.get(&[h, w, 0]), 1.0);
                assert_eq!(k.get(&[h, w, 1]), 2.0);
            }
        }
    }

    #[test]
    fn factorized_identity_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::uniform(&[1, 4, 5, 5, 1], 0.0, 1.0, &mut rng);
        let k = FactorizedKernels {
            spatial: Tensor::ones(&[1, 1, 1, 1, 1]),
            temporal: Tensor::ones(&[1, 1, 1, 1, 1]),
        };
        assert_eq!(factorized_conv(&x, &k, [1; 3], [0; 3], 0.2).unwrap(), x);
    }

    #[test]
    fn shift_definition_c4_t3() {
        // channel c at frame t holds 10*t + c
        let mut x = Tensor::zeros(&[1, 3, 1, 1, 4]);
        for t in 0..3 {
            for c in 0..4 {
                x.set(&[0, t, 0, 0, c], (10 * (t + 1) + c) as f64);
            }
        }
        let y = temporal_shift(&x, 1, 4, 1).unwrap();
        let ch = |t: &Tensor, c: usize| -> Vec<f64> { (0..3).map(|i| t.get(&[0, i, 0, 0, c])).collect() };
        assert_eq!(ch(&y, 0), vec![0.0, 10.0, 20.0]);
        assert_eq!(ch(&y, 1), vec![21.0, 31.0, 0.0]);
        assert_eq!(ch(&y, 2), ch(&x, 2));
        assert_eq!(ch(&y, 3), ch(&x, 3));
    }

    #[test]
    fn shift_degenerate_fold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[2, 5, 2, 2, 2], &mut rng);
        assert_eq!(temporal_shift(&x, 1, 4, 1).unwrap(), x);
    }

    #[test]
    fn gru_zero_params_halves_state() {
        let p = GruParams::zeros(3, 4);
        let h = Tensor::vector(vec![1.0, -2.0, 0.5, 4.0]);
        let x = Tensor::vector(vec![0.3, 0.1, -0.7]);
        let out = gru_step(&h, &x, &p).unwrap();
        for (o, hv) in out.data().iter().zip(h.data()) {
            assert!((o - hv / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gru_saturated_update_gate_carries() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = GruParams {
            w_ih: Tensor::randn(&[3, 12], &mut rng).scale(0.3),
            w_hh: Tensor::randn(&[4, 12], &mut rng).scale(0.3),
            b_ih: Tensor::zeros(&[12]),
            b_hh: Tensor::zeros(&[12]),
        };
        for j in 4..8 {
            p.b_ih.data_mut()[j] = 50.0;
        }
        let h = Tensor::vector(vec![0.2, -0.4, 0.9, 0.0]);
        let x = Tensor::vector(vec![1.0, -1.0, 0.5]);
        let out = gru_step(&h, &x, &p).unwrap();
        assert!(out.max_abs_diff(&h) < 1e-3);
    }

    #[test]
    fn gru_dimension_mismatch() {
        let p = GruParams::zeros(3, 4);
        assert!(gru_step(&Tensor::zeros(&[5]), &Tensor::zeros(&[3]), &p).is_err());
    }
}
