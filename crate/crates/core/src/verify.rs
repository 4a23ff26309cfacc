//! Self-checks run by `ldvd verify`: finite-difference gradients per op,
//! convolution and factorization against direct loops, Hessian-vector
//! products against dense Hessians, SVD clipping, Lanczos against a dense
//! eigensolver, metric identities and the parameter-count tables.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ConvGeom, Graph, NodeId, ParamSet};
use crate::curvature::{dense_hessian, hessian_spectrum, lanczos_extremal, SpectrumConfig};
use crate::error::{Error, Result};
use crate::gan::loss::d_loss;
use crate::lipschitz::{singular_values, svd_clip};
use crate::metrics::{frechet_distance, inception_style_score, FeatureStats, Surrogate};
use crate::nn::ops::{conv_nd, factorized_conv, kron_kernel, FactorizedKernels};
use crate::nn::{presets, BnMode, Network};
use crate::rng_stream;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((ok, d)) => Check::new(name, ok, d),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        }
    }
}

type LossFn = Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>>;

/// Relative gradient error tolerated by the finite-difference checks.
pub const FD_TOL: f64 = 1e-6;
const FD_EPS: f64 = 1e-5;

/// One op under test: its parameters and a scalar loss that exercises it.
pub struct OpCase {
    pub op: &'static str,
    pub params: ParamSet,
    loss: LossFn,
}

fn params(rng: &mut ChaCha8Rng, shapes: &[&[usize]], lo: f64, hi: f64) -> ParamSet {
    let mut p = ParamSet::new();
    for (i, s) in shapes.iter().enumerate() {
        p.push(format!("p{i}"), Tensor::uniform(s, lo, hi, rng)).unwrap();
    }
    p
}

/// `sum(out * R)` with a fixed random `R`, so every output entry matters.
fn project(g: &mut Graph, out: NodeId, seed: u64) -> Result<NodeId> {
    let mut rng = rng_stream(seed, 0x7e);
    let r = g.constant(Tensor::uniform(g.value(out).shape(), -1.0, 1.0, &mut rng));
    let m = g.mul(out, r)?;
    Ok(g.sum(m))
}

macro_rules! case {
    ($op:expr, $p:expr, |$g:ident, $x:ident| $body:expr) => {
        OpCase {
            op: $op,
            params: $p,
            loss: Box::new(move |$g: &mut Graph, $x: &[NodeId]| -> Result<NodeId> {
                let out: NodeId = $body;
                project($g, out, 1)
            }),
        }
    };
}

/// One case per differentiable op kind.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = rng_stream(seed, 0xfd);
    let r = &mut rng;
    let v5: &[usize] = &[2, 3, 3, 4, 2];
    vec![
        case!("add", params(r, &[&[3, 4], &[3, 4]], -1.0, 1.0), |g, x| g.add(x[0], x[1])?),
        case!("sub", params(r, &[&[3, 4], &[3, 4]], -1.0, 1.0), |g, x| g.sub(x[0], x[1])?),
        case!("mul", params(r, &[&[3, 4], &[3, 4]], -1.0, 1.0), |g, x| g.mul(x[0], x[1])?),
        case!("scale", params(r, &[&[5]], -1.0, 1.0), |g, x| g.scale(x[0], -2.5)),
        case!("matmul", params(r, &[&[3, 4], &[4, 2]], -1.0, 1.0), |g, x| g.matmul(x[0], x[1])?),
        case!("reshape", params(r, &[&[3, 4]], -1.0, 1.0), |g, x| g.reshape(x[0], &[2, 6])?),
        case!("pad", params(r, &[&[2, 3]], -1.0, 1.0), |g, x| g.pad(x[0], &[(1, 0), (2, 1)])?),
        case!("slice", params(r, &[&[4, 5]], -1.0, 1.0), |g, x| g.slice(x[0], &[1, 2], &[2, 3])?),
        case!("concat", params(r, &[&[2, 3], &[2, 2]], -1.0, 1.0), |g, x| g.concat(&[x[0], x[1]], 1)?),
        case!("sum", params(r, &[&[3, 2]], -1.0, 1.0), |g, x| {
            let s = g.sum(x[0]);
            g.mul(s, s)?
        }),
        case!("mean", params(r, &[&[3, 2]], -1.0, 1.0), |g, x| {
            let s = g.mean(x[0]);
            g.mul(s, s)?
        }),
        case!("mean_last", params(r, &[&[3, 4]], -1.0, 1.0), |g, x| g.mean_last(x[0])),
        case!("exp", params(r, &[&[6]], -1.0, 1.0), |g, x| g.exp(x[0])),
        case!("log", params(r, &[&[6]], 0.5, 2.0), |g, x| g.log(x[0])),
        case!("sigmoid", params(r, &[&[6]], -2.0, 2.0), |g, x| g.sigmoid(x[0])),
        case!("tanh", params(r, &[&[6]], -2.0, 2.0), |g, x| g.tanh(x[0])),
        case!("leaky_relu", params(r, &[&[6]], -2.0, 2.0), |g, x| g.leaky_relu(x[0], 0.2)),
        case!("softplus", params(r, &[&[6]], -3.0, 3.0), |g, x| g.softplus(x[0])),
        case!("pow", params(r, &[&[6]], 0.5, 2.0), |g, x| g.powf(x[0], -0.5)),
        case!("conv", params(r, &[&[1, 3, 4, 5, 2], &[3, 2, 2, 3, 2]], -1.0, 1.0), |g, x| g
            .conv(x[0], x[1], ConvGeom::new([1, 2, 1], [1, 1, 0]))?),
        case!("add_channel", params(r, &[v5, &[2]], -1.0, 1.0), |g, x| g.add_channel(x[0], x[1])?),
        case!("mul_channel", params(r, &[v5, &[2]], -1.0, 1.0), |g, x| g.mul_channel(x[0], x[1])?),
        case!("channel_mean", params(r, &[v5], -1.0, 1.0), |g, x| {
            let m = g.channel_mean(x[0]);
            g.mul(m, m)?
        }),
        case!("mul_scalar", params(r, &[&[3, 4], &[1]], 0.5, 1.5), |g, x| g.mul_scalar(x[0], x[1])?),
        case!("temporal_shift", params(r, &[&[1, 4, 2, 2, 4]], -1.0, 1.0), |g, x| g.temporal_shift(x[0], 1, 1)?),
        case!("upsample", params(r, &[&[1, 2, 2, 2, 1]], -1.0, 1.0), |g, x| g.upsample(x[0], 2)?),
        case!("log_softmax", params(r, &[&[3, 4]], -2.0, 2.0), |g, x| g.log_softmax(x[0])),
    ]
}

/// Relative error between reverse-mode and central-difference gradients,
/// optionally with the reverse rule of `fault` corrupted.
pub fn fd_gradient_error(case: &OpCase, fault: Option<&str>) -> Result<f64> {
    let mut g = Graph::new();
    if let Some(k) = fault {
        g = g.with_fault(k);
    }
    let ids = case.params.register(&mut g, None)?;
    let loss = (case.loss)(&mut g, &ids)?;
    g.backward(loss)?;
    let mut ad = Vec::with_capacity(case.params.total_dim());
    for (i, &id) in ids.iter().enumerate() {
        match g.adjoint(id) {
            Some(a) => ad.extend_from_slice(a.data()),
            None => ad.extend(std::iter::repeat_n(0.0, case.params.tensor(i).len())),
        }
    }
    let eval = |flat: &[f64]| -> Result<f64> {
        let p = case.params.unflatten(flat)?;
        let mut g = Graph::new();
        let ids = p.register_constant(&mut g);
        let l = (case.loss)(&mut g, &ids)?;
        g.value(l).item()
    };
    let mut x = case.params.flatten();
    let mut fd = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + FD_EPS;
        let up = eval(&x)?;
        x[i] = x0 - FD_EPS;
        let dn = eval(&x)?;
        x[i] = x0;
        fd.push((up - dn) / (2.0 * FD_EPS));
    }
    Ok(rel_err(&ad, &fd))
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

/// Direct-loop 3D convolution over channels-last input and
/// `[C_out, C_in, k_t, k_h, k_w]` kernels.
pub fn naive_conv(x: &Tensor, w: &Tensor, stride: [usize; 3], pad: [usize; 3]) -> Result<Tensor> {
    let &[b, t, h, wd, ci] = x.shape() else {
        return Err(Error::invalid("naive_conv expects a rank-5 input"));
    };
    let &[co, ci2, kt, kh, kw] = w.shape() else {
        return Err(Error::invalid("naive_conv expects a rank-5 kernel"));
    };
    if ci != ci2 {
        return Err(Error::shape("naive_conv", x.shape(), w.shape()));
    }
    let out = |n: usize, k: usize, s: usize, p: usize| (n + 2 * p - k) / s + 1;
    let (ot, oh, ow) = (out(t, kt, stride[0], pad[0]), out(h, kh, stride[1], pad[1]), out(wd, kw, stride[2], pad[2]));
    let mut y = Tensor::zeros(&[b, ot, oh, ow, co]);
    for n in 0..b {
        for a in 0..ot {
            for i in 0..oh {
                for j in 0..ow {
                    for o in 0..co {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for dt in 0..kt {
                                for di in 0..kh {
                                    for dj in 0..kw {
                                        let ti = (a * stride[0] + dt) as isize - pad[0] as isize;
                                        let hi = (i * stride[1] + di) as isize - pad[1] as isize;
                                        let wi = (j * stride[2] + dj) as isize - pad[2] as isize;
                                        if ti < 0 || hi < 0 || wi < 0 || ti >= t as isize || hi >= h as isize || wi >= wd as isize
                                        {
                                            continue;
                                        }
                                        acc += x.get(&[n, ti as usize, hi as usize, wi as usize, c]) * w.get(&[o, c, dt, di, dj]);
                                    }
                                }
                            }
                        }
                        y.set(&[n, a, i, j, o], acc);
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Dense kernel of a linear factorized pair:
/// `W[o, c, t, i, j] = sum_m T[o, m, t] S[m, c, i, j]`.
pub fn compose_factorized(k: &FactorizedKernels) -> Tensor {
    let s = k.spatial.shape();
    let tt = k.temporal.shape();
    let (mid, ci, kh, kw) = (s[0], s[1], s[3], s[4]);
    let (co, kt) = (tt[0], tt[2]);
    let mut w = Tensor::zeros(&[co, ci, kt, kh, kw]);
    for o in 0..co {
        for c in 0..ci {
            for t in 0..kt {
                for i in 0..kh {
                    for j in 0..kw {
                        let v: f64 = (0..mid)
                            .map(|m| k.temporal.get(&[o, m, t, 0, 0]) * k.spatial.get(&[m, c, 0, i, j]))
                            .sum();
                        w.set(&[o, c, t, i, j], v);
                    }
                }
            }
        }
    }
    w
}

fn check_conv(seed: u64) -> Result<(bool, String)> {
    let mut rng = rng_stream(seed, 0xc0);
    let mut worst = 0.0f64;
    for _ in 0..6 {
        let k = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let s = [rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2)];
        let p = [rng.random_range(0..k[0]), rng.random_range(0..k[1]), rng.random_range(0..k[2])];
        let (ci, co) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let x = Tensor::uniform(&[2, 5, 6, 5, ci], -1.0, 1.0, &mut rng);
        let w = Tensor::uniform(&[co, ci, k[0], k[1], k[2]], -1.0, 1.0, &mut rng);
        worst = worst.max(conv_nd(&x, &w, s, p)?.max_abs_diff(&naive_conv(&x, &w, s, p)?));
    }
    Ok((worst < 1e-12, format!("max abs diff {worst:.2e} over 6 geometries")))
}

fn check_factorization(seed: u64, cases: usize) -> Result<(bool, String)> {
    let mut rng = rng_stream(seed, 0xfa);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (ci, mid, co) = (rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3));
        let k = FactorizedKernels {
            spatial: Tensor::uniform(&[mid, ci, 1, 3, 3], -1.0, 1.0, &mut rng),
            temporal: Tensor::uniform(&[co, mid, 3, 1, 1], -1.0, 1.0, &mut rng),
        };
        let x = Tensor::uniform(&[1, 6, 6, 6, ci], -1.0, 1.0, &mut rng);
        let (s, p) = ([1, 2, 2], [1, 1, 1]);
        let f = factorized_conv(&x, &k, s, p, 1.0)?;
        let d = conv_nd(&x, &compose_factorized(&k), s, p)?;
        worst = worst.max(f.max_abs_diff(&d));
    }
    // Single-channel case through the Kronecker form.
    let a = Tensor::uniform(&[3, 3], -1.0, 1.0, &mut rng);
    let b = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
    let kr = kron_kernel(&a, &b)?;
    let mut w = Tensor::zeros(&[1, 1, 3, 3, 3]);
    for t in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                w.set(&[0, 0, t, i, j], kr.get(&[i, j, t]));
            }
        }
    }
    let k = FactorizedKernels {
        spatial: a.reshape(&[1, 1, 1, 3, 3])?,
        temporal: b.reshape(&[1, 1, 3, 1, 1])?,
    };
    let x = Tensor::uniform(&[1, 5, 5, 5, 1], -1.0, 1.0, &mut rng);
    worst = worst.max(factorized_conv(&x, &k, [1; 3], [1; 3], 1.0)?.max_abs_diff(&conv_nd(&x, &w, [1; 3], [1; 3])?));
    Ok((worst < 1e-9, format!("max abs diff {worst:.2e} over {cases} kernels + Kronecker case")))
}

/// Discriminator loss of a small preset on fixed random batches.
pub fn tiny_d_loss(preset: &str, seed: u64) -> Result<(Network, LossFn)> {
    let spec = presets::toy(preset, None, 1)?;
    let d = Network::build(&spec, seed)?;
    let mut rng = rng_stream(seed, 0xda);
    let shape = spec.input.batched(3);
    let real = Tensor::uniform(&shape, -1.0, 1.0, &mut rng);
    let fake = Tensor::uniform(&shape, -1.0, 1.0, &mut rng);
    let net = d.clone();
    let f: LossFn = Box::new(move |g: &mut Graph, p: &[NodeId]| {
        let r = g.constant(real.clone());
        let fk = g.constant(fake.clone());
        let dr = net.logits(g, p, r, BnMode::Frozen)?.output;
        let df = net.logits(g, p, fk, BnMode::Frozen)?.output;
        d_loss(g, dr, df)
    });
    Ok((d, f))
}

fn check_hvp(seed: u64) -> Result<(bool, String)> {
    let (d, f) = tiny_d_loss("tiny-3d", seed)?;
    let p = d.params();
    let h = dense_hessian(p, &f)?;
    let n = h.len();
    // Columns against central differences of the gradient.
    let eps = 1e-4;
    let grad_at = |x: &[f64]| -> Result<Vec<f64>> { Ok(crate::autodiff::grad_flat(&p.unflatten(x)?, &f)?.1) };
    let x = p.flatten();
    let mut worst_fd = 0.0f64;
    for j in (0..n).step_by((n / 12).max(1)) {
        let mut up = x.clone();
        up[j] += eps;
        let mut dn = x.clone();
        dn[j] -= eps;
        let (gu, gd) = (grad_at(&up)?, grad_at(&dn)?);
        let col: Vec<f64> = gu.iter().zip(&gd).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        worst_fd = worst_fd.max(rel_err(&h[j], &col));
    }
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((h[i][j] - h[j][i]).abs());
        }
    }
    Ok((
        worst_fd < 1e-4 && asym < 1e-8,
        format!("{n} params: FD column rel err {worst_fd:.2e}, max asymmetry {asym:.2e}"),
    ))
}

fn check_svd(seed: u64) -> Result<(bool, String)> {
    let mut rng = rng_stream(seed, 0x5d);
    let m = Tensor::uniform(&[8, 27], -1.0, 1.0, &mut rng);
    let c = svd_clip(&m, 1.0)?;
    let sig = singular_values(&c)?;
    let top = sig.iter().copied().fold(0.0, f64::max);
    let again = svd_clip(&c, 1.0)?.max_abs_diff(&c);
    let before = singular_values(&m)?;
    let kept = before
        .iter()
        .zip(&sig)
        .filter(|(b, _)| **b <= 1.0)
        .map(|(b, a)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((
        top <= 1.0 + 1e-9 && again < 1e-12 && kept < 1e-12,
        format!("σ_max after clip {top:.12}, idempotence diff {again:.1e}"),
    ))
}

fn check_lanczos(seed: u64) -> Result<(bool, String)> {
    let mut rng = rng_stream(seed, 0x1a);
    let n = 150;
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let s = (&a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    let op = |v: &[f64]| -> Result<Vec<f64>> { Ok((&s * nalgebra::DVector::from_column_slice(v)).iter().copied().collect()) };
    let r = lanczos_extremal(op, n, 10, n, seed)?;
    let worst = compare_extremes(&r.top(10), &r.bottom(10), &ev);
    // A real network Hessian through hessian_spectrum.
    let (d, f) = tiny_d_loss("tiny-3d", seed)?;
    let h = dense_hessian(d.params(), &f)?;
    let m = d.params().total_dim();
    let hm = DMatrix::from_fn(m, m, |i, j| 0.5 * (h[i][j] + h[j][i]));
    let mut hev: Vec<f64> = SymmetricEigen::new(hm).eigenvalues.iter().copied().collect();
    hev.sort_by(|x, y| y.total_cmp(x));
    let cfg = SpectrumConfig {
        k: 10,
        max_iters: Some(m),
        seed,
    };
    let rr = hessian_spectrum(d.params(), &f, &cfg)?;
    let worst_net = compare_extremes(&rr.top(10), &rr.bottom(10), &hev);
    Ok((
        worst < 1e-8 && worst_net < 1e-8,
        format!("rel err {worst:.1e} on a {n}-dim operator, {worst_net:.1e} on a {m}-param Hessian"),
    ))
}

/// Worst relative error of the top and bottom Ritz values against sorted
/// (descending) reference eigenvalues.
pub fn compare_extremes(top: &[f64], bottom: &[f64], desc: &[f64]) -> f64 {
    let scale = desc.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let t = top.iter().zip(desc).map(|(a, b)| (a - b).abs() / b.abs().max(1e-3 * scale));
    let b = bottom.iter().zip(desc.iter().rev()).map(|(a, b)| (a - b).abs() / b.abs().max(1e-3 * scale));
    t.chain(b).fold(0.0, f64::max)
}

fn check_metrics() -> Result<(bool, String)> {
    let same = vec![vec![0.1, 0.6, 0.3]; 9];
    let is1 = inception_style_score(&same)?;
    let hot: Vec<Vec<f64>> = (0..12).map(|i| (0..3).map(|c| (i % 3 == c) as u8 as f64).collect()).collect();
    let isc = inception_style_score(&hot)?;
    let iso = |m: f64, v: f64, n: usize| {
        let mut cov = vec![0.0; n * n];
        (0..n).for_each(|i| cov[i * n + i] = v);
        FeatureStats::new(vec![m; n], cov, 2)
    };
    let n = 6;
    let fd_mean = frechet_distance(&iso(0.0, 0.7, n)?, &iso(1.5, 0.7, n)?)?;
    let fd_cov = frechet_distance(&iso(0.0, 2.0, n)?, &iso(0.0, 5.0, n)?)?;
    let want_cov = n as f64 * (2f64.sqrt() - 5f64.sqrt()).powi(2);
    let errs = [
        (is1 - 1.0).abs(),
        (isc - 3.0).abs(),
        (fd_mean - 1.5 * 1.5 * n as f64).abs(),
        (fd_cov - want_cov).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok((worst < 1e-8, format!("IS {is1:.12} / {isc:.12}, max closed-form error {worst:.1e}")))
}

fn check_conformance() -> Result<(bool, String)> {
    let rows = presets::conformance_table()?;
    let bad: Vec<&str> = rows.iter().filter(|r| !r.matches()).map(|r| r.preset).collect();
    let red = presets::reduction_table()?;
    let worst = red
        .iter()
        .map(|r| (r.computed_percent - r.published_percent).abs())
        .fold(0.0, f64::max);
    Ok((
        bad.is_empty() && worst <= 1.0,
        if bad.is_empty() {
            format!("{} counts match at 0.1M; reductions within {worst:.2} points", rows.len())
        } else {
            format!("mismatched: {}", bad.join(", "))
        },
    ))
}

/// Every check, in a fixed order.
pub fn run_all(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for case in op_cases(seed) {
        let name = format!("gradient-fd/{}", case.op);
        out.push(match fd_gradient_error(&case, None) {
            Ok(e) => Check::new(name, e < FD_TOL, format!("rel err {e:.2e}")),
            Err(e) => Check::new(name, false, format!("error: {e}")),
        });
    }
    out.push(fault_self_test(seed, "conv"));
    out.push(Check::from_result("conv-vs-direct-loops", check_conv(seed)));
    out.push(Check::from_result("factorized-vs-dense-conv", check_factorization(seed, 50)));
    out.push(Check::from_result("hvp-vs-dense-hessian", check_hvp(seed)));
    out.push(Check::from_result("svd-clip", check_svd(seed)));
    out.push(Check::from_result("lanczos-vs-eigensolve", check_lanczos(seed)));
    out.push(Check::from_result("metric-identities", check_metrics()));
    out.push(Check::from_result(
        "surrogate-checksum",
        Surrogate::bundled().map(|_| (true, "bundled weights verified".to_string())),
    ));
    out.push(Check::from_result("parameter-conformance", check_conformance()));
    out
}

/// Corrupt the reverse rule of `op` and confirm the finite-difference check
/// notices, naming the op.
pub fn fault_self_test(seed: u64, op: &str) -> Check {
    let name = format!("gradient-fd-self-test/{op}");
    let Some(case) = op_cases(seed).into_iter().find(|c| c.op == op) else {
        return Check::new(name, false, format!("no case for op {op:?}"));
    };
    match fd_gradient_error(&case, Some(op)) {
        Ok(e) if e >= FD_TOL => Check::new(name, true, format!("corrupted {op} rule detected (rel err {e:.2e})")),
        Ok(e) => Check::new(name, false, format!("corrupted {op} rule went unnoticed (rel err {e:.2e})")),
        Err(e) => Check::new(name, false, format!("error: {e}")),
    }
}
