//! Raw numeric kernels behind the structured graph ops.
//!
//! Feature maps are channels-last `[B, T, H, W, C]`; convolution kernels are
//! `[C_out, C_in, k_t, k_h, k_w]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-axis stride and zero padding for a `(t, h, w)` correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeom {
    pub fn new(stride: [usize; 3], pad: [usize; 3]) -> Self {
        ConvGeom { stride, pad }
    }

    pub fn unit() -> Self {
        ConvGeom::new([1; 3], [0; 3])
    }

    /// Output extent along one axis, or `None` if the kernel overhangs the padded input.
    pub fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        if stride == 0 || input + 2 * pad < kernel {
            return None;
        }
        Some((input + 2 * pad - kernel) / stride + 1)
    }
}

struct Dims {
    b: usize,
    i: [usize; 3],
    ci: usize,
    k: [usize; 3],
    co: usize,
    o: [usize; 3],
}

fn dims(x_shape: &[usize], w_shape: &[usize], geom: &ConvGeom) -> Result<Dims> {
    if x_shape.len() != 5 || w_shape.len() != 5 || x_shape[4] != w_shape[1] {
        return Err(Error::shape("conv", x_shape, w_shape));
    }
    let i = [x_shape[1], x_shape[2], x_shape[3]];
    let k = [w_shape[2], w_shape[3], w_shape[4]];
    let mut o = [0; 3];
    for a in 0..3 {
        o[a] = ConvGeom::out_extent(i[a], k[a], geom.stride[a], geom.pad[a]).ok_or_else(|| {
            Error::invalid(format!(
                "kernel {k:?} larger than padded input {i:?} (pad {:?}) or zero stride",
                geom.pad
            ))
        })?;
    }
    Ok(Dims {
        b: x_shape[0],
        i,
        ci: x_shape[4],
        k,
        co: w_shape[0],
        o,
    })
}

/// `[C_out, C_in, kt, kh, kw]` -> `[kt, kh, kw, C_in, C_out]`.
fn kernel_to_tap_major(w: &Tensor) -> Vec<f64> {
    let s = w.shape();
    let (co, ci, kv) = (s[0], s[1], s[2] * s[3] * s[4]);
    let src = w.data();
    let mut out = vec![0.0; src.len()];
    for o in 0..co {
        for i in 0..ci {
            for k in 0..kv {
                out[(k * ci + i) * co + o] = src[(o * ci + i) * kv + k];
            }
        }
    }
    out
}

fn kernel_from_tap_major(t: &[f64], shape: &[usize]) -> Tensor {
    let (co, ci, kv) = (shape[0], shape[1], shape[2] * shape[3] * shape[4]);
    let mut out = vec![0.0; t.len()];
    for o in 0..co {
        for i in 0..ci {
            for k in 0..kv {
                out[(o * ci + i) * kv + k] = t[(k * ci + i) * co + o];
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("kernel shape")
}

/// Visit every (output offset, tap index, input offset) triple that lands inside the input.
fn for_each_tap(d: &Dims, geom: &ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
    let [it, ih, iw] = d.i;
    let [kt, kh, kw] = d.k;
    let [ot, oh, ow] = d.o;
    for b in 0..d.b {
        for to in 0..ot {
            for ho in 0..oh {
                for wo in 0..ow {
                    let out_off = (((b * ot + to) * oh + ho) * ow + wo) * d.co;
                    for a in 0..kt {
                        let ti = (to * geom.stride[0] + a) as isize - geom.pad[0] as isize;
                        if ti < 0 || ti >= it as isize {
                            continue;
                        }
                        for c in 0..kh {
                            let hi = (ho * geom.stride[1] + c) as isize - geom.pad[1] as isize;
                            if hi < 0 || hi >= ih as isize {
                                continue;
                            }
                            for e in 0..kw {
                                let wi = (wo * geom.stride[2] + e) as isize - geom.pad[2] as isize;
                                if wi < 0 || wi >= iw as isize {
                                    continue;
                                }
                                let in_off = (((b * it + ti as usize) * ih + hi as usize) * iw
                                    + wi as usize)
                                    * d.ci;
                                let tap = (a * kh + c) * kw + e;
                                f(out_off, tap, in_off);
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv_forward(x: &Tensor, w: &Tensor, geom: &ConvGeom) -> Result<Tensor> {
    let d = dims(x.shape(), w.shape(), geom)?;
    let wt = kernel_to_tap_major(w);
    let xd = x.data();
    let mut out = vec![0.0; d.b * d.o[0] * d.o[1] * d.o[2] * d.co];
    let (ci, co) = (d.ci, d.co);
    for_each_tap(&d, geom, |oo, tap, io| {
        let acc = &mut out[oo..oo + co];
        for i in 0..ci {
            let xv = xd[io + i];
            let wrow = &wt[(tap * ci + i) * co..(tap * ci + i + 1) * co];
            for (a, &wv) in acc.iter_mut().zip(wrow) {
                *a += xv * wv;
            }
        }
    });
    Tensor::new(vec![d.b, d.o[0], d.o[1], d.o[2], d.co], out)
}

/// Adjoint of `conv_forward` with respect to its input.
pub fn conv_grad_input(g: &Tensor, w: &Tensor, geom: &ConvGeom, x_shape: &[usize]) -> Result<Tensor> {
    let d = dims(x_shape, w.shape(), geom)?;
    let expect = [d.b, d.o[0], d.o[1], d.o[2], d.co];
    if g.shape() != expect {
        return Err(Error::shape("conv_grad_input", g.shape(), &expect));
    }
    let wt = kernel_to_tap_major(w);
    let gd = g.data();
    let mut gx = vec![0.0; x_shape.iter().product()];
    let (ci, co) = (d.ci, d.co);
    for_each_tap(&d, geom, |oo, tap, io| {
        let grow = &gd[oo..oo + co];
        for i in 0..ci {
            let wrow = &wt[(tap * ci + i) * co..(tap * ci + i + 1) * co];
            let s: f64 = grow.iter().zip(wrow).map(|(a, b)| a * b).sum();
            gx[io + i] += s;
        }
    });
    Tensor::new(x_shape.to_vec(), gx)
}

/// Adjoint of `conv_forward` with respect to its kernel.
pub fn conv_grad_weight(x: &Tensor, g: &Tensor, geom: &ConvGeom, w_shape: &[usize]) -> Result<Tensor> {
    let d = dims(x.shape(), w_shape, geom)?;
    let expect = [d.b, d.o[0], d.o[1], d.o[2], d.co];
    if g.shape() != expect {
        return Err(Error::shape("conv_grad_weight", g.shape(), &expect));
    }
    let xd = x.data();
    let gd = g.data();
    let mut gw = vec![0.0; w_shape.iter().product()];
    let (ci, co) = (d.ci, d.co);
    for_each_tap(&d, geom, |oo, tap, io| {
        let grow = &gd[oo..oo + co];
        for i in 0..ci {
            let xv = xd[io + i];
            let acc = &mut gw[(tap * ci + i) * co..(tap * ci + i + 1) * co];
            for (a, &gv) in acc.iter_mut().zip(grow) {
                *a += xv * gv;
            }
        }
    });
    Ok(kernel_from_tap_major(&gw, w_shape))
}

/// Channel-group temporal shift of a `[B, T, H, W, C]` map.
///
/// The first `fold` channels move forward by `steps` frames, the next `fold`
/// move backward, the rest stay. Vacated frames are zero.
pub fn temporal_shift(x: &Tensor, fold: usize, steps: isize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 5 {
        return Err(Error::invalid(format!(
            "temporal shift expects [B,T,H,W,C], got {s:?}"
        )));
    }
    let (b, t, hw, c) = (s[0], s[1], s[2] * s[3], s[4]);
    if fold == 0 || 2 * fold > c {
        return Ok(x.clone());
    }
    let xd = x.data();
    let mut out = xd.to_vec();
    for bi in 0..b {
        for ti in 0..t {
            for p in 0..hw {
                let base = ((bi * t + ti) * hw + p) * c;
                for ch in 0..2 * fold {
                    let dir = if ch < fold { steps } else { -steps };
                    let src = ti as isize - dir;
                    out[base + ch] = if src >= 0 && src < t as isize {
                        xd[((bi * t + src as usize) * hw + p) * c + ch]
                    } else {
                        0.0
                    };
                }
            }
        }
    }
    Tensor::new(s.to_vec(), out)
}

/// Nearest-neighbour spatial upsampling of a `[B, T, H, W, C]` map by `f`.
pub fn upsample_spatial(x: &Tensor, f: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 5 || f == 0 {
        return Err(Error::invalid(format!("upsample expects [B,T,H,W,C], got {s:?}")));
    }
    let (bt, h, w, c) = (s[0] * s[1], s[2], s[3], s[4]);
    let (oh, ow) = (h * f, w * f);
    let xd = x.data();
    let mut out = vec![0.0; bt * oh * ow * c];
    for n in 0..bt {
        for y in 0..oh {
            for xx in 0..ow {
                let src = ((n * h + y / f) * w + xx / f) * c;
                let dst = ((n * oh + y) * ow + xx) * c;
                out[dst..dst + c].copy_from_slice(&xd[src..src + c]);
            }
        }
    }
    Tensor::new(vec![s[0], s[1], oh, ow, c], out)
}

/// Adjoint of [`upsample_spatial`]: block sums.
pub fn upsample_spatial_adjoint(g: &Tensor, f: usize) -> Result<Tensor> {
    let s = g.shape();
    if s.len() != 5 || f == 0 || s[2] % f != 0 || s[3] % f != 0 {
        return Err(Error::invalid(format!("upsample adjoint on {s:?}")));
    }
    let (bt, oh, ow, c) = (s[0] * s[1], s[2], s[3], s[4]);
    let (h, w) = (oh / f, ow / f);
    let gd = g.data();
    let mut out = vec![0.0; bt * h * w * c];
    for n in 0..bt {
        for y in 0..oh {
            for xx in 0..ow {
                let src = ((n * oh + y) * ow + xx) * c;
                let dst = ((n * h + y / f) * w + xx / f) * c;
                for ch in 0..c {
                    out[dst + ch] += gd[src + ch];
                }
            }
        }
    }
    Tensor::new(vec![s[0], s[1], h, w, c], out)
}
