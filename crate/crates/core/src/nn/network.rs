//! A built [`NetSpec`]: parameters, batch-norm statistics and optional
//! spectral-normalization state, plus the graph forward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ops::{gru_cell, GruNodes};
use super::spec::{Activation, LayerKind, LayerSpec, NetSpec, Norm, Shape};
use crate::autodiff::{ConvGeom, Graph, NodeId, ParamSet};
use crate::error::{Error, Result};
use crate::lipschitz::{reshape_to_matrix, SpectralState, WARMUP_POWER_ITERS};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with the current batch's statistics.
    Train,
    /// Normalize with running statistics held constant.
    Frozen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Batch statistics observed by a train-mode forward pass, per layer.
pub type BatchStats = Vec<Option<(Vec<f64>, Vec<f64>)>>;

#[derive(Clone, Debug, Default)]
struct Slots {
    weight: Option<usize>,
    bias: Option<usize>,
    weight_t: Option<usize>,
    bias_t: Option<usize>,
    gamma: Option<usize>,
    beta: Option<usize>,
    gru: Option<[usize; 4]>,
}

#[derive(Clone, Debug)]
pub struct Network {
    spec: NetSpec,
    params: ParamSet,
    shapes: Vec<(Shape, Shape)>,
    slots: Vec<Slots>,
    bn: Vec<Option<BnState>>,
    spectral: Option<Vec<Option<SpectralState>>>,
}

pub struct ForwardOut {
    pub output: NodeId,
    pub batch_stats: BatchStats,
}

pub(crate) fn kaiming_uniform(shape: &[usize], fan_in: usize, slope: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let gain = (2.0 / (1.0 + slope * slope)).sqrt();
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

impl Network {
    /// Allocate and initialize every learnable tensor implied by `spec`.
    pub fn build(spec: &NetSpec, seed: u64) -> Result<Network> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut slots = Vec::with_capacity(spec.layers.len());
        let mut bn = Vec::with_capacity(spec.layers.len());
        for (l, &(inp, out)) in spec.layers.iter().zip(&shapes) {
            let mut s = Slots::default();
            let (cin, cout) = (inp.c, out.c);
            let [kt, kh, kw] = l.kernel3();
            let name = &l.name;
            match l.kind {
                LayerKind::Conv3d | LayerKind::Conv2d | LayerKind::Conv1dTemporal => {
                    let w = kaiming_uniform(&[cout, cin, kt, kh, kw], cin * kt * kh * kw, spec.slope, &mut rng);
                    s.weight = Some(params.push(format!("{name}.weight"), w)?);
                    if l.bias {
                        s.bias = Some(params.push(format!("{name}.bias"), Tensor::zeros(&[cout]))?);
                    }
                }
                LayerKind::FactorizedConv => {
                    let w = kaiming_uniform(&[cout, cin, 1, kh, kw], cin * kh * kw, spec.slope, &mut rng);
                    s.weight = Some(params.push(format!("{name}.spatial.weight"), w)?);
                    if l.bias {
                        s.bias = Some(params.push(format!("{name}.spatial.bias"), Tensor::zeros(&[cout]))?);
                    }
                    let w = kaiming_uniform(&[cout, cout, kt, 1, 1], cout * kt, spec.slope, &mut rng);
                    s.weight_t = Some(params.push(format!("{name}.temporal.weight"), w)?);
                    if l.bias {
                        s.bias_t = Some(params.push(format!("{name}.temporal.bias"), Tensor::zeros(&[cout]))?);
                    }
                }
                LayerKind::Linear => {
                    let fan_in = inp.numel();
                    let w = kaiming_uniform(&[fan_in, cout], fan_in, spec.slope, &mut rng);
                    s.weight = Some(params.push(format!("{name}.weight"), w)?);
                    if l.bias {
                        s.bias = Some(params.push(format!("{name}.bias"), Tensor::zeros(&[cout]))?);
                    }
                }
                LayerKind::Gru => {
                    let k = 1.0 / (cout as f64).sqrt();
                    let w_ih = params.push(format!("{name}.w_ih"), Tensor::uniform(&[cin, 3 * cout], -k, k, &mut rng))?;
                    let w_hh = params.push(format!("{name}.w_hh"), Tensor::uniform(&[cout, 3 * cout], -k, k, &mut rng))?;
                    let (b_ih, b_hh) = if l.bias {
                        (
                            params.push(format!("{name}.b_ih"), Tensor::uniform(&[3 * cout], -k, k, &mut rng))?,
                            params.push(format!("{name}.b_hh"), Tensor::uniform(&[3 * cout], -k, k, &mut rng))?,
                        )
                    } else {
                        return Err(Error::invalid(format!(
                            "GRU layer {name:?} must carry biases"
                        )));
                    };
                    s.gru = Some([w_ih, w_hh, b_ih, b_hh]);
                }
                LayerKind::BatchNorm => {
                    s.gamma = Some(params.push(format!("{name}.gamma"), Tensor::ones(&[cin]))?);
                    s.beta = Some(params.push(format!("{name}.beta"), Tensor::zeros(&[cin]))?);
                }
                LayerKind::TemporalShift | LayerKind::LeakyRelu => {}
            }
            if l.norm == Some(Norm::BatchNorm) {
                s.gamma = Some(params.push(format!("{name}.bn.gamma"), Tensor::ones(&[cout]))?);
                s.beta = Some(params.push(format!("{name}.bn.beta"), Tensor::zeros(&[cout]))?);
            }
            bn.push(s.gamma.map(|_| BnState {
                running_mean: vec![0.0; out.c],
                running_var: vec![1.0; out.c],
            }));
            slots.push(s);
        }
        let net = Network {
            spec: spec.clone(),
            params,
            shapes,
            slots,
            bn,
            spectral: None,
        };
        debug_assert_eq!(net.params.total_dim(), spec.count_params()?);
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn set_params(&mut self, p: ParamSet) -> Result<()> {
        let same = p.len() == self.params.len()
            && p
                .entries()
                .iter()
                .zip(self.params.entries())
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape());
        if !same {
            return Err(Error::invalid("parameter set does not match network layout"));
        }
        self.params = p;
        Ok(())
    }

    pub fn count_params(&self) -> usize {
        self.params.total_dim()
    }

    pub fn input_shape(&self) -> Shape {
        self.spec.input
    }

    pub fn output_shape(&self) -> Shape {
        self.shapes.last().unwrap().1
    }

    pub fn bn_states(&self) -> &[Option<BnState>] {
        &self.bn
    }

    /// Conv, linear and GRU weight matrices (the tensors Lipschitz control acts on).
    pub fn matrix_param_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for s in &self.slots {
            out.extend(s.weight);
            out.extend(s.weight_t);
            if let Some(g) = s.gru {
                out.extend([g[0], g[1]]);
            }
        }
        out
    }

    pub fn bn_scale_indices(&self) -> Vec<usize> {
        self.slots.iter().filter_map(|s| s.gamma).collect()
    }

    /// Turn on spectral normalization of every conv/linear weight.
    pub fn enable_spectral_norm(&mut self, seed: u64) -> Result<()> {
        let mut states = vec![None; self.params.len()];
        for (k, idx) in self.matrix_param_indices().into_iter().enumerate() {
            let rows = reshape_to_matrix(self.params.tensor(idx))?.shape()[0];
            states[idx] = Some(SpectralState::new(rows, seed.wrapping_add(k as u64)));
        }
        self.spectral = Some(states);
        Ok(())
    }

    pub fn spectral_enabled(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn spectral_state(&self, param_index: usize) -> Option<&SpectralState> {
        self.spectral.as_ref()?.get(param_index)?.as_ref()
    }

    /// Advance every power-iteration state; fresh states get a longer warm-up.
    pub fn spectral_step(&mut self, power_iters: usize) -> Result<()> {
        let Some(states) = self.spectral.as_mut() else {
            return Ok(());
        };
        for (idx, st) in states.iter_mut().enumerate() {
            if let Some(st) = st {
                let iters = if st.iterations() == 0 {
                    WARMUP_POWER_ITERS.max(power_iters)
                } else {
                    power_iters
                };
                st.step(&reshape_to_matrix(self.params.tensor(idx))?, iters)?;
            }
        }
        Ok(())
    }

    /// Fold train-mode batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, stats: &BatchStats) {
        for (st, obs) in self.bn.iter_mut().zip(stats) {
            if let (Some(st), Some((m, v))) = (st.as_mut(), obs) {
                for (r, x) in st.running_mean.iter_mut().zip(m) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * x;
                }
                for (r, x) in st.running_var.iter_mut().zip(v) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * x;
                }
            }
        }
    }

    fn weight_node(&self, g: &mut Graph, p: &[NodeId], idx: usize) -> Result<NodeId> {
        let w = p[idx];
        let Some(st) = self.spectral_state(idx) else {
            return Ok(w);
        };
        let shape = g.value(w).shape().to_vec();
        let m = reshape_to_matrix(g.value(w))?;
        let (rows, cols) = (m.shape()[0], m.shape()[1]);
        let est = st.estimate(&m)?;
        if est.floored {
            let inv = g.constant(Tensor::scalar(1.0 / est.sigma));
            return g.mul_scalar(w, inv);
        }
        let wm = g.reshape(w, &[rows, cols])?;
        let v = g.constant(Tensor::new(vec![cols, 1], est.v)?);
        let u = g.constant(Tensor::new(vec![rows, 1], st.u().to_vec())?);
        let wv = g.matmul(wm, v)?;
        let uwv = g.mul(wv, u)?;
        let sigma = g.sum(uwv);
        let inv = g.powf(sigma, -1.0);
        let wn = g.mul_scalar(w, inv)?;
        g.reshape(wn, &shape)
    }

    /// Run the network on a `[B, T, H, W, C]` node; `p` holds one leaf per
    /// parameter tensor in [`Network::params`] order.
    pub fn forward(&self, g: &mut Graph, p: &[NodeId], x: NodeId, mode: BnMode) -> Result<ForwardOut> {
        if p.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "network {:?} has {} parameter tensors, got {} nodes",
                self.spec.name,
                self.params.len(),
                p.len()
            )));
        }
        let xs = g.value(x).shape().to_vec();
        let b = xs[0];
        if xs.len() != 5 || xs[1..] != self.spec.input.batched(b)[1..] {
            return Err(Error::shape("network input", &xs, &self.spec.input.batched(b)));
        }
        let slope = self.spec.slope;
        let mut h = x;
        let mut stats = Vec::with_capacity(self.spec.layers.len());
        for (i, l) in self.spec.layers.iter().enumerate() {
            let s = &self.slots[i];
            let (inp, out) = self.shapes[i];
            let mut layer_stats = None;
            h = match l.kind {
                LayerKind::Conv3d | LayerKind::Conv2d | LayerKind::Conv1dTemporal => {
                    let w = self.weight_node(g, p, s.weight.unwrap())?;
                    let y = g.conv(h, w, ConvGeom::new(l.stride3(), l.pad3()))?;
                    match s.bias {
                        Some(bi) => g.add_channel(y, p[bi])?,
                        None => y,
                    }
                }
                LayerKind::FactorizedConv => {
                    let [st, sh, sw] = l.stride3();
                    let [pt, ph, pw] = l.pad3();
                    let w = self.weight_node(g, p, s.weight.unwrap())?;
                    let mut y = g.conv(h, w, ConvGeom::new([1, sh, sw], [0, ph, pw]))?;
                    if let Some(bi) = s.bias {
                        y = g.add_channel(y, p[bi])?;
                    }
                    y = g.leaky_relu(y, slope);
                    let wt = self.weight_node(g, p, s.weight_t.unwrap())?;
                    y = g.conv(y, wt, ConvGeom::new([st, 1, 1], [pt, 0, 0]))?;
                    match s.bias_t {
                        Some(bi) => g.add_channel(y, p[bi])?,
                        None => y,
                    }
                }
                LayerKind::TemporalShift => {
                    let sh = l.shift.unwrap();
                    g.temporal_shift(h, sh.fold(inp.c), sh.steps as isize)?
                }
                LayerKind::LeakyRelu => g.leaky_relu(h, slope),
                LayerKind::BatchNorm => {
                    let (y, st) = self.batch_norm(g, p, h, i, mode)?;
                    layer_stats = st;
                    y
                }
                LayerKind::Linear => {
                    let flat = g.reshape(h, &[b, inp.numel()])?;
                    let w = self.weight_node(g, p, s.weight.unwrap())?;
                    let mut y = g.matmul(flat, w)?;
                    if let Some(bi) = s.bias {
                        y = g.add_channel(y, p[bi])?;
                    }
                    g.reshape(y, &out.batched(b))?
                }
                LayerKind::Gru => self.gru_forward(g, p, h, s, inp, out, b)?,
            };
            if l.norm == Some(Norm::BatchNorm) {
                let (y, st) = self.batch_norm(g, p, h, i, mode)?;
                layer_stats = st;
                h = y;
            }
            h = match l.activation {
                Some(Activation::LeakyRelu) => g.leaky_relu(h, slope),
                Some(Activation::Tanh) => g.tanh(h),
                Some(Activation::Sigmoid) => g.sigmoid(h),
                None => h,
            };
            stats.push(layer_stats);
        }
        Ok(ForwardOut {
            output: h,
            batch_stats: stats,
        })
    }

    /// Forward pass flattened to `[B, P]` logits.
    pub fn logits(&self, g: &mut Graph, p: &[NodeId], x: NodeId, mode: BnMode) -> Result<ForwardOut> {
        let b = g.value(x).shape()[0];
        let out = self.forward(g, p, x, mode)?;
        let n = self.output_shape().numel();
        let output = g.reshape(out.output, &[b, n])?;
        Ok(ForwardOut {
            output,
            batch_stats: out.batch_stats,
        })
    }

    /// Evaluate on plain tensors with frozen parameters.
    pub fn forward_value(&self, x: &Tensor, mode: BnMode) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.register_constant(&mut g);
        let xn = g.constant(x.clone());
        let out = self.forward(&mut g, &p, xn, mode)?;
        Ok(g.value(out.output).clone())
    }

    fn batch_norm(
        &self,
        g: &mut Graph,
        p: &[NodeId],
        x: NodeId,
        layer: usize,
        mode: BnMode,
    ) -> Result<(NodeId, Option<(Vec<f64>, Vec<f64>)>)> {
        let s = &self.slots[layer];
        let (gamma, beta) = (p[s.gamma.unwrap()], p[s.beta.unwrap()]);
        let c = *g.value(x).shape().last().unwrap();
        let (normed, stats) = match mode {
            BnMode::Train => {
                let mu = g.channel_mean(x);
                let neg = g.scale(mu, -1.0);
                let xc = g.add_channel(x, neg)?;
                let sq = g.mul(xc, xc)?;
                let var = g.channel_mean(sq);
                let eps = g.constant(Tensor::full(&[c], BN_EPS));
                let ve = g.add(var, eps)?;
                let inv = g.powf(ve, -0.5);
                let stats = (g.value(mu).data().to_vec(), g.value(var).data().to_vec());
                (g.mul_channel(xc, inv)?, Some(stats))
            }
            BnMode::Frozen => {
                let st = self.bn[layer].as_ref().unwrap();
                let scale: Vec<f64> = st.running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let shift: Vec<f64> = st.running_mean.iter().zip(&scale).map(|(m, s)| -m * s).collect();
                let sc = g.constant(Tensor::vector(scale));
                let sh = g.constant(Tensor::vector(shift));
                let y = g.mul_channel(x, sc)?;
                (g.add_channel(y, sh)?, None)
            }
        };
        let y = g.mul_channel(normed, gamma)?;
        Ok((g.add_channel(y, beta)?, stats))
    }

    #[allow(clippy::too_many_arguments)]
    fn gru_forward(
        &self,
        g: &mut Graph,
        p: &[NodeId],
        x: NodeId,
        s: &Slots,
        inp: Shape,
        out: Shape,
        b: usize,
    ) -> Result<NodeId> {
        let [w_ih, w_hh, b_ih, b_hh] = s.gru.unwrap();
        let nodes = GruNodes {
            w_ih: self.weight_node(g, p, w_ih)?,
            w_hh: self.weight_node(g, p, w_hh)?,
            b_ih: p[b_ih],
            b_hh: p[b_hh],
        };
        let mut h = g.constant(Tensor::zeros(&[b, out.c]));
        let mut outs = Vec::with_capacity(inp.t);
        for t in 0..inp.t {
            let xt = g.slice(x, &[0, t, 0, 0, 0], &[b, 1, 1, 1, inp.c])?;
            let xt = g.reshape(xt, &[b, inp.c])?;
            h = gru_cell(g, xt, h, nodes)?;
            outs.push(g.reshape(h, &[b, 1, 1, 1, out.c])?);
        }
        g.concat(&outs, 1)
    }
}

/// Layer spec lookup used by reports.
pub fn layer_of<'a>(spec: &'a NetSpec, name: &str) -> Option<&'a LayerSpec> {
    spec.layers.iter().find(|l| l.name == name)
}
