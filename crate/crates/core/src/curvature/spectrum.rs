use super::lanczos::{lanczos_extremal, LanczosResult};
use crate::autodiff::{hvp, Graph, NodeId, ParamSet};
use crate::error::{Error, Result};
use crate::gan::loss::d_loss;
use crate::nn::{BnMode, Network};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumConfig {
    /// Values kept at each end of the spectrum.
    pub k: usize,
    /// Lanczos steps; `None` means `4k + 20`. Clamped to the parameter count.
    pub max_iters: Option<usize>,
    pub seed: u64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            k: 10,
            max_iters: None,
            seed: 0,
        }
    }
}

impl SpectrumConfig {
    fn iters_for(&self, dim: usize) -> usize {
        self.max_iters.unwrap_or(4 * self.k + 20).min(dim).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRecord {
    pub iteration: usize,
    /// Largest Ritz values, descending.
    pub eigenvalues: Vec<f64>,
    /// Most negative Ritz values, ascending.
    pub bottom: Vec<f64>,
    /// Running maximum over the run so far.
    pub lambda_plus: f64,
    /// Running minimum over the run so far.
    pub lambda_minus: f64,
    pub breakdown: bool,
}

impl SpectrumRecord {
    fn from_lanczos(iteration: usize, r: &LanczosResult, k: usize) -> Self {
        let eigenvalues = r.top(k);
        let bottom = r.bottom(k);
        SpectrumRecord {
            iteration,
            lambda_plus: eigenvalues[0],
            lambda_minus: bottom[0],
            eigenvalues,
            bottom,
            breakdown: r.breakdown,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.eigenvalues
            .iter()
            .chain(&self.bottom)
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Leading Hessian eigenvalues of `loss_fn` with respect to `params`.
pub fn hessian_spectrum<F>(params: &ParamSet, loss_fn: F, cfg: &SpectrumConfig) -> Result<LanczosResult>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let dim = params.total_dim();
    if dim == 0 {
        return Err(Error::invalid("Hessian spectrum of an empty parameter set"));
    }
    let mut g = Graph::new();
    let leaves = params.register_constant(&mut g);
    let loss = loss_fn(&mut g, &leaves)?;
    let value = g.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss is {value} at the spectrum point")));
    }
    let iters = cfg.iters_for(dim);
    let k = cfg.k.clamp(1, iters);
    lanczos_extremal(|v| hvp(params, v, &loss_fn), dim, k, iters, cfg.seed)
}

/// Full Hessian built column by column from unit-vector products.
pub fn dense_hessian<F>(params: &ParamSet, loss_fn: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let n = params.total_dim();
    let mut cols = Vec::with_capacity(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        cols.push(hvp(params, &e, &loss_fn)?);
        e[j] = 0.0;
    }
    Ok(cols)
}

/// Spectrum of the discriminator loss in ψ with `real` and `fake` frozen.
/// Batch-norm runs on frozen running statistics.
pub fn discriminator_spectrum(
    d: &Network,
    real: &Tensor,
    fake: &Tensor,
    cfg: &SpectrumConfig,
    iteration: usize,
) -> Result<SpectrumRecord> {
    let loss_fn = |g: &mut Graph, p: &[NodeId]| -> Result<NodeId> {
        let r = g.constant(real.clone());
        let f = g.constant(fake.clone());
        let dr = d.logits(g, p, r, BnMode::Frozen)?.output;
        let df = d.logits(g, p, f, BnMode::Frozen)?.output;
        d_loss(g, dr, df)
    };
    let r = hessian_spectrum(d.params(), loss_fn, cfg)?;
    Ok(SpectrumRecord::from_lanczos(iteration, &r, cfg.k))
}

/// Discriminator state and batch captured at one training iteration.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub iteration: usize,
    pub d: Network,
    pub real: Tensor,
    pub fake: Tensor,
}

/// Analyze snapshots on up to `threads` workers. Each snapshot's Lanczos
/// start vector is seeded from `cfg.seed` and its iteration, so the result
/// does not depend on the thread count. Running extremes are filled in
/// iteration order.
pub fn analyze_snapshots(snaps: &[Snapshot], cfg: &SpectrumConfig, threads: usize) -> Result<Vec<SpectrumRecord>> {
    let threads = threads.clamp(1, snaps.len().max(1));
    let mut slots: Vec<Option<Result<SpectrumRecord>>> = (0..snaps.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = snaps.len().div_ceil(threads).max(1);
        for (snap_chunk, slot_chunk) in snaps.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (s, slot) in snap_chunk.iter().zip(slot_chunk) {
                    let c = SpectrumConfig {
                        seed: cfg.seed.wrapping_add(s.iteration as u64),
                        ..*cfg
                    };
                    *slot = Some(discriminator_spectrum(&s.d, &s.real, &s.fake, &c, s.iteration));
                }
            });
        }
    });
    let mut records = slots.into_iter().map(|s| s.expect("every slot filled")).collect::<Result<Vec<_>>>()?;
    track_running_extremes(&mut records);
    Ok(records)
}

/// Replace per-record extremes by running max / min over the sequence.
pub fn track_running_extremes(records: &mut [SpectrumRecord]) {
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for r in records {
        hi = hi.max(r.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        lo = lo.min(r.bottom.iter().copied().fold(f64::INFINITY, f64::min));
        r.lambda_plus = hi;
        r.lambda_minus = lo;
    }
}
