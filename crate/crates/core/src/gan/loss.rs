//! Logit-space GAN losses. `softplus(x) = log(1 + e^x)` gives
//! `-log σ(x) = softplus(-x)` and `-log(1 - σ(x)) = softplus(x)`.

use crate::autodiff::{softplus, Graph, NodeId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// G minimizes `E log(1 - σ(D(G(z))))`.
    Saturating,
    /// G minimizes `-E log σ(D(G(z)))`.
    NonSaturating,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Saturating => "saturating",
            LossKind::NonSaturating => "non-saturating",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "saturating" => Some(LossKind::Saturating),
            "non-saturating" => Some(LossKind::NonSaturating),
            _ => None,
        }
    }
}

/// `mean softplus(-d_real) + mean softplus(d_fake)`.
pub fn d_loss(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> Result<NodeId> {
    let neg = g.scale(d_real, -1.0);
    let a = g.softplus(neg);
    let a = g.mean(a);
    let b = g.softplus(d_fake);
    let b = g.mean(b);
    g.add(a, b)
}

/// D loss on real logits only (the real-batch gradient probe).
pub fn d_loss_real(g: &mut Graph, d_real: NodeId) -> NodeId {
    let neg = g.scale(d_real, -1.0);
    let a = g.softplus(neg);
    g.mean(a)
}

pub fn g_loss(g: &mut Graph, d_fake: NodeId, kind: LossKind) -> NodeId {
    match kind {
        LossKind::Saturating => {
            let s = g.softplus(d_fake);
            let m = g.mean(s);
            g.scale(m, -1.0)
        }
        LossKind::NonSaturating => {
            let neg = g.scale(d_fake, -1.0);
            let s = g.softplus(neg);
            g.mean(s)
        }
    }
}

/// `(loss_D, loss_G)` on plain logits.
pub fn gan_value(d_real: &[f64], d_fake: &[f64], kind: LossKind) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::invalid("gan_value needs at least one logit per side"));
    }
    if d_real.iter().chain(d_fake).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits passed to gan_value".into()));
    }
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64;
    let loss_d = mean(d_real, &|x| softplus(-x)) + mean(d_fake, &softplus);
    let loss_g = match kind {
        LossKind::Saturating => -mean(d_fake, &softplus),
        LossKind::NonSaturating => mean(d_fake, &|x| softplus(-x)),
    };
    Ok((loss_d, loss_g))
}
