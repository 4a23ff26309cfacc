//! Reverse-mode differentiation and exact Hessian-vector products.

mod graph;
pub mod kernels;
mod param;

pub use graph::{Graph, NodeId, Unary};
pub(crate) use graph::softplus;
pub use kernels::ConvGeom;
pub use param::ParamSet;

use crate::error::{Error, Result};

/// Loss value and gradient with respect to `params`, in `params` layout.
///
/// `loss_fn` receives the graph and one leaf per parameter tensor, in order.
pub fn grad<F>(params: &ParamSet, loss_fn: F) -> Result<(f64, ParamSet)>
where
    F: FnOnce(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let (loss, flat) = grad_flat(params, loss_fn)?;
    Ok((loss, params.unflatten(&flat)?))
}

pub fn grad_flat<F>(params: &ParamSet, loss_fn: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let leaves = params.register(&mut g, None)?;
    let loss = loss_fn(&mut g, &leaves)?;
    g.backward(loss)?;
    let value = g.value(loss).data()[0];
    Ok((value, collect(&g, &leaves, |g, id| g.adjoint(id))))
}

/// `(∇² loss) · v`, computed by one R-forward pass and one reverse pass.
pub fn hvp<F>(params: &ParamSet, v: &[f64], loss_fn: F) -> Result<Vec<f64>>
where
    F: FnOnce(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if v.len() != params.total_dim() {
        return Err(Error::invalid(format!(
            "direction has {} entries but the parameter set has {}",
            v.len(),
            params.total_dim()
        )));
    }
    let mut g = Graph::with_tangents();
    let leaves = params.register(&mut g, Some(v))?;
    let loss = loss_fn(&mut g, &leaves)?;
    g.backward(loss)?;
    Ok(collect(&g, &leaves, |g, id| g.r_adjoint(id)))
}

fn collect<'a>(
    g: &'a Graph,
    leaves: &[NodeId],
    pick: impl Fn(&'a Graph, NodeId) -> Option<&'a crate::tensor::Tensor>,
) -> Vec<f64> {
    let mut out = Vec::new();
    for &id in leaves {
        match pick(g, id) {
            Some(t) => out.extend_from_slice(t.data()),
            None => out.extend(std::iter::repeat_n(0.0, g.value(id).len())),
        }
    }
    out
}
