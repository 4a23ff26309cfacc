use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchKind {
    Real,
    Fake,
}

impl BatchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BatchKind::Real => "real",
            BatchKind::Fake => "fake",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradNormRecord {
    pub node: usize,
    pub op_kind: &'static str,
    pub norm: f64,
    pub batch_kind: BatchKind,
}

/// Euclidean norm of every node's adjoint, in tape order. Nodes the loss
/// does not reach report 0.
pub fn gradient_norm_probe(g: &Graph, kind: BatchKind) -> Result<Vec<GradNormRecord>> {
    if !g.backward_done() {
        return Err(Error::invalid("gradient probe needs a completed backward pass"));
    }
    Ok((0..g.len())
        .map(|i| {
            let id = NodeId(i);
            GradNormRecord {
                node: i,
                op_kind: g.op_kind(id),
                norm: g.adjoint(id).map_or(0.0, |a| a.norm()),
                batch_kind: kind,
            }
        })
        .collect())
}
