//! Layers, network specs and the preset architectures.

mod network;
pub mod ops;
pub mod presets;
mod spec;

pub(crate) use network::kaiming_uniform;
pub use network::{layer_of, BatchStats, BnMode, BnState, ForwardOut, Network, BN_EPS, BN_MOMENTUM};
pub use ops::{conv_nd, factorized_conv, gru_step, kron_kernel, temporal_shift, FactorizedKernels, GruParams};
pub use spec::{Activation, LayerCount, LayerKind, LayerSpec, NetSpec, Norm, Shape, ShiftSpec};
