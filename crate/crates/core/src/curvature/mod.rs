//! Loss-surface curvature: Hessian spectra of the discriminator loss and
//! per-node gradient norms.

mod lanczos;
mod probe;
mod spectrum;

pub use lanczos::{lanczos_extremal, tridiagonal_eigenvalues, LanczosResult};
pub use probe::{gradient_norm_probe, BatchKind, GradNormRecord};
pub use spectrum::{
    analyze_snapshots, dense_hessian, discriminator_spectrum, hessian_spectrum, track_running_extremes, Snapshot,
    SpectrumConfig, SpectrumRecord,
};
