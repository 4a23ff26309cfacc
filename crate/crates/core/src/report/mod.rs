//! CSV artifacts and SVG figures for training runs.

mod csvio;
mod svg;

pub use csvio::{
    fmt_f64, read_gradnorms, read_losses, read_spectra, spectra_k, write_gradnorms, write_losses, write_spectra, write_svc_audit,
    GradNormRow,
};
pub use svg::{gradnorms_svg, losses_svg, spectra_svg, HEIGHT, WIDTH};
