//! Synthetic video sources, preprocessing and the LDVD container.

mod container;
mod dataset;
mod preprocess;
mod synth;

pub use container::{decode_video, encode_video, load_video, save_video};
pub use dataset::{stack, LdvdDirDataset, Prefetch, SynthDataConfig, SynthDataset};
pub use preprocess::{clip_indices, clip_starts, crop_window, preprocess, Crop, PreprocessConfig};
pub use synth::{position, reflect, scene_states, synth_video, Motion, ShapeKind, ShapeState, SynthSceneConfig};

use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::tensor::Tensor;

/// Supplier of real `[B, T, H, W, C]` batches.
pub trait BatchSource {
    fn next_batch(&mut self) -> Result<Tensor>;
    /// Per-sample shape `T x H x W x C`.
    fn sample_shape(&self) -> Shape;
}

/// `[B, T, H, W, C]` tensor with `T >= 1` and every value in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoBatch(Tensor);

impl VideoBatch {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.rank() != 5 || t.shape().contains(&0) {
            return Err(Error::invalid(format!(
                "video batch must be a non-empty [B, T, H, W, C], got {:?}",
                t.shape()
            )));
        }
        if let Some(v) = t.data().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("video value {v} outside [-1, 1]")));
        }
        Ok(VideoBatch(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn sample_shape(&self) -> Shape {
        let s = self.0.shape();
        Shape::new(s[1], s[2], s[3], s[4])
    }
}
