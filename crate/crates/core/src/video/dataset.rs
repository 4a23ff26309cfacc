//! Batch sources: synthetic scenes, directories of `.ldvd` files, and a
//! background prefetcher.

use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::container::load_video;
use super::preprocess::{preprocess, Crop, PreprocessConfig};
use super::synth::{synth_video, Motion, ShapeKind, SynthSceneConfig};
use super::{BatchSource, VideoBatch};
use crate::error::{Error, Result};
use crate::nn::Shape;
use crate::rng_stream;
use crate::tensor::Tensor;

/// Extra raw frames beyond the minimum, so the clip start is random.
const SLACK_FRAMES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataConfig {
    /// Raw canvas side before resizing.
    pub canvas: usize,
    pub out_size: usize,
    pub clip_len: usize,
    pub subsample: usize,
    pub channels: usize,
    pub shapes: usize,
    pub kind: ShapeKind,
    /// Motion classes sampled uniformly.
    pub motions: Vec<Motion>,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SynthDataConfig {
    fn default() -> Self {
        SynthDataConfig {
            canvas: 32,
            out_size: 16,
            clip_len: 16,
            subsample: 2,
            channels: 1,
            shapes: 1,
            kind: ShapeKind::Square,
            motions: Motion::ALL.to_vec(),
            batch: 8,
            seed: 0,
        }
    }
}

impl SynthDataConfig {
    pub fn sample_shape(&self) -> Shape {
        Shape::new(self.clip_len, self.out_size, self.out_size, self.channels)
    }

    fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig::new(self.subsample, self.clip_len, Crop::Center, self.out_size)
    }

    fn raw_frames(&self) -> usize {
        self.preprocess_config().min_frames() + SLACK_FRAMES
    }
}

/// Endless stream of preprocessed synthetic clips with motion-class labels.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    cfg: SynthDataConfig,
    rng: ChaCha8Rng,
}

impl SynthDataset {
    pub fn new(cfg: SynthDataConfig) -> Result<Self> {
        if cfg.motions.is_empty() || cfg.batch == 0 {
            return Err(Error::invalid("synthetic data needs at least one motion class and batch >= 1"));
        }
        SynthSceneConfig::new(cfg.canvas, cfg.motions[0], 0).validate()?;
        let rng = rng_stream(cfg.seed, 0x5d);
        Ok(SynthDataset { cfg, rng })
    }

    pub fn config(&self) -> &SynthDataConfig {
        &self.cfg
    }

    /// One clip `[T, H, W, C]` of the given class.
    pub fn sample(&mut self, motion: Motion) -> Result<Tensor> {
        let c = &self.cfg;
        let scene = SynthSceneConfig {
            channels: c.channels,
            shapes: c.shapes,
            kind: c.kind,
            ..SynthSceneConfig::new(c.canvas, motion, self.rng.random())
        };
        let raw = synth_video(&scene, c.raw_frames())?;
        preprocess(&raw, &c.preprocess_config(), &mut self.rng)
    }

    /// A batch and its class ids (indices into [`Motion::ALL`]).
    pub fn next_labeled(&mut self) -> Result<(Tensor, Vec<usize>)> {
        let b = self.cfg.batch;
        let mut clips = Vec::with_capacity(b);
        let mut labels = Vec::with_capacity(b);
        for _ in 0..b {
            let m = self.cfg.motions[self.rng.random_range(0..self.cfg.motions.len())];
            clips.push(self.sample(m)?);
            labels.push(m.class_id());
        }
        Ok((stack(&clips)?, labels))
    }
}

impl BatchSource for SynthDataset {
    fn next_batch(&mut self) -> Result<Tensor> {
        self.next_labeled().map(|(t, _)| t)
    }

    fn sample_shape(&self) -> Shape {
        self.cfg.sample_shape()
    }
}

/// Clips drawn from a directory of `.ldvd` videos, each `[T, H, W, C]`.
#[derive(Debug)]
pub struct LdvdDirDataset {
    videos: Vec<(PathBuf, Tensor)>,
    pre: PreprocessConfig,
    batch: usize,
    rng: ChaCha8Rng,
    channels: usize,
}

impl LdvdDirDataset {
    pub fn open(dir: impl AsRef<Path>, pre: PreprocessConfig, batch: usize, seed: u64) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ldvd"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::invalid(format!("no .ldvd files in {}", dir.display())));
        }
        if batch == 0 {
            return Err(Error::invalid("batch must be >= 1"));
        }
        let mut videos = Vec::with_capacity(paths.len());
        let mut channels = None;
        for p in paths {
            let v = load_video(&p)?;
            if v.rank() != 4 {
                return Err(Error::invalid(format!(
                    "{}: expected [T, H, W, C], got {:?}",
                    p.display(),
                    v.shape()
                )));
            }
            if v.shape()[0] < pre.min_frames() {
                return Err(Error::invalid(format!(
                    "{}: {} frames, need at least {}",
                    p.display(),
                    v.shape()[0],
                    pre.min_frames()
                )));
            }
            let c = v.shape()[3];
            if *channels.get_or_insert(c) != c {
                return Err(Error::invalid(format!("{}: channel count {c} differs", p.display())));
            }
            videos.push((p, v));
        }
        Ok(LdvdDirDataset {
            videos,
            pre,
            batch,
            rng: rng_stream(seed, 0x5d),
            channels: channels.unwrap(),
        })
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

impl BatchSource for LdvdDirDataset {
    fn next_batch(&mut self) -> Result<Tensor> {
        let mut clips = Vec::with_capacity(self.batch);
        for _ in 0..self.batch {
            let i = self.rng.random_range(0..self.videos.len());
            clips.push(preprocess(&self.videos[i].1, &self.pre, &mut self.rng)?);
        }
        stack(&clips)
    }

    fn sample_shape(&self) -> Shape {
        Shape::new(self.pre.clip_len, self.pre.out_size, self.pre.out_size, self.channels)
    }
}

/// Runs a source on a producer thread, `depth` batches ahead.
pub struct Prefetch {
    rx: Receiver<Result<Tensor>>,
    shape: Shape,
    handle: Option<JoinHandle<()>>,
}

impl Prefetch {
    pub fn new<S: BatchSource + Send + 'static>(mut source: S, depth: usize) -> Self {
        let shape = source.sample_shape();
        let (tx, rx) = sync_channel(depth.max(1));
        let handle = std::thread::spawn(move || loop {
            let b = source.next_batch();
            let stop = b.is_err();
            if tx.send(b).is_err() || stop {
                break;
            }
        });
        Prefetch {
            rx,
            shape,
            handle: Some(handle),
        }
    }
}

impl BatchSource for Prefetch {
    fn next_batch(&mut self) -> Result<Tensor> {
        self.rx
            .recv()
            .map_err(|_| Error::invalid("prefetch producer stopped"))?
    }

    fn sample_shape(&self) -> Shape {
        self.shape
    }
}

impl Drop for Prefetch {
    fn drop(&mut self) {
        // Unblock a producer waiting on a full channel.
        let (_, dead) = sync_channel(0);
        drop(std::mem::replace(&mut self.rx, dead));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// Stack `[T, H, W, C]` clips into a validated `[B, T, H, W, C]` batch.
pub fn stack(clips: &[Tensor]) -> Result<Tensor> {
    let first = clips.first().ok_or_else(|| Error::invalid("no clips to stack"))?;
    let mut shape = vec![clips.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(clips.len() * first.len());
    for c in clips {
        if c.shape() != first.shape() {
            return Err(Error::shape("stack", c.shape(), first.shape()));
        }
        data.extend_from_slice(c.data());
    }
    Ok(VideoBatch::new(Tensor::new(shape, data)?)?.into_tensor())
}
