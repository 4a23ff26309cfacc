//! Temporal subsampling, clip extraction, square crop, bilinear resize and
//! rescaling to `[-1, 1]`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crop {
    /// Central square of side `min(H, W)`.
    Center,
    /// Square of side `min(H, W)` at a random offset.
    Random,
    /// Resize the full frame.
    None,
}

impl Crop {
    pub fn as_str(self) -> &'static str {
        match self {
            Crop::Center => "center",
            Crop::Random => "random",
            Crop::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "center" => Some(Crop::Center),
            "random" => Some(Crop::Random),
            "none" => Some(Crop::None),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub subsample: usize,
    pub clip_len: usize,
    pub crop: Crop,
    /// Output height and width.
    pub out_size: usize,
    /// Value range of the raw video, mapped affinely onto `[-1, 1]`.
    pub input_range: (f64, f64),
}

impl PreprocessConfig {
    pub fn new(subsample: usize, clip_len: usize, crop: Crop, out_size: usize) -> Self {
        PreprocessConfig {
            subsample,
            clip_len,
            crop,
            out_size,
            input_range: (-1.0, 1.0),
        }
    }

    /// Shortest raw video that yields one clip.
    pub fn min_frames(&self) -> usize {
        (self.clip_len - 1) * self.subsample + 1
    }
}

/// Raw frame indices of a clip starting at subsampled position `start`.
pub fn clip_indices(subsample: usize, clip_len: usize, start: usize) -> Vec<usize> {
    (0..clip_len).map(|i| (start + i) * subsample).collect()
}

/// Number of valid clip starts in a `frames`-long video.
pub fn clip_starts(frames: usize, subsample: usize, clip_len: usize) -> usize {
    let candidates = frames.div_ceil(subsample);
    (candidates + 1).saturating_sub(clip_len)
}

/// Square crop window `(row0, col0, side)` of an `h x w` frame.
pub fn crop_window<R: Rng + ?Sized>(h: usize, w: usize, crop: Crop, rng: &mut R) -> (usize, usize, usize) {
    let side = h.min(w);
    match crop {
        Crop::Center => ((h - side) / 2, (w - side) / 2, side),
        Crop::Random => (rng.random_range(0..=h - side), rng.random_range(0..=w - side), side),
        Crop::None => (0, 0, 0),
    }
}

/// `[T, H, W, C]` video to a `[clip_len, out, out, C]` clip in `[-1, 1]`.
pub fn preprocess<R: Rng + ?Sized>(video: &Tensor, cfg: &PreprocessConfig, rng: &mut R) -> Result<Tensor> {
    if video.rank() != 4 {
        return Err(Error::invalid(format!(
            "video must be [T, H, W, C], got {:?}",
            video.shape()
        )));
    }
    if cfg.subsample == 0 || cfg.clip_len == 0 || cfg.out_size == 0 {
        return Err(Error::invalid("subsample, clip_len and out_size must be >= 1"));
    }
    let (lo, hi) = cfg.input_range;
    if !(hi > lo) {
        return Err(Error::invalid(format!("bad input range {:?}", cfg.input_range)));
    }
    let &[t, h, w, c] = video.shape() else { unreachable!() };
    if t < cfg.min_frames() {
        return Err(Error::invalid(format!(
            "video has {t} frames; subsample {} and clip length {} need at least {}",
            cfg.subsample,
            cfg.clip_len,
            cfg.min_frames()
        )));
    }
    let starts = clip_starts(t, cfg.subsample, cfg.clip_len);
    let start = if starts > 1 { rng.random_range(0..starts) } else { 0 };
    let (r0, c0, side) = crop_window(h, w, cfg.crop, rng);
    let (ch, cw) = if cfg.crop == Crop::None { (h, w) } else { (side, side) };

    let n = cfg.out_size;
    let mut out = Vec::with_capacity(cfg.clip_len * n * n * c);
    let src = video.data();
    let rows = axis_taps(ch, n);
    let cols = axis_taps(cw, n);
    for &f in &clip_indices(cfg.subsample, cfg.clip_len, start) {
        let frame = &src[f * h * w * c..(f + 1) * h * w * c];
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                for k in 0..c {
                    let at = |y: usize, x: usize| frame[((r0 + y) * w + c0 + x) * c + k];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    let v = top * (1.0 - fy) + bot * fy;
                    out.push((2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0));
                }
            }
        }
    }
    Tensor::new(vec![cfg.clip_len, n, n, c], out)
}

/// Bilinear taps with half-pixel centres: output `i` samples input
/// coordinate `(i + 0.5) * len / out - 0.5`, clamped to the edge.
fn axis_taps(len: usize, out: usize) -> Vec<(usize, usize, f64)> {
    let scale = len as f64 / out as f64;
    (0..out)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}
