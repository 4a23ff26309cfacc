//! Named discriminator architectures.
//!
//! Full-scale presets take 16x64x64 RGB clips (the MoCoGAN image
//! discriminator takes single 64x64 frames). Conv layers carry no bias; BN
//! layers carry scale and offset. Toy presets are small enough for dense
//! Hessian oracles and use biases without BN.

use super::spec::{LayerSpec, NetSpec, Shape, ShiftSpec};
use crate::error::{Error, Result};

pub const VIDEO_INPUT: Shape = Shape {
    t: 16,
    h: 64,
    w: 64,
    c: 3,
};
pub const FRAME_INPUT: Shape = Shape {
    t: 1,
    h: 64,
    w: 64,
    c: 3,
};
pub const TOY_INPUT: Shape = Shape {
    t: 16,
    h: 16,
    w: 16,
    c: 1,
};
pub const TINY_INPUT: Shape = Shape {
    t: 4,
    h: 4,
    w: 4,
    c: 1,
};
pub const TOY_WIDTH: usize = 4;

/// A preset is one network or MoCoGAN's image + video pair.
#[derive(Clone, Debug, PartialEq)]
pub enum Discriminator {
    Single(NetSpec),
    Pair { image: NetSpec, video: NetSpec },
}

impl Discriminator {
    pub fn count_params(&self) -> Result<usize> {
        match self {
            Discriminator::Single(s) => s.count_params(),
            Discriminator::Pair { image, video } => Ok(image.count_params()? + video.count_params()?),
        }
    }

    pub fn nets(&self) -> Vec<&NetSpec> {
        match self {
            Discriminator::Single(s) => vec![s],
            Discriminator::Pair { image, video } => vec![image, video],
        }
    }
}

const FULL_SCALE_PRESETS: &[&str] = &[
    "mocogan-image-d",
    "mocogan-video-d",
    "mocogan-d",
    "mocogan-image-d-2x",
    "mocogan-video-d-2x",
    "mocogan-d-2x",
    "mocogan-video-d-ksize2",
    "mocogan-image-d-ksize8",
    "mocogan-f-c0",
    "mocogan-f-c0c1",
    "mocogan-f-c0c2",
    "mocogan-f-c0c3",
    "mocogan-tsm-c0",
    "mocogan-tsm-c0c1",
    "mocogan-tsm-c0c2",
    "tgan-d",
    "tgan-f-c0",
    "tgan-f-c0c1",
    "tgan-f-c0c2",
    "tgan-f-c0c3",
    "tgan-tsm-c0",
    "tgan-tsm-c0c1",
    "tgan-tsm-c0c2",
];

const TOY_PRESETS: &[&str] = &["toy-3d", "toy-f", "toy-tsm", "toy-2d", "tiny-3d", "tiny-f", "tiny-bn"];

/// Short names for the best variant of each family.
const ALIASES: &[(&str, &str)] = &[
    ("tgan-f", "tgan-f-c0c1"),
    ("tgan-tsm", "tgan-tsm-c0c2"),
    ("mocogan-f", "mocogan-f-c0c1"),
    ("mocogan-tsm", "mocogan-tsm-c0c1"),
];

pub fn names() -> Vec<&'static str> {
    let mut v: Vec<&str> = FULL_SCALE_PRESETS.to_vec();
    v.extend(ALIASES.iter().map(|a| a.0));
    v.extend(TOY_PRESETS);
    v
}

fn canonical(name: &str) -> &str {
    ALIASES.iter().find(|a| a.0 == name).map_or(name, |a| a.1)
}

/// Resolve a preset by name; unknown names list every preset.
pub fn lookup(name: &str) -> Result<Discriminator> {
    let name = canonical(name);
    let single = |s: NetSpec| Ok(Discriminator::Single(s));
    match name {
        "mocogan-image-d" => single(mocogan_image(name, 1, 4, 1, &[])),
        "mocogan-video-d" => single(mocogan_video(name, 1, 4, 1)),
        "mocogan-d" => Ok(Discriminator::Pair {
            image: mocogan_image("mocogan-image-d", 1, 4, 1, &[]),
            video: mocogan_video("mocogan-video-d", 1, 4, 1),
        }),
        "mocogan-image-d-2x" => single(mocogan_image(name, 2, 4, 1, &[])),
        "mocogan-video-d-2x" => single(mocogan_video(name, 2, 4, 1)),
        "mocogan-d-2x" => Ok(Discriminator::Pair {
            image: mocogan_image("mocogan-image-d-2x", 2, 4, 1, &[]),
            video: mocogan_video("mocogan-video-d-2x", 2, 4, 1),
        }),
        "mocogan-video-d-ksize2" => single(mocogan_video(name, 1, 2, 0)),
        "mocogan-image-d-ksize8" => single(mocogan_image(name, 1, 8, 3, &[])),
        "tgan-d" => single(tgan(name)),
        _ => {
            if let Some(n) = suffix_depth(name, "tgan-f-") {
                single(tgan_factorized(name, n))
            } else if let Some(n) = suffix_depth(name, "tgan-tsm-") {
                single(tgan_tsm(name, n))
            } else if let Some(n) = suffix_depth(name, "mocogan-f-") {
                single(mocogan_factorized(name, n))
            } else if let Some(n) = suffix_depth(name, "mocogan-tsm-") {
                let shifts: Vec<usize> = (0..=n).collect();
                single(mocogan_image(name, 1, 4, 1, &shifts))
            } else if TOY_PRESETS.contains(&name) {
                single(toy(name, None, TOY_WIDTH)?)
            } else {
                Err(Error::invalid(format!(
                    "unknown preset {name:?}; known presets: {}",
                    names().join(", ")
                )))
            }
        }
    }
}

/// Resolve a preset that must be a single network.
pub fn net(name: &str) -> Result<NetSpec> {
    match lookup(name)? {
        Discriminator::Single(s) => Ok(s),
        Discriminator::Pair { .. } => Err(Error::invalid(format!(
            "preset {name:?} is an image + video pair, not a single network"
        ))),
    }
}

/// `"c0"`, `"c0c1"`, ... after `prefix`, returning the last factorized layer.
fn suffix_depth(name: &str, prefix: &str) -> Option<usize> {
    match name.strip_prefix(prefix)? {
        "c0" => Some(0),
        "c0c1" => Some(1),
        "c0c2" => Some(2),
        "c0c3" if !prefix.contains("tsm") => Some(3),
        _ => None,
    }
}

const MOCO_CH: [usize; 3] = [64, 128, 256];
const TGAN_CH: [usize; 4] = [64, 128, 256, 512];

fn maybe_bn(l: LayerSpec, i: usize) -> LayerSpec {
    if i == 0 {
        l.lrelu()
    } else {
        l.with_bn().lrelu()
    }
}

/// 2D patch discriminator applied per frame; `shifts` lists layers followed
/// by a quarter-channel temporal shift.
fn mocogan_image(name: &str, mult: usize, k: usize, p: usize, shifts: &[usize]) -> NetSpec {
    let mut layers = Vec::new();
    for (i, ch) in MOCO_CH.iter().enumerate() {
        layers.push(maybe_bn(LayerSpec::conv2d(&format!("c{i}"), ch * mult, [k, k], [2, 2], [p, p]), i));
        if shifts.contains(&i) {
            layers.push(LayerSpec::temporal_shift(&format!("c{i}.shift"), ShiftSpec::QUARTER));
        }
    }
    layers.push(LayerSpec::conv2d("c3", 1, [k, k], [2, 2], [p, p]));
    let input = if shifts.is_empty() { FRAME_INPUT } else { VIDEO_INPUT };
    NetSpec::new(name, input, layers)
}

fn mocogan_video(name: &str, mult: usize, k: usize, p: usize) -> NetSpec {
    let mut layers = Vec::new();
    for (i, ch) in MOCO_CH.iter().enumerate() {
        layers.push(maybe_bn(
            LayerSpec::conv3d(&format!("c{i}"), ch * mult, [k; 3], [1, 2, 2], [0, p, p]),
            i,
        ));
    }
    layers.push(LayerSpec::conv3d("c3", 1, [k; 3], [1, 2, 2], [0, p, p]));
    NetSpec::new(name, VIDEO_INPUT, layers)
}

/// Layers `0..=upto` factorized; the remaining layers use 2D kernels.
fn mocogan_factorized(name: &str, upto: usize) -> NetSpec {
    let mut layers = Vec::new();
    for (i, ch) in MOCO_CH.iter().chain([&1]).enumerate() {
        let n = format!("c{i}");
        let l = if i <= upto {
            LayerSpec::factorized(&n, *ch, [4, 4, 4], [1, 2, 2], [1, 1, 1])
        } else {
            LayerSpec::conv2d(&n, *ch, [4, 4], [2, 2], [1, 1])
        };
        layers.push(if i < 3 { maybe_bn(l, i) } else { l });
    }
    NetSpec::new(name, VIDEO_INPUT, layers)
}

fn tgan(name: &str) -> NetSpec {
    let mut layers: Vec<LayerSpec> = TGAN_CH
        .iter()
        .enumerate()
        .map(|(i, ch)| maybe_bn(LayerSpec::conv3d(&format!("c{i}"), *ch, [4; 3], [2; 3], [1; 3]), i))
        .collect();
    layers.push(LayerSpec::conv2d("c4", 1, [4, 4], [1, 1], [0, 0]));
    NetSpec::new(name, VIDEO_INPUT, layers)
}

fn tgan_factorized(name: &str, upto: usize) -> NetSpec {
    let mut layers: Vec<LayerSpec> = TGAN_CH
        .iter()
        .enumerate()
        .map(|(i, ch)| {
            let n = format!("c{i}");
            let l = if i <= upto {
                LayerSpec::factorized(&n, *ch, [4; 3], [2; 3], [1; 3])
            } else {
                LayerSpec::conv2d(&n, *ch, [4, 4], [2, 2], [1, 1])
            };
            maybe_bn(l, i)
        })
        .collect();
    layers.push(LayerSpec::conv2d("c4", 1, [4, 4], [1, 1], [0, 0]));
    NetSpec::new(name, VIDEO_INPUT, layers)
}

fn tgan_tsm(name: &str, upto: usize) -> NetSpec {
    let mut layers = Vec::new();
    for (i, ch) in TGAN_CH.iter().enumerate() {
        layers.push(maybe_bn(LayerSpec::conv2d(&format!("c{i}"), *ch, [4, 4], [2, 2], [1, 1]), i));
        if i <= upto {
            layers.push(LayerSpec::temporal_shift(&format!("c{i}.shift"), ShiftSpec::QUARTER));
        }
    }
    layers.push(LayerSpec::conv2d("c4", 1, [4, 4], [1, 1], [0, 0]));
    NetSpec::new(name, VIDEO_INPUT, layers)
}

/// Toy and tiny discriminators for a given input; `None` uses the preset's
/// own input. Toy inputs need T, H and W divisible by 8.
pub fn toy(name: &str, input: Option<Shape>, width: usize) -> Result<NetSpec> {
    let w = width.max(1);
    let k3 = |n: &str, ch| LayerSpec::conv3d(n, ch, [4; 3], [2; 3], [1; 3]).with_bias(true).lrelu();
    let kf = |n: &str, ch| LayerSpec::factorized(n, ch, [4; 3], [2; 3], [1; 3]).with_bias(true).lrelu();
    let k2 = |n: &str, ch| LayerSpec::conv2d(n, ch, [4, 4], [2, 2], [1, 1]).with_bias(true).lrelu();
    let head = || LayerSpec::conv2d("head", 1, [2, 2], [1, 1], [0, 0]).with_bias(true);
    let shift = |n: &str| LayerSpec::temporal_shift(n, ShiftSpec::QUARTER);
    let (default, layers) = match name {
        "toy-3d" => (TOY_INPUT, vec![k3("c0", w), k3("c1", 2 * w), k3("c2", 4 * w), head()]),
        "toy-f" => (TOY_INPUT, vec![kf("c0", w), kf("c1", 2 * w), k2("c2", 4 * w), head()]),
        "toy-tsm" => (
            TOY_INPUT,
            vec![k2("c0", w), shift("c0.shift"), k2("c1", 2 * w), shift("c1.shift"), k2("c2", 4 * w), head()],
        ),
        "toy-2d" => (TOY_INPUT, vec![k2("c0", w), k2("c1", 2 * w), k2("c2", 4 * w), head()]),
        "tiny-3d" => (
            TINY_INPUT,
            vec![
                LayerSpec::conv3d("c0", 2, [2; 3], [2; 3], [0; 3]).with_bias(true).lrelu(),
                LayerSpec::conv3d("c1", 3, [2; 3], [2; 3], [0; 3]).with_bias(true).lrelu(),
                LayerSpec::linear("fc", 1).with_bias(true),
            ],
        ),
        "tiny-f" => (
            TINY_INPUT,
            vec![
                LayerSpec::factorized("c0", 2, [2; 3], [2; 3], [0; 3]).with_bias(true).lrelu(),
                LayerSpec::factorized("c1", 3, [2; 3], [2; 3], [0; 3]).with_bias(true).lrelu(),
                LayerSpec::linear("fc", 1).with_bias(true),
            ],
        ),
        "tiny-bn" => (
            TINY_INPUT,
            vec![
                LayerSpec::conv3d("c0", 2, [2; 3], [2; 3], [0; 3]).with_bias(true).lrelu(),
                LayerSpec::conv3d("c1", 3, [2; 3], [2; 3], [0; 3]).with_bn().lrelu(),
                LayerSpec::linear("fc", 1).with_bias(true),
            ],
        ),
        _ => return Err(Error::invalid(format!("{name:?} is not a toy preset"))),
    };
    let spec = NetSpec::new(name, input.unwrap_or(default), layers);
    spec.shapes()?;
    Ok(spec)
}

pub fn is_toy(name: &str) -> bool {
    TOY_PRESETS.contains(&name)
}

/// Published parameter count (millions, one decimal) for a preset.
#[derive(Clone, Debug)]
pub struct ConformanceRow {
    pub preset: &'static str,
    pub label: &'static str,
    pub published_millions: f64,
    pub computed: usize,
}

impl ConformanceRow {
    pub fn rounded_millions(&self) -> f64 {
        round_millions(self.computed)
    }

    pub fn matches(&self) -> bool {
        (self.rounded_millions() - self.published_millions).abs() < 1e-9
    }
}

/// Count rounded to 0.1M.
pub fn round_millions(count: usize) -> f64 {
    (count as f64 / 1e5).round() / 10.0
}

const CONFORMANCE: &[(&str, &str, f64)] = &[
    ("mocogan-image-d", "MoCoGAN image D", 0.7),
    ("mocogan-video-d", "MoCoGAN video D", 2.7),
    ("mocogan-d", "MoCoGAN image + video D", 3.3),
    ("mocogan-video-d-2x", "MoCoGAN 2x channels, video D", 10.5),
    ("mocogan-d-2x", "MoCoGAN 2x channels", 13.2),
    ("mocogan-video-d-ksize2", "MoCoGAN video D, ksize 2", 0.3),
    ("mocogan-image-d-ksize8", "MoCoGAN image D, ksize 8", 2.7),
    ("tgan-d", "TGAN D", 11.0),
    ("tgan-f-c0", "TGAN factorized c0", 2.8),
    ("tgan-f-c0c1", "TGAN factorized c0-c1", 2.8),
    ("tgan-f-c0c2", "TGAN factorized c0-c2", 3.1),
    ("tgan-f-c0c3", "TGAN factorized c0-c3", 4.2),
    ("mocogan-f-c0", "MoCoGAN factorized c0", 0.7),
    ("mocogan-f-c0c1", "MoCoGAN factorized c0-c1", 0.7),
    ("mocogan-f-c0c2", "MoCoGAN factorized c0-c2", 1.0),
    ("mocogan-f-c0c3", "MoCoGAN factorized c0-c3", 1.0),
    ("tgan-tsm-c0", "TGAN TSM c0", 2.8),
    ("tgan-tsm-c0c1", "TGAN TSM c0-c1", 2.8),
    ("tgan-tsm-c0c2", "TGAN TSM c0-c2", 2.8),
    ("mocogan-tsm-c0", "MoCoGAN TSM c0", 0.7),
    ("mocogan-tsm-c0c1", "MoCoGAN TSM c0-c1", 0.7),
    ("mocogan-tsm-c0c2", "MoCoGAN TSM c0-c2", 0.7),
];

pub fn conformance_table() -> Result<Vec<ConformanceRow>> {
    CONFORMANCE
        .iter()
        .map(|&(preset, label, published_millions)| {
            Ok(ConformanceRow {
                preset,
                label,
                published_millions,
                computed: lookup(preset)?.count_params()?,
            })
        })
        .collect()
}

/// Parameter reduction of a variant against its family baseline.
#[derive(Clone, Debug)]
pub struct ReductionRow {
    pub label: &'static str,
    pub base: &'static str,
    pub variant: &'static str,
    pub published_percent: f64,
    pub computed_percent: f64,
}

/// The MoCoGAN-F row is only reproducible with the c0-c3 variant (the
/// 1M-parameter network); see the README.
const REDUCTIONS: &[(&str, &str, &str, f64)] = &[
    ("TGAN-F", "tgan-d", "tgan-f-c0c1", 74.19),
    ("TGAN-TSM", "tgan-d", "tgan-tsm-c0c2", 74.93),
    ("MoCoGAN-F", "mocogan-d", "mocogan-f-c0c3", 69.61),
    ("MoCoGAN-TSM", "mocogan-d", "mocogan-tsm-c0c1", 79.99),
];

/// `100 * (1 - variant / base)`.
pub fn reduction_percent(base: usize, variant: usize) -> f64 {
    100.0 * (1.0 - variant as f64 / base as f64)
}

pub fn reduction_table() -> Result<Vec<ReductionRow>> {
    REDUCTIONS
        .iter()
        .map(|&(label, base, variant, published_percent)| {
            let b = lookup(base)?.count_params()?;
            let v = lookup(variant)?.count_params()?;
            Ok(ReductionRow {
                label,
                base,
                variant,
                published_percent,
                computed_percent: reduction_percent(b, v),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_chains() {
        for n in names() {
            for s in lookup(n).unwrap().nets() {
                s.shapes().unwrap_or_else(|e| panic!("{n}: {e}"));
            }
        }
    }

    #[test]
    fn head_shapes() {
        assert_eq!(net("tgan-d").unwrap().output_shape().unwrap(), Shape::new(1, 1, 1, 1));
        assert_eq!(net("tgan-f-c0").unwrap().output_shape().unwrap(), Shape::new(8, 1, 1, 1));
        assert_eq!(net("tgan-tsm").unwrap().output_shape().unwrap(), Shape::new(16, 1, 1, 1));
        assert_eq!(net("mocogan-image-d").unwrap().output_shape().unwrap(), Shape::new(1, 4, 4, 1));
        assert_eq!(net("mocogan-video-d").unwrap().output_shape().unwrap(), Shape::new(4, 4, 4, 1));
    }

    #[test]
    fn unknown_preset_lists_names() {
        let e = lookup("tgan-x").unwrap_err().to_string();
        assert!(e.contains("tgan-f-c0c1") && e.contains("toy-3d"));
    }

    #[test]
    fn tiny_presets_are_small() {
        for n in ["tiny-3d", "tiny-f", "tiny-bn"] {
            assert!(net(n).unwrap().count_params().unwrap() <= 200);
        }
    }
}
