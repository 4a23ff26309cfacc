//! Experiment configuration: a sectioned `key = value` document where every
//! key has a default and unknown keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::curvature::SpectrumConfig;
use crate::error::{Error, Result};
use crate::gan::{AdamConfig, GeneratorConfig, GeneratorKind, LatentSpec, LossKind, SpectrumBatch, TrainConfig};
use crate::ini::{self, Entry};
use crate::lipschitz::{LipschitzConfig, LipschitzKind};
use crate::metrics::EvalConfig;
use crate::video::{Crop, Motion, PreprocessConfig, ShapeKind, SynthDataConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    Synth,
    Dir,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Synth => "synth",
            DataSource::Dir => "dir",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "synth" => Some(DataSource::Synth),
            "dir" => Some(DataSource::Dir),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSection {
    pub source: DataSource,
    /// Directory of `.ldvd` videos when `source = dir`.
    pub dir: String,
    pub canvas: usize,
    pub size: usize,
    pub frames: usize,
    pub subsample: usize,
    pub crop: Crop,
    pub channels: usize,
    pub shapes: usize,
    pub shape: ShapeKind,
    pub motions: Vec<Motion>,
    pub batch: usize,
    /// Lower and upper raw value for `source = dir`.
    pub range_lo: f64,
    pub range_hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSection {
    pub kind: GeneratorKind,
    pub content: usize,
    pub motion: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorSection {
    /// Preset names; one run per preset (and per Lipschitz kind).
    pub presets: Vec<String>,
    /// Width multiplier for toy presets.
    pub width: usize,
    /// Net-spec files, used in addition to `presets`.
    pub spec_files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSection {
    pub iterations: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub d_steps: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzSection {
    /// One run per kind.
    pub kinds: Vec<LipschitzKind>,
    pub cap: f64,
    pub every_n: usize,
    pub clip_bn: bool,
    pub power_iters: usize,
    pub audit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisSection {
    pub spectrum_every: usize,
    pub k: usize,
    /// `0` picks `4k + 20`.
    pub max_iters: usize,
    pub batch: SpectrumBatch,
    pub gradnorm_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSection {
    pub enabled: bool,
    pub samples: usize,
    pub repeats: usize,
    pub batch: usize,
    pub real_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub generator: GeneratorSection,
    pub discriminator: DiscriminatorSection,
    pub train: TrainSection,
    pub lipschitz: LipschitzSection,
    pub analysis: AnalysisSection,
    pub metrics: MetricsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let lip = LipschitzConfig::default();
        let synth = SynthDataConfig::default();
        let eval = EvalConfig::default();
        ExperimentConfig {
            data: DataSection {
                source: DataSource::Synth,
                dir: String::new(),
                canvas: synth.canvas,
                size: synth.out_size,
                frames: synth.clip_len,
                subsample: synth.subsample,
                crop: Crop::Center,
                channels: synth.channels,
                shapes: synth.shapes,
                shape: synth.kind,
                motions: synth.motions,
                batch: synth.batch,
                range_lo: -1.0,
                range_hi: 1.0,
            },
            generator: GeneratorSection {
                kind: GeneratorKind::Tgan,
                content: 8,
                motion: 4,
                width: 8,
            },
            discriminator: DiscriminatorSection {
                presets: vec!["toy-3d".into()],
                width: crate::nn::presets::TOY_WIDTH,
                spec_files: Vec::new(),
            },
            train: TrainSection {
                iterations: 200,
                lr_d: adam.lr,
                lr_g: adam.lr,
                beta1: adam.beta1,
                beta2: adam.beta2,
                eps: adam.eps,
                d_steps: 1,
                loss: LossKind::NonSaturating,
                seed: 0,
                checkpoint_every: 0,
            },
            lipschitz: LipschitzSection {
                kinds: vec![LipschitzKind::None],
                cap: lip.cap,
                every_n: lip.every_n,
                clip_bn: lip.clip_bn,
                power_iters: lip.power_iters,
                audit: false,
            },
            analysis: AnalysisSection {
                spectrum_every: 20,
                k: 10,
                max_iters: 0,
                batch: SpectrumBatch::Minibatch,
                gradnorm_every: 0,
            },
            metrics: MetricsSection {
                enabled: false,
                samples: eval.samples,
                repeats: eval.repeats,
                batch: eval.batch,
                real_samples: eval.samples,
            },
        }
    }
}

const SECTIONS: [&str; 7] = ["data", "generator", "discriminator", "train", "lipschitz", "analysis", "metrics"];

fn cfg_err(e: &Entry, section: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config {
        line: e.line,
        msg: format!("{section}.{}: {msg}", e.key),
    }
}

fn word<T>(e: &Entry, section: &str, parse: impl Fn(&str) -> Option<T>, allowed: &str) -> Result<T> {
    parse(&e.value).ok_or_else(|| cfg_err(e, section, format!("{:?} is not one of {allowed}", e.value)))
}

fn num<T: std::str::FromStr>(e: &Entry, section: &str) -> Result<T> {
    ini::parse_value(e).map_err(|_| cfg_err(e, section, format!("bad value {:?}", e.value)))
}

fn positive(e: &Entry, section: &str) -> Result<usize> {
    let v: usize = num(e, section)?;
    if v == 0 {
        return Err(cfg_err(e, section, "must be >= 1"));
    }
    Ok(v)
}

fn words<T>(e: &Entry, section: &str, parse: impl Fn(&str) -> Option<T>, allowed: &str) -> Result<Vec<T>> {
    let out = e
        .value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| cfg_err(e, section, format!("{s:?} is not one of {allowed}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

fn boolean(e: &Entry, section: &str) -> Result<bool> {
    word(
        e,
        section,
        |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        },
        "true, false",
    )
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for sec in ini::parse(text)? {
            let s = sec.name.as_str();
            if !SECTIONS.contains(&s) {
                let (line, key) = sec
                    .entries
                    .first()
                    .map_or((sec.line, String::new()), |e| (e.line, format!(".{}", e.key)));
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key {s}{key} (sections: {})", SECTIONS.join(", ")),
                });
            }
            for e in &sec.entries {
                c.set(s, e)?;
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, s: &str, e: &Entry) -> Result<()> {
        let k = e.key.as_str();
        match (s, k) {
            ("data", "source") => self.data.source = word(e, s, DataSource::parse, "synth, dir")?,
            ("data", "dir") => self.data.dir = e.value.clone(),
            ("data", "canvas") => self.data.canvas = positive(e, s)?,
            ("data", "size") => self.data.size = positive(e, s)?,
            ("data", "frames") => self.data.frames = positive(e, s)?,
            ("data", "subsample") => self.data.subsample = positive(e, s)?,
            ("data", "crop") => self.data.crop = word(e, s, Crop::parse, "center, random, none")?,
            ("data", "channels") => self.data.channels = positive(e, s)?,
            ("data", "shapes") => self.data.shapes = positive(e, s)?,
            ("data", "shape") => self.data.shape = word(e, s, ShapeKind::parse, "square, disc")?,
            ("data", "motions") => self.data.motions = words(e, s, Motion::parse, "bounce, drift, rotate")?,
            ("data", "batch") => self.data.batch = positive(e, s)?,
            ("data", "range_lo") => self.data.range_lo = num(e, s)?,
            ("data", "range_hi") => self.data.range_hi = num(e, s)?,
            ("generator", "kind") => self.generator.kind = word(e, s, GeneratorKind::parse, "tgan, mocogan")?,
            ("generator", "content") => self.generator.content = positive(e, s)?,
            ("generator", "motion") => self.generator.motion = positive(e, s)?,
            ("generator", "width") => self.generator.width = positive(e, s)?,
            ("discriminator", "presets") => {
                self.discriminator.presets =
                    e.value.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
            }
            ("discriminator", "width") => self.discriminator.width = positive(e, s)?,
            ("discriminator", "spec_files") => {
                self.discriminator.spec_files =
                    e.value.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
            }
            ("train", "iterations") => self.train.iterations = num(e, s)?,
            ("train", "lr_d") => self.train.lr_d = num(e, s)?,
            ("train", "lr_g") => self.train.lr_g = num(e, s)?,
            ("train", "beta1") => self.train.beta1 = num(e, s)?,
            ("train", "beta2") => self.train.beta2 = num(e, s)?,
            ("train", "eps") => self.train.eps = num(e, s)?,
            ("train", "d_steps") => self.train.d_steps = positive(e, s)?,
            ("train", "loss") => self.train.loss = word(e, s, LossKind::parse, "saturating, non-saturating")?,
            ("train", "seed") => self.train.seed = num(e, s)?,
            ("train", "checkpoint_every") => self.train.checkpoint_every = num(e, s)?,
            ("lipschitz", "kind") => self.lipschitz.kinds = words(e, s, LipschitzKind::parse, "none, svc, sn")?,
            ("lipschitz", "cap") => self.lipschitz.cap = num(e, s)?,
            ("lipschitz", "every_n") => self.lipschitz.every_n = positive(e, s)?,
            ("lipschitz", "clip_bn") => self.lipschitz.clip_bn = boolean(e, s)?,
            ("lipschitz", "power_iters") => self.lipschitz.power_iters = positive(e, s)?,
            ("lipschitz", "audit") => self.lipschitz.audit = boolean(e, s)?,
            ("analysis", "spectrum_every") => self.analysis.spectrum_every = num(e, s)?,
            ("analysis", "k") => self.analysis.k = positive(e, s)?,
            ("analysis", "max_iters") => self.analysis.max_iters = num(e, s)?,
            ("analysis", "batch") => self.analysis.batch = word(e, s, SpectrumBatch::parse, "minibatch, fixed")?,
            ("analysis", "gradnorm_every") => self.analysis.gradnorm_every = num(e, s)?,
            ("metrics", "enabled") => self.metrics.enabled = boolean(e, s)?,
            ("metrics", "samples") => self.metrics.samples = positive(e, s)?,
            ("metrics", "repeats") => self.metrics.repeats = positive(e, s)?,
            ("metrics", "batch") => self.metrics.batch = positive(e, s)?,
            ("metrics", "real_samples") => self.metrics.real_samples = positive(e, s)?,
            _ => {
                return Err(Error::Config {
                    line: e.line,
                    msg: format!("unknown key {s}.{k}"),
                })
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config { line: 0, msg });
        if self.discriminator.presets.is_empty() && self.discriminator.spec_files.is_empty() {
            return bad("discriminator.presets: no discriminator given".into());
        }
        if self.lipschitz.kinds.is_empty() {
            return bad("lipschitz.kind: no kind given".into());
        }
        if self.data.motions.is_empty() {
            return bad("data.motions: no motion class given".into());
        }
        if self.data.source == DataSource::Dir && self.data.dir.is_empty() {
            return bad("data.dir: required when data.source = dir".into());
        }
        if !(self.data.range_hi > self.data.range_lo) {
            return bad("data.range_hi: must exceed data.range_lo".into());
        }
        if !(self.lipschitz.cap > 0.0) {
            return bad("lipschitz.cap: must be positive".into());
        }
        if !(self.train.lr_d >= 0.0 && self.train.lr_g >= 0.0) {
            return bad("train.lr_d: learning rates must be >= 0".into());
        }
        Ok(())
    }

    /// Every key in a fixed order; `parse(dump(c)) == c`.
    pub fn canonical(&self) -> String {
        let mut o = String::new();
        let d = &self.data;
        let motions: Vec<&str> = d.motions.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(o, "[data]");
        let _ = writeln!(o, "source = {}", d.source.as_str());
        let _ = writeln!(o, "dir = {}", d.dir);
        let _ = writeln!(o, "canvas = {}", d.canvas);
        let _ = writeln!(o, "size = {}", d.size);
        let _ = writeln!(o, "frames = {}", d.frames);
        let _ = writeln!(o, "subsample = {}", d.subsample);
        let _ = writeln!(o, "crop = {}", d.crop.as_str());
        let _ = writeln!(o, "channels = {}", d.channels);
        let _ = writeln!(o, "shapes = {}", d.shapes);
        let _ = writeln!(o, "shape = {}", d.shape.as_str());
        let _ = writeln!(o, "motions = {}", motions.join(","));
        let _ = writeln!(o, "batch = {}", d.batch);
        let _ = writeln!(o, "range_lo = {:?}", d.range_lo);
        let _ = writeln!(o, "range_hi = {:?}", d.range_hi);
        let g = &self.generator;
        let _ = writeln!(o, "\n[generator]");
        let _ = writeln!(o, "kind = {}", g.kind.as_str());
        let _ = writeln!(o, "content = {}", g.content);
        let _ = writeln!(o, "motion = {}", g.motion);
        let _ = writeln!(o, "width = {}", g.width);
        let di = &self.discriminator;
        let _ = writeln!(o, "\n[discriminator]");
        let _ = writeln!(o, "presets = {}", di.presets.join(","));
        let _ = writeln!(o, "width = {}", di.width);
        let _ = writeln!(o, "spec_files = {}", di.spec_files.join(","));
        let t = &self.train;
        let _ = writeln!(o, "\n[train]");
        let _ = writeln!(o, "iterations = {}", t.iterations);
        let _ = writeln!(o, "lr_d = {:?}", t.lr_d);
        let _ = writeln!(o, "lr_g = {:?}", t.lr_g);
        let _ = writeln!(o, "beta1 = {:?}", t.beta1);
        let _ = writeln!(o, "beta2 = {:?}", t.beta2);
        let _ = writeln!(o, "eps = {:?}", t.eps);
        let _ = writeln!(o, "d_steps = {}", t.d_steps);
        let _ = writeln!(o, "loss = {}", t.loss.as_str());
        let _ = writeln!(o, "seed = {}", t.seed);
        let _ = writeln!(o, "checkpoint_every = {}", t.checkpoint_every);
        let l = &self.lipschitz;
        let kinds: Vec<&str> = l.kinds.iter().map(|k| k.as_str()).collect();
        let _ = writeln!(o, "\n[lipschitz]");
        let _ = writeln!(o, "kind = {}", kinds.join(","));
        let _ = writeln!(o, "cap = {:?}", l.cap);
        let _ = writeln!(o, "every_n = {}", l.every_n);
        let _ = writeln!(o, "clip_bn = {}", l.clip_bn);
        let _ = writeln!(o, "power_iters = {}", l.power_iters);
        let _ = writeln!(o, "audit = {}", l.audit);
        let a = &self.analysis;
        let _ = writeln!(o, "\n[analysis]");
        let _ = writeln!(o, "spectrum_every = {}", a.spectrum_every);
        let _ = writeln!(o, "k = {}", a.k);
        let _ = writeln!(o, "max_iters = {}", a.max_iters);
        let _ = writeln!(o, "batch = {}", a.batch.as_str());
        let _ = writeln!(o, "gradnorm_every = {}", a.gradnorm_every);
        let m = &self.metrics;
        let _ = writeln!(o, "\n[metrics]");
        let _ = writeln!(o, "enabled = {}", m.enabled);
        let _ = writeln!(o, "samples = {}", m.samples);
        let _ = writeln!(o, "repeats = {}", m.repeats);
        let _ = writeln!(o, "batch = {}", m.batch);
        let _ = writeln!(o, "real_samples = {}", m.real_samples);
        o
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            kind: self.generator.kind,
            latent: LatentSpec {
                content: self.generator.content,
                motion: self.generator.motion,
                frames: self.data.frames,
            },
            size: self.data.size,
            channels: self.data.channels,
            width: self.generator.width,
        }
    }

    pub fn synth_config(&self, seed: u64) -> SynthDataConfig {
        let d = &self.data;
        SynthDataConfig {
            canvas: d.canvas,
            out_size: d.size,
            clip_len: d.frames,
            subsample: d.subsample,
            channels: d.channels,
            shapes: d.shapes,
            kind: d.shape,
            motions: d.motions.clone(),
            batch: d.batch,
            seed,
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        let d = &self.data;
        PreprocessConfig {
            input_range: (d.range_lo, d.range_hi),
            ..PreprocessConfig::new(d.subsample, d.frames, d.crop, d.size)
        }
    }

    /// Training settings for one Lipschitz variant.
    pub fn train_config(&self, kind: LipschitzKind, seed: u64, threads: usize) -> TrainConfig {
        let t = &self.train;
        let adam = |lr| AdamConfig {
            lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
        };
        let l = &self.lipschitz;
        let a = &self.analysis;
        TrainConfig {
            iterations: t.iterations,
            adam_d: adam(t.lr_d),
            adam_g: adam(t.lr_g),
            d_steps: t.d_steps,
            seed,
            loss: t.loss,
            lipschitz: LipschitzConfig {
                kind,
                cap: l.cap,
                every_n: l.every_n,
                clip_bn: l.clip_bn,
                power_iters: l.power_iters,
            },
            spectrum_every: a.spectrum_every,
            spectrum: SpectrumConfig {
                k: a.k,
                max_iters: (a.max_iters > 0).then_some(a.max_iters),
                seed: 0,
            },
            spectrum_batch: a.batch,
            gradnorm_every: a.gradnorm_every,
            checkpoint_every: t.checkpoint_every,
            audit_svc: l.audit,
            threads,
        }
    }

    pub fn eval_config(&self, seed: u64) -> EvalConfig {
        EvalConfig {
            samples: self.metrics.samples,
            repeats: self.metrics.repeats,
            batch: self.metrics.batch,
            seed,
        }
    }

    /// Spec files resolved against the directory of the config file.
    pub fn spec_paths(&self, base: Option<&Path>) -> Vec<PathBuf> {
        self.discriminator
            .spec_files
            .iter()
            .map(|f| match base {
                Some(b) if Path::new(f).is_relative() => b.join(f),
                _ => PathBuf::from(f),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dump_is_fixed_point() {
        let d = ExperimentConfig::default().canonical();
        let p = ExperimentConfig::parse(&d).unwrap();
        assert_eq!(p, ExperimentConfig::default());
        assert_eq!(p.canonical(), d);
    }

    #[test]
    fn typo_names_key_and_line() {
        let err = ExperimentConfig::parse("[train]\niterations = 3\n[lipschtz]\nkind = svc\n").unwrap_err();
        match err {
            Error::Config { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("lipschtz.kind"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
        let err = ExperimentConfig::parse("[train]\niteratons = 3\n").unwrap_err();
        assert!(err.to_string().contains("train.iteratons"));
    }
}
