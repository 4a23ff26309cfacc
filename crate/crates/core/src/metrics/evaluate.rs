//! Scoring a generator against real-data statistics.

use std::io::Write;

use super::score::{frechet_distance, inception_style_score, FeatureAccumulator, FeatureStats};
use super::surrogate::{Surrogate, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::gan::Generator;
use crate::nn::NetSpec;
use crate::rng_stream;
use crate::video::BatchSource;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    /// Generated clips per repeat.
    pub samples: usize,
    pub repeats: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 1000,
            repeats: 4,
            batch: 50,
            seed: 0,
        }
    }
}

/// Mean and sample standard deviation over repeats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue {
    pub value: f64,
    pub stddev: f64,
}

impl MetricValue {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let value = xs.iter().sum::<f64>() / n;
        let stddev = if xs.len() > 1 {
            (xs.iter().map(|x| (x - value).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MetricValue { value, stddev }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub is: MetricValue,
    pub fd: MetricValue,
    pub samples: usize,
    pub repeats: usize,
}

/// Feature statistics of `n` clips drawn from `data`.
pub fn real_feature_stats(ext: &Surrogate, data: &mut dyn BatchSource, n: usize) -> Result<FeatureStats> {
    let mut acc = FeatureAccumulator::new(FEATURE_DIM);
    while acc.count() < n {
        let batch = data.next_batch()?;
        for f in ext.extract(&batch)?.features {
            if acc.count() == n {
                break;
            }
            acc.push(&f)?;
        }
    }
    acc.finish()
}

/// Inception-style score and Fréchet distance of generated clips, each
/// repeated with fresh latent codes.
pub fn evaluate_generator(gen: &Generator, ext: &Surrogate, real: &FeatureStats, cfg: &EvalConfig) -> Result<EvalSummary> {
    if cfg.samples == 0 || cfg.repeats == 0 || cfg.batch == 0 {
        return Err(Error::invalid("evaluation needs samples, repeats and batch >= 1"));
    }
    if gen.output_shape() != ext.input_shape() {
        return Err(Error::invalid(format!(
            "generator emits {} clips but the extractor expects {}",
            gen.output_shape(),
            ext.input_shape()
        )));
    }
    let (mut is, mut fd) = (Vec::new(), Vec::new());
    for r in 0..cfg.repeats {
        let mut rng = rng_stream(cfg.seed, 0xe7a1 + r as u64);
        let mut acc = FeatureAccumulator::new(FEATURE_DIM);
        let mut probs = Vec::with_capacity(cfg.samples);
        while probs.len() < cfg.samples {
            let b = cfg.batch.min(cfg.samples - probs.len());
            let z = gen.sample_latents(b, &mut rng);
            let out = ext.extract(&gen.generate(&z)?)?;
            for f in &out.features {
                acc.push(f)?;
            }
            probs.extend(out.probs);
        }
        is.push(inception_style_score(&probs)?);
        fd.push(frechet_distance(&acc.finish()?, real)?);
    }
    Ok(EvalSummary {
        is: MetricValue::from_samples(&is),
        fd: MetricValue::from_samples(&fd),
        samples: cfg.samples,
        repeats: cfg.repeats,
    })
}

/// `100 (1 - count(variant) / count(base))`.
pub fn param_reduction_report(base: &NetSpec, variant: &NetSpec) -> Result<f64> {
    let b = base.count_params()?;
    let v = variant.count_params()?;
    if b == 0 {
        return Err(Error::invalid("baseline has no parameters"));
    }
    Ok(100.0 * (1.0 - v as f64 / b as f64))
}

/// Append rows to `metrics.csv`: `run_id,metric,value,stddev,n_samples,n_repeats`.
pub fn write_metrics_csv<W: Write>(w: W, rows: &[(String, EvalSummary)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["run_id", "metric", "value", "stddev", "n_samples", "n_repeats"])?;
    for (run, s) in rows {
        for (name, m) in [("is", s.is), ("fd", s.fd)] {
            out.write_record([
                run.clone(),
                name.to_string(),
                format!("{:.16e}", m.value),
                format!("{:.16e}", m.stddev),
                s.samples.to_string(),
                s.repeats.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
