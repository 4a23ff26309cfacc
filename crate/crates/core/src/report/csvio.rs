//! Run artifacts as CSV. Reals use 17 significant digits so every `f64`
//! survives a round trip.

use std::path::Path;

use crate::curvature::{BatchKind, GradNormRecord, SpectrumRecord};
use crate::error::{Error, Result};
use crate::gan::LossRecord;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, file: &str, row: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::invalid(format!("{file}: row {row}: bad number {s:?}")))
}

fn parse_usize(s: &str, file: &str, row: usize) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::invalid(format!("{file}: row {row}: bad integer {s:?}")))
}

pub fn write_losses(path: &Path, rows: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "loss_d", "loss_g"])?;
    for r in rows {
        w.write_record([r.iteration.to_string(), fmt_f64(r.loss_d), fmt_f64(r.loss_g)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_losses(path: &Path) -> Result<Vec<LossRecord>> {
    let mut out = Vec::new();
    for (i, rec) in csv::Reader::from_path(path)?.records().enumerate() {
        let rec = rec?;
        out.push(LossRecord {
            iteration: parse_usize(&rec[0], "losses.csv", i + 1)?,
            loss_d: parse_f64(&rec[1], "losses.csv", i + 1)?,
            loss_g: parse_f64(&rec[2], "losses.csv", i + 1)?,
        });
    }
    Ok(out)
}

/// `iteration,lambda_plus,lambda_minus,breakdown,top_1..top_k,bottom_1..bottom_k`;
/// missing Ritz values are left empty.
pub fn write_spectra(path: &Path, rows: &[SpectrumRecord], k: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string(), "lambda_plus".into(), "lambda_minus".into(), "breakdown".into()];
    header.extend((1..=k).map(|i| format!("top_{i}")));
    header.extend((1..=k).map(|i| format!("bottom_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.iteration.to_string(),
            fmt_f64(r.lambda_plus),
            fmt_f64(r.lambda_minus),
            (r.breakdown as u8).to_string(),
        ];
        for vals in [&r.eigenvalues, &r.bottom] {
            rec.extend((0..k).map(|i| vals.get(i).map_or(String::new(), |&v| fmt_f64(v))));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectra(path: &Path) -> Result<Vec<SpectrumRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let k = rdr.headers()?.iter().filter(|h| h.starts_with("top_")).count();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let vals = |from: usize| -> Result<Vec<f64>> {
            (from..from + k)
                .map(|j| rec.get(j).unwrap_or(""))
                .filter(|s| !s.is_empty())
                .map(|s| parse_f64(s, "spectra.csv", row))
                .collect()
        };
        out.push(SpectrumRecord {
            iteration: parse_usize(&rec[0], "spectra.csv", row)?,
            lambda_plus: parse_f64(&rec[1], "spectra.csv", row)?,
            lambda_minus: parse_f64(&rec[2], "spectra.csv", row)?,
            breakdown: &rec[3] == "1",
            eigenvalues: vals(4)?,
            bottom: vals(4 + k)?,
        });
    }
    Ok(out)
}

/// One gradient-norm probe row.
#[derive(Clone, Debug, PartialEq)]
pub struct GradNormRow {
    pub iteration: usize,
    pub batch: String,
    pub node: usize,
    pub op: String,
    pub norm: f64,
}

pub fn write_gradnorms(path: &Path, rows: &[(usize, GradNormRecord)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "batch", "node", "op", "norm"])?;
    for (it, r) in rows {
        w.write_record([
            it.to_string(),
            r.batch_kind.as_str().to_string(),
            r.node.to_string(),
            r.op_kind.to_string(),
            fmt_f64(r.norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gradnorms(path: &Path) -> Result<Vec<GradNormRow>> {
    let mut out = Vec::new();
    for (i, rec) in csv::Reader::from_path(path)?.records().enumerate() {
        let rec = rec?;
        let batch = rec[1].to_string();
        if batch != BatchKind::Real.as_str() && batch != BatchKind::Fake.as_str() {
            return Err(Error::invalid(format!("gradnorms.csv: row {}: bad batch {batch:?}", i + 1)));
        }
        out.push(GradNormRow {
            iteration: parse_usize(&rec[0], "gradnorms.csv", i + 1)?,
            batch,
            node: parse_usize(&rec[2], "gradnorms.csv", i + 1)?,
            op: rec[3].to_string(),
            norm: parse_f64(&rec[4], "gradnorms.csv", i + 1)?,
        });
    }
    Ok(out)
}

pub fn write_svc_audit(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "max_sigma"])?;
    for (it, s) in rows {
        w.write_record([it.to_string(), fmt_f64(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Number of `top_*` columns in a spectra file.
pub fn spectra_k(path: &Path) -> Result<usize> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.headers()?.iter().filter(|h| h.starts_with("top_")).count())
}
