//! Inception-style score and Fréchet distance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance on row sums of probability vectors.
const SIMPLEX_TOL: f64 = 1e-6;

/// `exp(E_x KL(p(y|x) || p(y)))` over the rows of `probs`.
pub fn inception_style_score(probs: &[Vec<f64>]) -> Result<f64> {
    let c = probs.first().map(|r| r.len()).ok_or_else(|| Error::invalid("score needs at least one row"))?;
    for (i, row) in probs.iter().enumerate() {
        if row.len() != c || c == 0 {
            return Err(Error::invalid(format!("row {i} has {} classes, expected {c}", row.len())));
        }
        let s: f64 = row.iter().sum();
        if row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("row {i} is not a probability vector (sum {s})")));
        }
    }
    let n = probs.len() as f64;
    let mut marginal = vec![0.0; c];
    for row in probs {
        for (m, p) in marginal.iter_mut().zip(row) {
            *m += p / n;
        }
    }
    let mean_kl = probs
        .iter()
        .map(|row| {
            row.iter()
                .zip(&marginal)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, m)| p * (p / m).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    Ok(mean_kl.exp())
}

/// Kahan-compensated running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Streaming first and second moments of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureAccumulator {
    dim: usize,
    count: usize,
    sum: Vec<Kahan>,
    /// Upper triangle of `sum x x^T`, row-major.
    outer: Vec<Kahan>,
}

impl FeatureAccumulator {
    pub fn new(dim: usize) -> Self {
        FeatureAccumulator {
            dim,
            count: 0,
            sum: vec![Kahan::default(); dim],
            outer: vec![Kahan::default(); dim * (dim + 1) / 2],
        }
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!("feature has {} entries, expected {}", x.len(), self.dim)));
        }
        let mut k = 0;
        for i in 0..self.dim {
            self.sum[i].add(x[i]);
            for j in i..self.dim {
                self.outer[k].add(x[i] * x[j]);
                k += 1;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &FeatureAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::invalid("merging accumulators of different dimension"));
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            a.add(b.sum);
            a.add(-b.comp);
        }
        for (a, b) in self.outer.iter_mut().zip(&other.outer) {
            a.add(b.sum);
            a.add(-b.comp);
        }
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean and unbiased covariance (zero covariance for a single sample).
    pub fn finish(&self) -> Result<FeatureStats> {
        if self.count == 0 {
            return Err(Error::invalid("no features accumulated"));
        }
        let n = self.count as f64;
        let d = self.dim;
        let mean: Vec<f64> = self.sum.iter().map(|s| s.sum / n).collect();
        let mut cov = vec![0.0; d * d];
        if self.count > 1 {
            let mut k = 0;
            for i in 0..d {
                for j in i..d {
                    let c = (self.outer[k].sum - n * mean[i] * mean[j]) / (n - 1.0);
                    cov[i * d + j] = c;
                    cov[j * d + i] = c;
                    k += 1;
                }
            }
        }
        FeatureStats::new(mean, cov, self.count)
    }
}

/// Gaussian summary of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Row-major `dim x dim`, symmetric.
    pub cov: Vec<f64>,
    pub count: usize,
}

impl FeatureStats {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::invalid(format!(
                "covariance has {} entries for a {d}-dim mean",
                cov.len()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (cov[i * d + j], cov[j * d + i]);
                if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::invalid(format!("covariance not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(FeatureStats { mean, cov, count })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).ok_or_else(|| Error::invalid("no feature rows"))?;
        let mut acc = FeatureAccumulator::new(d);
        for r in rows {
            acc.push(r)?;
        }
        acc.finish()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let m = DMatrix::from_row_slice(d, d, &self.cov);
        (&m + m.transpose()) * 0.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrechetReport {
    pub distance: f64,
    /// Magnitude of the most negative eigenvalue floored to zero before the
    /// square root; `0` when none was negative.
    pub floored: f64,
}

/// `|μ_a - μ_b|^2 + tr(Σ_a + Σ_b - 2 (Σ_a Σ_b)^{1/2})`.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    frechet_report(a, b).map(|r| r.distance)
}

/// [`frechet_distance`] with the eigenvalue floor that was applied. The
/// cross term uses `tr((Σ_a Σ_b)^{1/2}) = tr((A Σ_b A)^{1/2})` with
/// `A = Σ_a^{1/2}`, so both square roots are of symmetric matrices.
pub fn frechet_report(a: &FeatureStats, b: &FeatureStats) -> Result<FrechetReport> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "Fréchet distance between {}-dim and {}-dim statistics",
            a.dim(),
            b.dim()
        )));
    }
    let d = DVector::from_column_slice(&a.mean) - DVector::from_column_slice(&b.mean);
    let (sa, sb) = (a.cov_matrix(), b.cov_matrix());
    let mut floored = 0.0f64;
    let (root_a, f) = sqrt_psd(&sa);
    floored = floored.max(f);
    let m = &root_a * &sb * &root_a;
    let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
    let mut cross = 0.0;
    for &l in eig.eigenvalues.iter() {
        if l < 0.0 {
            floored = floored.max(-l);
        } else {
            cross += l.sqrt();
        }
    }
    let dist = d.norm_squared() + sa.trace() + sb.trace() - 2.0 * cross;
    Ok(FrechetReport {
        distance: dist.max(0.0),
        floored,
    })
}

fn sqrt_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let mut floored = 0.0f64;
    let roots = eig.eigenvalues.map(|l| {
        if l < 0.0 {
            floored = floored.max(-l);
            0.0
        } else {
            l.sqrt()
        }
    });
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&roots) * q.transpose(), floored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(mean: f64, var: f64, n: usize) -> FeatureStats {
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            cov[i * n + i] = var;
        }
        FeatureStats::new(vec![mean; n], cov, 10).unwrap()
    }

    #[test]
    fn score_extremes() {
        let same = vec![vec![0.2, 0.3, 0.5]; 7];
        assert!((inception_style_score(&same).unwrap() - 1.0).abs() < 1e-12);
        let onehot: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| (i == j) as u8 as f64).collect()).collect();
        assert!((inception_style_score(&onehot).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_simplex_rejected() {
        assert!(inception_style_score(&[vec![0.5, 0.6]]).is_err());
        assert!(inception_style_score(&[vec![1.5, -0.5]]).is_err());
    }

    #[test]
    fn closed_forms() {
        let n = 5;
        let fd = frechet_distance(&iso(0.0, 2.0, n), &iso(3.0, 2.0, n)).unwrap();
        assert!((fd - 9.0 * n as f64).abs() < 1e-8);
        let fd = frechet_distance(&iso(1.0, 4.0, n), &iso(1.0, 9.0, n)).unwrap();
        assert!((fd - n as f64).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(frechet_distance(&iso(0.0, 1.0, 2), &iso(0.0, 1.0, 3)).is_err());
    }
}
