use nalgebra::DMatrix;

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// `exp(mean_n KL(P_n ‖ P̄))` for an n×L matrix of class probabilities.
pub fn inception_score(p: &DMatrix<f64>) -> Result<f64> {
    let (n, l) = p.shape();
    if n == 0 || l == 0 {
        return Err(Error::Shape("empty probability matrix".into()));
    }
    for i in 0..n {
        let row = p.row(i);
        if row.iter().any(|&v| !(v >= 0.0)) || (row.sum() - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidArgument(format!("row {i} is not a probability vector")));
        }
    }
    let marginal = p.row_mean();
    let mut kl = 0.0;
    for i in 0..n {
        for c in 0..l {
            let v = p[(i, c)];
            if v > 0.0 {
                kl += v * (v / marginal[c]).ln();
            }
        }
    }
    Ok((kl / n as f64).exp())
}

/// `KL(gen ‖ true)` between label histograms after adding `smoothing` to
/// every count and normalizing.
pub fn reverse_kl(gen_counts: &[f64], true_counts: &[f64], smoothing: f64) -> Result<f64> {
    if gen_counts.len() != true_counts.len() || gen_counts.is_empty() {
        return Err(Error::Shape("count vectors must be non-empty and equally long".into()));
    }
    if gen_counts.iter().chain(true_counts).any(|&c| !(c >= 0.0)) || !(smoothing >= 0.0) {
        return Err(Error::InvalidArgument("counts and smoothing must be nonnegative".into()));
    }
    let normalize = |c: &[f64]| -> Result<Vec<f64>> {
        let total: f64 = c.iter().map(|v| v + smoothing).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("histogram has no mass".into()));
        }
        Ok(c.iter().map(|v| (v + smoothing) / total).collect())
    };
    let p = normalize(gen_counts)?;
    let q = normalize(true_counts)?;
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(&q) {
        if pi > 0.0 {
            if qi == 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl.max(0.0))
}
