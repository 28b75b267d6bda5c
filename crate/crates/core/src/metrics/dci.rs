use nalgebra::DMatrix;

use super::{lasso_fit, standardize_columns, Encoder, FactorDataset, MetricReport};
use crate::error::{Error, Result};

pub const DCI_DEFAULT_LAMBDA: f64 = 0.01;

/// `R[i][j] = |w_i|` from a Lasso regression of standardized factor `j` on
/// the standardized codes.
pub fn importance_matrix(codes: &DMatrix<f64>, factors: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if codes.nrows() != factors.nrows() {
        return Err(Error::Shape("codes and factors must have the same rows".into()));
    }
    let x = standardize_columns(codes);
    let y = standardize_columns(factors);
    let mut r = DMatrix::zeros(codes.ncols(), factors.ncols());
    for j in 0..factors.ncols() {
        let w = lasso_fit(&x, &y.column(j).into_owned(), lambda)?;
        r.set_column(j, &w.abs());
    }
    Ok(r)
}

/// DCI disentanglement: per code `D_i = 1 − H_{k̂}(W_i·)` where `W_i·` is the
/// normalized importance row and entropy is taken in base `k̂`. The score
/// averages `D_i` over codes with non-zero importance.
pub fn dci_disentanglement<E: Encoder + ?Sized>(ds: &FactorDataset, enc: &E, lasso_lambda: f64) -> Result<MetricReport> {
    let k = enc.code_dim();
    if ds.len() < 10 * k {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for {k} codes, got {}",
            10 * k,
            ds.len()
        )));
    }
    let codes = enc.encode_batch(ds.samples())?;
    let r = importance_matrix(&codes, ds.factors(), lasso_lambda)?;
    let k_hat = ds.num_factors();
    let log_base = (k_hat as f64).ln();

    let mut report = MetricReport::new("dci", f64::NAN);
    let mut scores = Vec::new();
    for i in 0..k {
        let row = r.row(i);
        let total = row.sum();
        if total == 0.0 {
            log::warn!("code {} has no importance for any factor; excluded", i + 1);
            continue;
        }
        let entropy: f64 = row
            .iter()
            .map(|&v| v / total)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        let d_i = if k_hat > 1 {
            (1.0 - entropy / log_base).clamp(0.0, 1.0)
        } else {
            1.0
        };
        report.details.push((format!("code_{}", i + 1), d_i));
        scores.push(d_i);
    }
    if scores.is_empty() {
        return Err(Error::DegenerateEncoder("every importance row is zero".into()));
    }
    report.score = scores.iter().sum::<f64>() / scores.len() as f64;
    report.matrix = Some(r);
    Ok(report)
}
