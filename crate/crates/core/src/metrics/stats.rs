use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ranks `1..=n` with ties sharing the average of the ranks they span.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation. `Ok(None)` when either input has constant
/// ranks, where the coefficient is undefined.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("lengths differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN in rank input".into()));
    }
    Ok(pearson(&fractional_ranks(a), &fractional_ranks(b)))
}

/// Centers every column and scales it to unit population variance.
/// Constant columns become all-zero.
pub fn standardize_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        } else {
            col.fill(0.0);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)‖y − Xw‖² + λ‖w‖₁` by cyclic coordinate descent.
///
/// Columns are used as given; standardize beforehand if scale matters.
/// All-zero columns get weight zero.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    lasso_fit_with(x, y, lambda, LassoConfig::default())
}

pub fn lasso_fit_with(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, cfg: LassoConfig) -> Result<DVector<f64>> {
    let (n, q) = x.shape();
    if n == 0 || q == 0 {
        return Err(Error::Shape("lasso needs a non-empty design".into()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("y has length {}, X has {n} rows", y.len())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let nf = n as f64;
    let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared() / nf).collect();
    let mut w = DVector::<f64>::zeros(q);
    let mut resid = y.clone();
    for _ in 0..cfg.max_sweeps {
        let mut max_change: f64 = 0.0;
        for j in 0..q {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = x.column(j);
            let rho = col.dot(&resid) / nf + col_sq[j] * w[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - w[j];
            if delta != 0.0 {
                resid.axpy(-delta, &col, 1.0);
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < cfg.tol {
            return Ok(w);
        }
    }
    Err(Error::NumericFailure(format!(
        "lasso did not converge in {} sweeps",
        cfg.max_sweeps
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(fractional_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_hand_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman_rho(&a, &a).unwrap(), Some(1.0));
        assert_eq!(spearman_rho(&a, &[4.0, 3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        let oracle = 1.0 - 6.0 * 2.0 / (4.0 * 15.0);
        let rho = spearman_rho(&a, &[1.0, 3.0, 2.0, 4.0]).unwrap().unwrap();
        assert!((rho - oracle).abs() < 1e-15);
        assert_eq!(spearman_rho(&a, &[2.0; 4]).unwrap(), None);
        assert!(spearman_rho(&a, &[1.0]).is_err());
    }

    #[test]
    fn lasso_zero_penalty_is_least_squares() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 1.0, -1.0, 2.0, 3.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, -0.5, 0.3, 4.0]);
        let w = lasso_fit(&x, &y, 0.0).unwrap();
        let xtx = x.transpose() * &x;
        let normal = xtx.cholesky().unwrap().solve(&(x.transpose() * &y));
        assert!((w - normal).amax() < 1e-8);
    }

    #[test]
    fn lasso_kill_threshold() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let lam = (x.transpose() * &y).amax() / 4.0;
        assert_eq!(lasso_fit(&x, &y, lam).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn lasso_single_column_closed_form() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, -1.0, 0.5]);
        let y = DVector::from_vec(vec![2.0, 3.0, -1.0, 1.0]);
        let n = 4.0;
        for lam in [0.0, 0.3, 1.0, 5.0] {
            let xy = x.column(0).dot(&y) / n;
            let xx = x.column(0).norm_squared() / n;
            let oracle = soft_threshold(xy, lam) / xx;
            assert!((lasso_fit(&x, &y, lam).unwrap()[0] - oracle).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn spearman_monotone_invariance(v in prop::collection::vec(-100.0f64..100.0, 3..30), seed in any::<u64>()) {
            let w: Vec<f64> = v.iter().enumerate().map(|(i, x)| x.sin() + (i as u64 ^ seed) as f64 * 1e-3).collect();
            let base = spearman_rho(&v, &w).unwrap();
            let transformed: Vec<f64> = v.iter().map(|x| x.powi(3) + x).collect();
            prop_assert_eq!(base, spearman_rho(&transformed, &w).unwrap());
            if let Some(r) = base {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
