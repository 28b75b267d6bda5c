use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel applied to per-coordinate distances `t = |x_i − x_j|` with
/// bandwidth `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DhsicKernel {
    /// `exp(−t / h²)`.
    #[default]
    AsDisplayed,
    /// `exp(−t² / (2h²))`.
    Gaussian,
}

impl DhsicKernel {
    fn eval(self, t: f64, h: f64) -> f64 {
        match self {
            DhsicKernel::AsDisplayed => (-t / (h * h)).exp(),
            DhsicKernel::Gaussian => (-t * t / (2.0 * h * h)).exp(),
        }
    }
}

/// Median of `|x_i − x_j|` over `i < j`; `None` when it is zero.
pub fn median_bandwidth(x: &[f64]) -> Option<f64> {
    let mut d = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            d.push((x[i] - x[j]).abs());
        }
    }
    if d.is_empty() {
        return None;
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    };
    (median > 0.0).then_some(median)
}

pub fn dhsic(samples: &DMatrix<f64>) -> Result<f64> {
    dhsic_with(samples, DhsicKernel::default())
}

/// Three-term dHSIC estimator over the columns of an n×k sample matrix,
/// one kernel per column with median-heuristic bandwidth:
///
/// `(1/n²) Σ_{ij} Π_ℓ K_ℓ(i,j) + Π_ℓ (1/n²) Σ_{ij} K_ℓ(i,j) − (2/n) Σ_i Π_ℓ (1/n) Σ_j K_ℓ(i,j)`.
pub fn dhsic_with(samples: &DMatrix<f64>, kernel: DhsicKernel) -> Result<f64> {
    let (n, k) = samples.shape();
    if n < 2 || k < 2 {
        return Err(Error::Shape(format!("dHSIC needs n >= 2 and k >= 2, got {n}x{k}")));
    }
    let nf = n as f64;
    let mut joint = DMatrix::<f64>::from_element(n, n, 1.0);
    let mut row_means = nalgebra::DVector::<f64>::from_element(n, 1.0);
    let mut product_term = 1.0;
    for l in 0..k {
        let x: Vec<f64> = samples.column(l).iter().copied().collect();
        let h = median_bandwidth(&x).unwrap_or_else(|| {
            log::warn!("coordinate {} has zero median distance; using bandwidth 1", l + 1);
            1.0
        });
        let mut total = 0.0;
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                let v = kernel.eval((x[i] - x[j]).abs(), h);
                joint[(i, j)] *= v;
                row_sum += v;
            }
            row_means[i] *= row_sum / nf;
            total += row_sum;
        }
        product_term *= total / (nf * nf);
    }
    let first = joint.sum() / (nf * nf);
    let cross = 2.0 * row_means.sum() / nf;
    Ok(first + product_term - cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_samples_give_zero() {
        let x = DMatrix::from_element(10, 3, 0.7);
        assert!(dhsic(&x).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median_bandwidth(&[0.0, 1.0]), Some(1.0));
        // distances 1, 3, 2
        assert_eq!(median_bandwidth(&[0.0, 1.0, 3.0]), Some(2.0));
        // distances 1,2,4,1,3,2 → sorted 1,1,2,2,3,4
        assert_eq!(median_bandwidth(&[0.0, 1.0, 2.0, 4.0]), Some(2.0));
        assert_eq!(median_bandwidth(&[5.0, 5.0, 5.0]), None);
    }

    #[test]
    fn gaussian_variant_two_points() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let e = (-0.5f64).exp();
        let oracle = 0.5 * (1.0 + e * e) - 0.25 * (1.0 + e) * (1.0 + e);
        assert!((dhsic_with(&x, DhsicKernel::Gaussian).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_inputs() {
        assert!(dhsic(&DMatrix::zeros(1, 2)).is_err());
        assert!(dhsic(&DMatrix::zeros(5, 1)).is_err());
    }

    proptest! {
        #[test]
        fn nonnegative(data in prop::collection::vec(-5.0f64..5.0, 6..60)) {
            let n = data.len() / 3;
            let x = DMatrix::from_row_slice(n, 3, &data[..3 * n]);
            prop_assert!(dhsic(&x).unwrap() >= -1e-12);
        }
    }
}
