use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Encoder, FactorSampler, MetricReport};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorVaeConfig {
    pub groups_per_factor: usize,
    pub group_size: usize,
    /// Samples used to estimate each code dimension's variance.
    pub reference_samples: usize,
    /// Dimensions whose reference variance falls below this do not vote.
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for FactorVaeConfig {
    fn default() -> Self {
        Self {
            groups_per_factor: 100,
            group_size: 100,
            reference_samples: 10_000,
            variance_floor: 1e-10,
            seed: 0,
        }
    }
}

impl FactorVaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups_per_factor == 0 || self.group_size < 2 || self.reference_samples < 2 {
            return Err(Error::InvalidArgument(
                "need groups_per_factor >= 1, group_size >= 2, reference_samples >= 2".into(),
            ));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidArgument("variance_floor must be > 0".into()));
        }
        Ok(())
    }
}

fn column_variances(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .collect()
}

/// Majority-vote accuracy of the fixed-factor classifier.
///
/// Each group holds one factor fixed; its vote is the code dimension with
/// the smallest variance after dividing by that dimension's reference
/// variance. Every vote is then mapped to the factor it most often
/// co-occurs with (ties to the lower factor index), and the score is the
/// fraction of groups classified correctly.
///
/// Groups use independent seed streams derived from `cfg.seed`, so the
/// result does not depend on the thread count.
pub fn factorvae_metric<S, E>(sampler: &S, enc: &E, cfg: &FactorVaeConfig) -> Result<MetricReport>
where
    S: FactorSampler + ?Sized,
    E: Encoder + ?Sized,
{
    cfg.validate()?;
    let n_factors = sampler.num_factors();
    let k = enc.code_dim();
    if n_factors == 0 || k == 0 {
        return Err(Error::InvalidArgument("need at least one factor and one code".into()));
    }

    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0));
    let reference = sampler.sample(cfg.reference_samples, &mut rng)?;
    let ref_var = column_variances(&enc.encode_batch(&reference.samples)?);
    let active: Vec<usize> = (0..k).filter(|&j| ref_var[j] >= cfg.variance_floor).collect();
    if active.is_empty() {
        return Err(Error::DegenerateEncoder(
            "every code dimension has reference variance below the floor".into(),
        ));
    }

    let total = n_factors * cfg.groups_per_factor;
    let votes: Vec<(usize, usize)> = (0..total)
        .into_par_iter()
        .map(|g| {
            let factor = g / cfg.groups_per_factor;
            let mut rng = rng_from_seed(derive_seed(cfg.seed, 1 + g as u64));
            let batch = sampler.sample_fixed(factor, cfg.group_size, &mut rng)?;
            let var = column_variances(&enc.encode_batch(&batch.samples)?);
            let mut best = active[0];
            for &j in &active[1..] {
                if var[j] / ref_var[j] < var[best] / ref_var[best] {
                    best = j;
                }
            }
            Ok((best, factor))
        })
        .collect::<Result<_>>()?;

    let mut counts = DMatrix::<usize>::zeros(k, n_factors);
    for &(j, i) in &votes {
        counts[(j, i)] += 1;
    }
    let mut correct = 0;
    for j in 0..k {
        correct += counts.row(j).iter().copied().max().unwrap_or(0);
    }
    let accuracy = correct as f64 / total as f64;

    let per_factor = cfg.groups_per_factor as f64;
    let matrix = counts.map(|c| c as f64 / per_factor);
    let mut report = MetricReport::new("factorvae", accuracy)
        .with_detail("error_rate", 1.0 - accuracy)
        .with_detail("excluded_dims", (k - active.len()) as f64);
    if let Ok(red) = metric_matrix_reduction(&matrix) {
        report = report
            .with_detail("matrix_reduction_raw", red.raw)
            .with_detail("matrix_reduction_normalized", red.normalized);
    }
    report.matrix = Some(matrix);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixReduction {
    /// Sum of the top `k̂` row maxima.
    pub raw: f64,
    /// `raw / k̂`.
    pub normalized: f64,
}

/// Reduces a `k×k̂` score matrix: take every row's maximum, then sum the
/// largest `k̂` of them.
pub fn metric_matrix_reduction(m: &DMatrix<f64>) -> Result<MatrixReduction> {
    let (k, k_hat) = m.shape();
    if k_hat == 0 {
        return Err(Error::Shape("metric matrix has no factor columns".into()));
    }
    if k < k_hat {
        return Err(Error::Shape(format!("need k >= k̂, got {k} < {k_hat}")));
    }
    let mut maxima: Vec<f64> = m
        .row_iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    maxima.sort_by(|a, b| b.total_cmp(a));
    let raw: f64 = maxima[..k_hat].iter().sum();
    Ok(MatrixReduction {
        raw,
        normalized: raw / k_hat as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{FactorBatch, FnEncoder, LinearEncoder};
    use crate::rng::LabRng;
    use rand::Rng;

    /// Samples are the factors themselves, uniform on [0, 1).
    struct UniformFactors(usize);

    impl FactorSampler for UniformFactors {
        fn num_factors(&self) -> usize {
            self.0
        }
        fn sample(&self, n: usize, rng: &mut LabRng) -> Result<FactorBatch> {
            let f = DMatrix::from_fn(n, self.0, |_, _| rng.random::<f64>());
            Ok(FactorBatch {
                factors: f.clone(),
                samples: f,
            })
        }
        fn sample_fixed(&self, fixed: usize, n: usize, rng: &mut LabRng) -> Result<FactorBatch> {
            let mut b = self.sample(n, rng)?;
            let v = rng.random::<f64>();
            b.factors.column_mut(fixed).fill(v);
            b.samples.column_mut(fixed).fill(v);
            Ok(b)
        }
    }

    fn small() -> FactorVaeConfig {
        FactorVaeConfig {
            groups_per_factor: 20,
            group_size: 30,
            reference_samples: 1000,
            ..Default::default()
        }
    }

    #[test]
    fn identity_encoder_is_perfect() {
        let enc = LinearEncoder::new(DMatrix::identity(3, 3)).unwrap();
        let r = factorvae_metric(&UniformFactors(3), &enc, &small()).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(r.detail("matrix_reduction_normalized"), Some(1.0));
    }

    #[test]
    fn constant_encoder_is_degenerate() {
        let enc = FnEncoder::new(2, |_| vec![1.0, 2.0]);
        let err = factorvae_metric(&UniformFactors(2), &enc, &small()).unwrap_err();
        assert!(matches!(err, Error::DegenerateEncoder(_)));
    }

    #[test]
    fn floored_dimension_never_votes() {
        // code 0 is constant, code 1 copies factor 0, code 2 copies factor 1
        let enc = FnEncoder::new(3, |x| vec![0.0, x[0], x[1]]);
        let r = factorvae_metric(&UniformFactors(2), &enc, &small()).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(r.detail("excluded_dims"), Some(1.0));
        let m = r.matrix.unwrap();
        assert_eq!(m.row(0).sum(), 0.0);
    }

    #[test]
    fn reduction_hand_cases() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let r = metric_matrix_reduction(&eye).unwrap();
        assert_eq!((r.raw, r.normalized), (3.0, 1.0));
        let m = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.2, 0.8, 0.5, 0.5]);
        let r = metric_matrix_reduction(&m).unwrap();
        assert!((r.raw - 1.7).abs() < 1e-15);
        assert!((r.normalized - 0.85).abs() < 1e-15);
        assert_eq!(metric_matrix_reduction(&DMatrix::zeros(4, 2)).unwrap().raw, 0.0);
        assert!(metric_matrix_reduction(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let enc = LinearEncoder::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.4, 1.0])).unwrap();
        let cfg = small();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| factorvae_metric(&UniformFactors(2), &enc, &cfg).unwrap());
        let multi = factorvae_metric(&UniformFactors(2), &enc, &cfg).unwrap();
        assert_eq!(single, multi);
    }
}
