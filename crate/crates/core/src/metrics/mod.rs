//! Disentanglement and sample-quality metrics.
//!
//! All metrics are pure functions of their inputs (plus a seed where
//! sampling is involved). Encoders and factor samplers are abstracted
//! behind small traits so closed-form linear models and test fixtures share
//! the same code paths.

mod dci;
mod dhsic;
mod factorvae;
mod quality;
mod stats;

pub use dci::{dci_disentanglement, importance_matrix, DCI_DEFAULT_LAMBDA};
pub use dhsic::{dhsic, dhsic_with, median_bandwidth, DhsicKernel};
pub use factorvae::{factorvae_metric, metric_matrix_reduction, FactorVaeConfig, MatrixReduction};
pub use quality::{inception_score, reverse_kl};
pub use stats::{fractional_ranks, lasso_fit, lasso_fit_with, spearman_rho, standardize_columns, LassoConfig};

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::lingauss::{conditional_mean_map, row_major, LinearGenerator};
use crate::report::{fmt_num, read_numeric_csv, CsvTable};
use crate::rng::LabRng;

/// Samples paired with their ground-truth factor values.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDataset {
    samples: DMatrix<f64>,
    factors: DMatrix<f64>,
    cardinalities: Vec<usize>,
}

impl FactorDataset {
    /// `cardinalities[j]` is the number of grid values of factor `j`, or 0
    /// for a continuous factor.
    pub fn new(samples: DMatrix<f64>, factors: DMatrix<f64>, cardinalities: Vec<usize>) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::Shape("dataset needs at least one sample".into()));
        }
        if samples.nrows() != factors.nrows() {
            return Err(Error::Shape(format!(
                "{} samples but {} factor rows",
                samples.nrows(),
                factors.nrows()
            )));
        }
        if cardinalities.len() != factors.ncols() {
            return Err(Error::Shape(format!(
                "{} cardinalities for {} factors",
                cardinalities.len(),
                factors.ncols()
            )));
        }
        Ok(Self {
            samples,
            factors,
            cardinalities,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn factors(&self) -> &DMatrix<f64> {
        &self.factors
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn num_factors(&self) -> usize {
        self.factors.ncols()
    }

    /// Writes `samples.csv` (`x_1..x_p`) and `factors.csv` (`f_1..f_k`).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        matrix_table("x", &self.samples).write_to(&dir.join("samples.csv"))?;
        matrix_table("f", &self.factors).write_to(&dir.join("factors.csv"))?;
        Ok(())
    }

    /// Reads `samples.csv` and `factors.csv`. An `image_index` column in the
    /// factor file is ignored. A factor column counts as discrete, with
    /// cardinality equal to its number of distinct values, when it has at
    /// most half as many distinct values as there are rows.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let (_, sample_rows) = read_numeric_csv(&std::fs::read_to_string(dir.join("samples.csv"))?)?;
        let (header, factor_rows) = read_numeric_csv(&std::fs::read_to_string(dir.join("factors.csv"))?)?;
        let keep: Vec<usize> = (0..header.len()).filter(|&j| header[j] != "image_index").collect();
        let samples = rows_to_matrix(&sample_rows)?;
        let factor_rows: Vec<Vec<f64>> = factor_rows
            .iter()
            .map(|row| keep.iter().map(|&j| row[j]).collect())
            .collect();
        let factors = rows_to_matrix(&factor_rows)?;
        let n = factors.nrows();
        let cardinalities = (0..factors.ncols())
            .map(|j| {
                let distinct: BTreeSet<u64> = factors.column(j).iter().map(|v| v.to_bits()).collect();
                if 2 * distinct.len() <= n {
                    distinct.len()
                } else {
                    0
                }
            })
            .collect();
        Self::new(samples, factors, cardinalities)
    }
}

fn matrix_table(prefix: &str, m: &DMatrix<f64>) -> CsvTable {
    let mut t = CsvTable::new((1..=m.ncols()).map(|j| format!("{prefix}_{j}")));
    for i in 0..m.nrows() {
        t.push(m.row(i).iter().map(|&v| fmt_num(v)));
    }
    t
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Error::Parse("CSV has no data".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
}

/// A deterministic map from sample vectors to code vectors.
pub trait Encoder: Sync {
    fn code_dim(&self) -> usize;

    fn encode(&self, x: &[f64]) -> Result<DVector<f64>>;

    /// Encodes every row of `samples` (n×p), returning an n×k matrix.
    fn encode_batch(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.code_dim();
        let mut out = DMatrix::zeros(samples.nrows(), k);
        for i in 0..samples.nrows() {
            let row: Vec<f64> = samples.row(i).iter().copied().collect();
            let code = self.encode(&row)?;
            if code.len() != k {
                return Err(Error::Shape(format!("encoder returned {} codes, declared {k}", code.len())));
            }
            out.set_row(i, &code.transpose());
        }
        Ok(out)
    }
}

/// `x ↦ Wx` for a fixed `k×p` matrix `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    weights: DMatrix<f64>,
}

impl LinearEncoder {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::Shape("encoder matrix must be non-empty".into()));
        }
        Ok(Self { weights })
    }

    /// The posterior-mean encoder `BᵀΣ⁻¹` of a linear generator.
    pub fn from_generator(gen: &LinearGenerator) -> Result<Self> {
        Self::new(conditional_mean_map(gen)?)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        row_major(&self.weights)
    }
}

impl Encoder for LinearEncoder {
    fn code_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn encode(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("sample has length {}, encoder expects {}", x.len(), self.input_dim())));
        }
        Ok(&self.weights * DVector::from_column_slice(x))
    }

    fn encode_batch(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if samples.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "samples have {} columns, encoder expects {}",
                samples.ncols(),
                self.input_dim()
            )));
        }
        Ok(samples * self.weights.transpose())
    }
}

/// Wraps a closure; handy for lookup-table fixtures.
pub struct FnEncoder<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> FnEncoder<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64> + Sync> Encoder for FnEncoder<F> {
    fn code_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec((self.f)(x)))
    }
}

/// A batch of samples with their factors, rows aligned.
#[derive(Debug, Clone)]
pub struct FactorBatch {
    pub factors: DMatrix<f64>,
    pub samples: DMatrix<f64>,
}

/// Source of samples with independently varying factors, able to hold one
/// factor fixed across a group.
pub trait FactorSampler: Sync {
    fn num_factors(&self) -> usize;

    /// `n` draws with all factors varying.
    fn sample(&self, n: usize, rng: &mut LabRng) -> Result<FactorBatch>;

    /// `n` draws sharing one random value of factor `fixed`.
    fn sample_fixed(&self, fixed: usize, n: usize, rng: &mut LabRng) -> Result<FactorBatch>;
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut LabRng) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn generate_batch(gen: &LinearGenerator, codes: DMatrix<f64>, rng: &mut LabRng) -> FactorBatch {
    let noise = gaussian_matrix(codes.nrows(), gen.d(), rng);
    let samples = &codes * gen.b().transpose() + noise * gen.a().transpose();
    FactorBatch { factors: codes, samples }
}

impl FactorSampler for LinearGenerator {
    fn num_factors(&self) -> usize {
        self.r()
    }

    fn sample(&self, n: usize, rng: &mut LabRng) -> Result<FactorBatch> {
        let codes = gaussian_matrix(n, self.r(), rng);
        Ok(generate_batch(self, codes, rng))
    }

    fn sample_fixed(&self, fixed: usize, n: usize, rng: &mut LabRng) -> Result<FactorBatch> {
        if fixed >= self.r() {
            return Err(Error::IndexOutOfRange {
                index: fixed,
                len: self.r(),
            });
        }
        let mut codes = gaussian_matrix(n, self.r(), rng);
        let value: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        codes.column_mut(fixed).fill(value);
        Ok(generate_batch(self, codes, rng))
    }
}

impl FactorDataset {
    fn take_rows(&self, idx: &[usize]) -> FactorBatch {
        FactorBatch {
            factors: self.factors.select_rows(idx),
            samples: self.samples.select_rows(idx),
        }
    }
}

/// Resamples rows of a finite dataset with replacement. Fixing a factor
/// picks a random row and draws from the rows sharing its value, so the
/// fixed factor must be discrete.
impl FactorSampler for FactorDataset {
    fn num_factors(&self) -> usize {
        self.factors.ncols()
    }

    fn sample(&self, n: usize, rng: &mut LabRng) -> Result<FactorBatch> {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        Ok(self.take_rows(&idx))
    }

    fn sample_fixed(&self, fixed: usize, n: usize, rng: &mut LabRng) -> Result<FactorBatch> {
        if fixed >= self.num_factors() {
            return Err(Error::IndexOutOfRange {
                index: fixed,
                len: self.num_factors(),
            });
        }
        if self.cardinalities[fixed] == 0 {
            return Err(Error::InvalidArgument(format!(
                "factor {fixed} is continuous and cannot be held fixed in a finite dataset"
            )));
        }
        let anchor = rng.random_range(0..self.len());
        let value = self.factors[(anchor, fixed)];
        let pool: Vec<usize> = (0..self.len()).filter(|&i| self.factors[(i, fixed)] == value).collect();
        let idx: Vec<usize> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        Ok(self.take_rows(&idx))
    }
}

/// A named score with optional breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub score: f64,
    pub details: Vec<(String, f64)>,
    pub matrix: Option<DMatrix<f64>>,
}

impl MetricReport {
    pub fn new(metric: impl Into<String>, score: f64) -> Self {
        Self {
            metric: metric.into(),
            score,
            details: Vec::new(),
            matrix: None,
        }
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.push((key.into(), value));
        self
    }

    pub fn detail(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Appends rows of `metric,score,detail_key,detail_value`; a report
    /// without details gets a single row with empty detail fields.
    pub fn append_rows(&self, table: &mut CsvTable) {
        let score = fmt_num(self.score);
        if self.details.is_empty() {
            table.push([self.metric.clone(), score.clone(), String::new(), String::new()]);
        }
        for (k, v) in &self.details {
            table.push([self.metric.clone(), score.clone(), k.clone(), fmt_num(*v)]);
        }
    }

    pub fn csv_table(reports: &[MetricReport]) -> CsvTable {
        let mut t = CsvTable::new(["metric", "score", "detail_key", "detail_value"]);
        for r in reports {
            r.append_rows(&mut t);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::rng::rng_from_seed;

    #[test]
    fn linear_sampler_holds_factor_fixed() {
        let gen = LinearGenerator::pca_exact(SymMatrix::from_diagonal(&[4.0, 2.0, 1.0]), 2).unwrap();
        let mut rng = rng_from_seed(5);
        let batch = gen.sample_fixed(1, 50, &mut rng).unwrap();
        let first = batch.factors[(0, 1)];
        assert!(batch.factors.column(1).iter().all(|&v| v == first));
        assert!(batch.factors.column(0).iter().any(|&v| v != batch.factors[(0, 0)]));
        assert_eq!(batch.samples.shape(), (50, 3));
        assert!(gen.sample_fixed(2, 5, &mut rng).is_err());
    }

    #[test]
    fn linear_encoder_batch_matches_rowwise() {
        let enc = LinearEncoder::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 0.5])).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 0.0, -2.0]);
        let batch = enc.encode_batch(&x).unwrap();
        for i in 0..2 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let single = enc.encode(&row).unwrap();
            assert_eq!(batch.row(i).transpose(), single);
        }
        assert!(enc.encode(&[1.0]).is_err());
    }

    #[test]
    fn dataset_sampler_groups_by_value() {
        let factors = DMatrix::from_row_slice(4, 2, &[0.0, 0.1, 0.0, 0.2, 1.0, 0.3, 1.0, 0.4]);
        let ds = FactorDataset::new(factors.clone(), factors, vec![2, 0]).unwrap();
        let mut rng = rng_from_seed(1);
        let b = ds.sample_fixed(0, 20, &mut rng).unwrap();
        let v = b.factors[(0, 0)];
        assert!(b.factors.column(0).iter().all(|&x| x == v));
        assert!(ds.sample_fixed(1, 3, &mut rng).is_err());
    }

    #[test]
    fn dataset_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = DMatrix::from_row_slice(4, 2, &[0.5, 1.0, 1.5, 2.0, -1.0, 0.25, 3.0, 4.0]);
        let factors = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 0.0, 1.0]);
        let ds = FactorDataset::new(samples, factors, vec![2]).unwrap();
        ds.write_dir(dir.path()).unwrap();
        assert_eq!(FactorDataset::read_dir(dir.path()).unwrap(), ds);
    }

    #[test]
    fn report_rows() {
        let r = MetricReport::new("dhsic", 0.25);
        let t = MetricReport::csv_table(&[r, MetricReport::new("dci", 0.5).with_detail("code_1", 1.0)]);
        assert_eq!(
            t.to_csv_string(),
            "metric,score,detail_key,detail_value\ndhsic,0.25,,\ndci,0.5,code_1,1\n"
        );
    }
}
