//! Unsupervised model selection over pools of (generator, encoder) pairs.
//!
//! ModelCentrality fills a cross-score matrix `A_ij = f(Q_i, G_j)`,
//! symmetrizes it and ranks models by their mean similarity to the rest
//! of the pool. UDR baselines compare encoders directly through code
//! relevance matrices.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, RealMatrix, SymMatrix};
use crate::lingauss::{conditional_mean_map, from_row_major, GeneratorFile, LinearGenerator};
use crate::metrics::{
    factorvae_metric, lasso_fit, spearman_rho, standardize_columns, Encoder, FactorVaeConfig, LinearEncoder,
};
use crate::report::{fmt_num, CsvTable};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelEntry {
    pub label: String,
    pub generator: LinearGenerator,
    pub encoder: LinearEncoder,
}

impl ModelEntry {
    /// Pairs a generator with its posterior-mean encoder `BᵀΣ⁻¹`.
    pub fn with_exact_encoder(label: impl Into<String>, generator: LinearGenerator) -> Result<Self> {
        let encoder = LinearEncoder::from_generator(&generator)?;
        Ok(Self {
            label: label.into(),
            generator,
            encoder,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EncoderFile {
    k: usize,
    p: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
}

/// A model on disk: the generator fields plus optional `label` and
/// `encoder`. Without an encoder the exact one is derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(flatten)]
    generator: GeneratorFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoder: Option<EncoderFile>,
}

impl ModelEntry {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            label: Some(self.label.clone()),
            generator: GeneratorFile::from(&self.generator),
            encoder: Some(EncoderFile {
                k: self.encoder.code_dim(),
                p: self.encoder.input_dim(),
                w: self.encoder.to_row_major(),
            }),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str, default_label: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let generator = LinearGenerator::try_from(file.generator)?;
        let encoder = match file.encoder {
            Some(e) => LinearEncoder::new(from_row_major(e.k, e.p, &e.w, "W")?)?,
            None => LinearEncoder::from_generator(&generator)?,
        };
        Ok(Self {
            label: file.label.unwrap_or_else(|| default_label.to_string()),
            generator,
            encoder,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPool {
    entries: Vec<ModelEntry>,
}

impl ModelPool {
    pub fn new(entries: Vec<ModelEntry>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a pool needs at least 2 models, got {}",
                entries.len()
            )));
        }
        let k = entries[0].encoder.code_dim();
        let d = entries[0].generator.d();
        for e in &entries {
            if e.encoder.code_dim() != k {
                return Err(Error::Shape(format!(
                    "model {:?} has {} codes, expected {k}",
                    e.label,
                    e.encoder.code_dim()
                )));
            }
            if e.generator.d() != d || e.encoder.input_dim() != d {
                return Err(Error::Shape(format!("model {:?} does not work in dimension {d}", e.label)));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ModelEntry] {
        &self.entries
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    /// Loads a manifest: a JSON list of model-file paths, relative paths
    /// resolved against the manifest's directory.
    pub fn load_manifest(path: &Path) -> Result<Self> {
        let paths: Vec<PathBuf> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let entries = paths
            .iter()
            .map(|p| {
                let full = if p.is_absolute() { p.clone() } else { base.join(p) };
                let stem = full.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                ModelEntry::from_json(&std::fs::read_to_string(&full)?, &stem)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    /// Writes `<label>.json` per model plus `manifest.json` into `dir`.
    pub fn write_manifest(&self, dir: &Path) -> Result<PathBuf> {
        let mut names = Vec::new();
        for e in &self.entries {
            let name = format!("{}.json", e.label);
            std::fs::write(dir.join(&name), e.to_json()?)?;
            names.push(name);
        }
        let manifest = dir.join("manifest.json");
        std::fs::write(&manifest, serde_json::to_string_pretty(&names)?)?;
        Ok(manifest)
    }
}

/// Pairwise score `f(Q_i, G_j)`: encoder of model `i` judged on generator `j`.
pub trait PairMetric: Sync {
    fn score(&self, i: usize, j: usize) -> Result<f64>;
}

impl<F: Fn(usize, usize) -> Result<f64> + Sync> PairMetric for F {
    fn score(&self, i: usize, j: usize) -> Result<f64> {
        self(i, j)
    }
}

/// FactorVAE score of encoder `q` on groups generated by `g`.
pub fn cross_score<E: Encoder + ?Sized>(q: &E, g: &LinearGenerator, cfg: &FactorVaeConfig) -> Result<f64> {
    Ok(factorvae_metric(g, q, cfg)?.score)
}

/// FactorVAE cross scores with one seed shared by every pair, so all
/// encoders are judged on the same draws from a given generator.
pub struct FactorVaeCrossScore<'a> {
    pub pool: &'a ModelPool,
    pub cfg: FactorVaeConfig,
}

impl PairMetric for FactorVaeCrossScore<'_> {
    fn score(&self, i: usize, j: usize) -> Result<f64> {
        let e = self.pool.entries();
        cross_score(&e[i].encoder, &e[j].generator, &self.cfg)
    }
}

/// Sum of the values in ascending order. Equal multisets give bit-identical
/// sums, which keeps exact ties exact.
fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn row_mean_excluding(m: &DMatrix<f64>, i: usize, others: impl Iterator<Item = usize>) -> f64 {
    let mut vals: Vec<f64> = others.filter(|&j| j != i).map(|j| m[(i, j)]).collect();
    let n = vals.len() as f64;
    canonical_sum(&mut vals) / n
}

/// Row mean of `(m + mᵀ)/2`, summing both directions before a single
/// division so decimal inputs are not rounded twice.
fn sym_row_mean_excluding(m: &DMatrix<f64>, i: usize, others: impl Iterator<Item = usize>) -> f64 {
    let mut vals = Vec::new();
    for j in others.filter(|&j| j != i) {
        vals.push(m[(i, j)]);
        vals.push(m[(j, i)]);
    }
    let n = vals.len() as f64;
    canonical_sum(&mut vals) / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    /// Raw cross scores; the diagonal is stored as 0 and never used.
    pub raw: DMatrix<f64>,
    /// `(A + Aᵀ)/2`.
    pub sym: DMatrix<f64>,
    /// Off-diagonal row means of `sym`.
    pub scores: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_raw(raw: DMatrix<f64>) -> Result<Self> {
        let n = raw.nrows();
        if n < 2 || raw.ncols() != n {
            return Err(Error::Shape(format!("need a square matrix with N >= 2, got {}x{}", n, raw.ncols())));
        }
        let mut raw = raw;
        raw.fill_diagonal(0.0);
        let sym = DMatrix::from_fn(n, n, |i, j| (raw[(i, j)] + raw[(j, i)]) / 2.0);
        let scores = (0..n).map(|i| sym_row_mean_excluding(&raw, i, 0..n)).collect();
        Ok(Self { raw, sym, scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn to_csv(&self, labels: &[String], which: &DMatrix<f64>) -> CsvTable {
        let mut t = CsvTable::new(std::iter::once("model".to_string()).chain(labels.iter().cloned()));
        for i in 0..which.nrows() {
            t.push(std::iter::once(labels[i].clone()).chain(which.row(i).iter().map(|&v| fmt_num(v))));
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    ModelCentrality,
    UdrLasso,
    UdrSpearman,
}

impl SelectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMethod::ModelCentrality => "model_centrality",
            SelectionMethod::UdrLasso => "udr_lasso",
            SelectionMethod::UdrSpearman => "udr_spearman",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub method: SelectionMethod,
    pub scores: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub selected: usize,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl SelectionReport {
    pub fn new(method: SelectionMethod, scores: Vec<f64>, stderr: Option<Vec<f64>>) -> Self {
        let selected = argmax_lowest(&scores);
        Self {
            method,
            scores,
            stderr,
            selected,
        }
    }

    /// Columns `index,label,score,stderr,selected`; `index` is 1-based.
    pub fn to_csv(&self, labels: &[String]) -> CsvTable {
        let mut t = CsvTable::new(["index", "label", "score", "stderr", "selected"]);
        for (i, &s) in self.scores.iter().enumerate() {
            let se = self.stderr.as_ref().map_or_else(String::new, |v| fmt_num(v[i]));
            t.push([
                (i + 1).to_string(),
                labels.get(i).cloned().unwrap_or_default(),
                fmt_num(s),
                se,
                u8::from(i == self.selected).to_string(),
            ]);
        }
        t
    }
}

/// Evaluates `metric(i, j)` for every ordered pair `i ≠ j`, in parallel.
pub fn cross_score_matrix<M: PairMetric + ?Sized>(n: usize, metric: &M) -> Result<DMatrix<f64>> {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| metric.score(i, j))
        .collect::<Result<Vec<_>>>()?;
    let mut a = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        a[(i, j)] = v;
    }
    Ok(a)
}

pub fn model_centrality_with<M: PairMetric + ?Sized>(n: usize, metric: &M) -> Result<(SimilarityMatrix, SelectionReport)> {
    if n < 2 {
        return Err(Error::InvalidArgument("model centrality needs N >= 2".into()));
    }
    let sim = SimilarityMatrix::from_raw(cross_score_matrix(n, metric)?)?;
    let report = SelectionReport::new(SelectionMethod::ModelCentrality, sim.scores.clone(), None);
    Ok((sim, report))
}

/// ModelCentrality with FactorVAE cross scores.
pub fn model_centrality(pool: &ModelPool, cfg: &FactorVaeConfig) -> Result<(SimilarityMatrix, SelectionReport)> {
    let metric = FactorVaeCrossScore { pool, cfg: cfg.clone() };
    model_centrality_with(pool.len(), &metric)
}

fn subset_size(n_others: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    // the small slack keeps e.g. 0.8·5 from rounding up to 5
    let m = ((fraction * n_others as f64) - 1e-9).ceil().max(0.0) as usize;
    if m == 0 {
        return Err(Error::InvalidArgument("subset of other models is empty".into()));
    }
    Ok(m.min(n_others))
}

/// Resampled row means of the symmetrized pairwise matrix: each trial averages row `i`
/// over a random subset of `⌈fraction·(N−1)⌉` other models. Reports the
/// mean and standard error over trials.
pub fn subsample_row_means(
    m: &DMatrix<f64>,
    fraction: f64,
    trials: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("need N >= 2".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let size = subset_size(n - 1, fraction)?;
    let mut means = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for t in 0..trials {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        for i in 0..n {
            let mut others: Vec<usize> = sample_indices(&mut rng, n - 1, size)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect();
            others.sort_unstable();
            let x = sym_row_mean_excluding(m, i, others.into_iter());
            // Welford
            let count = (t + 1) as f64;
            let delta = x - means[i];
            means[i] += delta / count;
            m2[i] += delta * (x - means[i]);
        }
    }
    let stderr = m2
        .iter()
        .map(|&v| {
            if trials < 2 {
                0.0
            } else {
                (v / (trials - 1) as f64).sqrt() / (trials as f64).sqrt()
            }
        })
        .collect();
    Ok((means, stderr))
}

/// The resampling protocol applied to a centrality matrix.
pub fn subsampled_centrality(sim: &SimilarityMatrix, fraction: f64, trials: usize, seed: u64) -> Result<SelectionReport> {
    let (means, stderr) = subsample_row_means(&sim.raw, fraction, trials, seed)?;
    Ok(SelectionReport::new(SelectionMethod::ModelCentrality, means, Some(stderr)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UdrVariant {
    Lasso { lambda: f64 },
    Spearman,
}

impl UdrVariant {
    pub const DEFAULT_LAMBDA: f64 = 0.01;

    pub fn method(self) -> SelectionMethod {
        match self {
            UdrVariant::Lasso { .. } => SelectionMethod::UdrLasso,
            UdrVariant::Spearman => SelectionMethod::UdrSpearman,
        }
    }
}

fn warn_constant_columns(codes: &DMatrix<f64>, which: &str) {
    for (a, col) in codes.column_iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            log::warn!("code {} of encoder {which} is constant; its relevance is zeroed", a + 1);
        }
    }
}

/// `k×k` relevance of the codes of `q_j` (columns) for the codes of `q_i`
/// (rows), on a shared set of samples.
pub fn udr_relevance<E1, E2>(q_i: &E1, q_j: &E2, samples: &DMatrix<f64>, variant: UdrVariant) -> Result<DMatrix<f64>>
where
    E1: Encoder + ?Sized,
    E2: Encoder + ?Sized,
{
    let k = q_i.code_dim().max(q_j.code_dim());
    if samples.nrows() < 10 * k {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples for {k} codes, got {}",
            10 * k,
            samples.nrows()
        )));
    }
    let ci = q_i.encode_batch(samples)?;
    let cj = q_j.encode_batch(samples)?;
    warn_constant_columns(&ci, "i");
    warn_constant_columns(&cj, "j");
    let mut r = DMatrix::zeros(ci.ncols(), cj.ncols());
    match variant {
        UdrVariant::Lasso { lambda } => {
            let xi = standardize_columns(&ci);
            let xj = standardize_columns(&cj);
            for a in 0..ci.ncols() {
                let w = lasso_fit(&xj, &xi.column(a).into_owned(), lambda)?;
                r.set_row(a, &w.abs().transpose());
            }
        }
        UdrVariant::Spearman => {
            let cols_i: Vec<Vec<f64>> = ci.column_iter().map(|c| c.iter().copied().collect()).collect();
            let cols_j: Vec<Vec<f64>> = cj.column_iter().map(|c| c.iter().copied().collect()).collect();
            for (a, x) in cols_i.iter().enumerate() {
                for (b, y) in cols_j.iter().enumerate() {
                    r[(a, b)] = spearman_rho(x, y)?.map_or(0.0, f64::abs);
                }
            }
        }
    }
    Ok(r)
}

const UDR_EPS: f64 = 1e-12;

/// How close a nonnegative relevance matrix is to a permutation pattern:
/// the average over rows and columns of `max / (sum + ε)`, in `[0, 1]`.
pub fn udr_score(r: &DMatrix<f64>) -> f64 {
    let (rows, cols) = r.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let peak = |it: &mut dyn Iterator<Item = f64>| {
        let (mut max, mut sum) = (0.0f64, 0.0);
        for v in it {
            max = max.max(v);
            sum += v;
        }
        max / (sum + UDR_EPS)
    };
    let row_term: f64 = (0..rows).map(|a| peak(&mut r.row(a).iter().copied())).sum::<f64>() / rows as f64;
    let col_term: f64 = (0..cols).map(|b| peak(&mut r.column(b).iter().copied())).sum::<f64>() / cols as f64;
    0.5 * (row_term + col_term)
}

/// Pairwise UDR matrix `U_ij = udr_score(R(q_i, q_j))` (diagonal 0).
pub fn udr_matrix(pool: &ModelPool, samples: &DMatrix<f64>, variant: UdrVariant) -> Result<DMatrix<f64>> {
    let e = pool.entries();
    let metric = |i: usize, j: usize| Ok(udr_score(&udr_relevance(&e[i].encoder, &e[j].encoder, samples, variant)?));
    cross_score_matrix(pool.len(), &metric)
}

/// Scores each model by its mean UDR against the rest of the pool.
pub fn udr_select(pool: &ModelPool, samples: &DMatrix<f64>, variant: UdrVariant) -> Result<(DMatrix<f64>, SelectionReport)> {
    let u = udr_matrix(pool, samples, variant)?;
    let n = u.nrows();
    let scores = (0..n).map(|i| row_mean_excluding(&u, i, 0..n)).collect();
    Ok((u, SelectionReport::new(variant.method(), scores, None)))
}

/// Pairwise Spearman correlations between named metric vectors. Undefined
/// correlations (a constant vector) are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCorrelation {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

pub fn rank_correlation_analysis(metrics: &[(String, Vec<f64>)]) -> Result<RankCorrelation> {
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("no metric vectors".into()));
    }
    let len = metrics[0].1.len();
    if metrics.iter().any(|(_, v)| v.len() != len) {
        return Err(Error::Shape("metric vectors have different lengths".into()));
    }
    let m = metrics.len();
    let mut matrix = DMatrix::from_element(m, m, f64::NAN);
    for a in 0..m {
        for b in a..m {
            let rho = spearman_rho(&metrics[a].1, &metrics[b].1)?.unwrap_or(f64::NAN);
            matrix[(a, b)] = rho;
            matrix[(b, a)] = rho;
        }
    }
    Ok(RankCorrelation {
        names: metrics.iter().map(|(n, _)| n.clone()).collect(),
        matrix,
    })
}

impl RankCorrelation {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(std::iter::once("metric".to_string()).chain(self.names.iter().cloned()));
        for (i, name) in self.names.iter().enumerate() {
            t.push(std::iter::once(name.clone()).chain(self.matrix.row(i).iter().map(|&v| fmt_num(v))));
        }
        t
    }
}

/// Encoder mixing the exact code map with code-independent noise:
/// `√(1−ℓ)·BᵀΣ⁻¹ + √ℓ·N·W_⊥`, where `W_⊥` whitens the data component
/// outside the span of `B` and `N` has random unit-norm rows.
///
/// Requires a PCA-exact generator with `r < d`, so the codes are exactly
/// recoverable and `W_⊥x` is standard normal and independent of them.
pub fn noisy_encoder(gen: &LinearGenerator, level: f64, seed: u64) -> Result<LinearEncoder> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("noise level must be in [0, 1], got {level}")));
    }
    let (d, r) = (gen.d(), gen.r());
    if r >= d {
        return Err(Error::InvalidArgument("noisy encoders need r < d".into()));
    }
    let eig = eig_sym(gen.sigma())?;
    let nuisance = d - r;
    let mut w_perp = DMatrix::zeros(nuisance, d);
    for (row, idx) in (r..d).enumerate() {
        let scale = 1.0 / eig.values[idx].sqrt();
        w_perp.set_row(row, &(eig.vectors.column(idx).transpose() * scale));
    }
    let mut rng = rng_from_seed(seed);
    let mut n = crate::lingauss::standard_normal_matrix(r, nuisance, &mut rng);
    for mut row in n.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
    let exact: RealMatrix = conditional_mean_map(gen)?;
    LinearEncoder::new(exact * (1.0 - level).sqrt() + n * w_perp * level.sqrt())
}

/// Pool sharing one PCA-exact generator, one model per noise level.
pub fn noise_ladder_pool(sigma: &SymMatrix, r: usize, levels: &[f64], seed: u64) -> Result<ModelPool> {
    let gen = LinearGenerator::pca_exact(sigma.clone(), r)?;
    let entries = levels
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            Ok(ModelEntry {
                label: format!("model_{:02}", i + 1),
                generator: gen.clone(),
                encoder: noisy_encoder(&gen, level, derive_seed(seed, i as u64))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ModelPool::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub_case() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 0.9, 0.8, 0.9, 0.0, 0.9, 0.2, 0.7, 0.0])
    }

    #[test]
    fn three_model_hand_case() {
        let a = stub_case();
        let metric = |i: usize, j: usize| Ok(a[(i, j)]);
        let (sim, report) = model_centrality_with(3, &metric).unwrap();
        assert_eq!(sim.sym[(0, 1)], 0.9);
        assert_eq!(sim.sym[(0, 2)], 0.5);
        assert!((sim.sym[(1, 2)] - 0.8).abs() < 1e-15);
        let oracle = [0.7, 0.85, 0.65];
        for (s, o) in sim.scores.iter().zip(oracle) {
            assert!((s - o).abs() < 1e-15, "{s} vs {o}");
        }
        assert_eq!(report.selected, 1);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let metric = |_: usize, _: usize| Ok(1.0);
        let (_, report) = model_centrality_with(4, &metric).unwrap();
        assert_eq!(report.scores, vec![1.0; 4]);
        assert_eq!(report.selected, 0);
    }

    #[test]
    fn noise_model_scores_lowest() {
        let metric = |i: usize, j: usize| Ok(if i == 2 || j == 2 { 0.2 } else { 0.9 });
        let (sim, _) = model_centrality_with(4, &metric).unwrap();
        let min = argmax_lowest(&sim.scores.iter().map(|v| -v).collect::<Vec<_>>());
        assert_eq!(min, 2);
        assert!(sim.scores.iter().enumerate().all(|(i, &s)| i == 2 || s > sim.scores[2]));
    }

    #[test]
    fn symmetric_and_diagonal_ignored() {
        let mut a = stub_case();
        a.fill_diagonal(42.0);
        let sim = SimilarityMatrix::from_raw(a).unwrap();
        assert_eq!(sim.sym, sim.sym.transpose());
        assert_eq!(sim.raw[(1, 1)], 0.0);
    }

    #[test]
    fn full_fraction_subsample_matches() {
        let sim = SimilarityMatrix::from_raw(stub_case()).unwrap();
        let r = subsampled_centrality(&sim, 1.0, 10, 3).unwrap();
        assert_eq!(r.scores, sim.scores);
        assert_eq!(r.stderr.unwrap(), vec![0.0; 3]);
        assert!(subsampled_centrality(&sim, 0.0, 10, 3).is_err());
        assert!(subsampled_centrality(&sim, 0.8, 0, 3).is_err());
    }

    #[test]
    fn subset_sizes() {
        assert_eq!(subset_size(19, 0.8).unwrap(), 16);
        assert_eq!(subset_size(5, 0.8).unwrap(), 4);
        assert_eq!(subset_size(2, 0.8).unwrap(), 2);
        assert_eq!(subset_size(10, 1.0).unwrap(), 10);
    }

    #[test]
    fn udr_score_hand_cases() {
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!((udr_score(&perm) - 1.0).abs() < 1e-11);
        let ones = DMatrix::from_element(5, 5, 1.0);
        assert!((udr_score(&ones) - 0.2).abs() < 1e-12);
        assert_eq!(udr_score(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn rank_correlation_basics() {
        let v = vec![1.0, 3.0, 2.0, 5.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let rc = rank_correlation_analysis(&[
            ("a".into(), v.clone()),
            ("b".into(), v.clone()),
            ("c".into(), neg),
            ("flat".into(), vec![1.0; 4]),
        ])
        .unwrap();
        assert_eq!(rc.matrix[(0, 0)], 1.0);
        assert_eq!(rc.matrix[(0, 1)], 1.0);
        assert_eq!(rc.matrix[(0, 2)], -1.0);
        assert!(rc.matrix[(3, 0)].is_nan());
        assert!(rank_correlation_analysis(&[("a".into(), v), ("b".into(), vec![1.0])]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let sigma = SymMatrix::from_diagonal(&[4.0, 2.0, 1.0]);
        let gen = LinearGenerator::pca_exact(sigma, 2).unwrap();
        let entry = ModelEntry {
            label: "m".into(),
            encoder: noisy_encoder(&gen, 0.3, 1).unwrap(),
            generator: gen,
        };
        let back = ModelEntry::from_json(&entry.to_json().unwrap(), "x").unwrap();
        assert_eq!(back, entry);
        let bare = crate::lingauss::LinearGenerator::to_json(&entry.generator).unwrap();
        let derived = ModelEntry::from_json(&bare, "fallback").unwrap();
        assert_eq!(derived.label, "fallback");
        assert_eq!(derived.encoder, LinearEncoder::from_generator(&entry.generator).unwrap());
    }

    #[test]
    fn pool_validation() {
        let g = LinearGenerator::pca_exact(SymMatrix::from_diagonal(&[2.0, 1.0]), 1).unwrap();
        let e = ModelEntry::with_exact_encoder("a", g).unwrap();
        assert!(ModelPool::new(vec![e.clone()]).is_err());
        assert_eq!(ModelPool::new(vec![e.clone(), e]).unwrap().len(), 2);
    }
}
