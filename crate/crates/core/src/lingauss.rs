//! Linear-Gaussian generators `G(c, z) = Bc + Az` with `c ~ N(0, I_r)`,
//! `z ~ N(0, I_d)`, and the closed forms of the InfoGAN regularizer and the
//! contrastive Frobenius divergence on them.
//!
//! The distribution-matching constraint `BBᵀ + AAᵀ = Σ` is enforced
//! exactly: `A` is always recovered as `(Σ − BBᵀ)^{1/2}`, and the free
//! parameter is the whitened factor `B̃ = Σ^{-1/2} B`, feasible iff
//! `B̃B̃ᵀ ⪯ I`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    eig_sym, ensure_positive_definite, project_contraction, spd_inv_sqrt, spd_inverse, spd_sqrt,
    RealMatrix, SymMatrix,
};
use crate::report::fmt_num;
use crate::rng::rng_from_seed;

/// `‖BBᵀ + AAᵀ − Σ‖_F ≤ MATCH_TOL · ‖Σ‖_F` counts as distribution-matched.
pub const MATCH_TOL: f64 = 1e-8;

/// Tolerance of the internal dual-formula cross-checks.
const CROSS_CHECK_TOL: f64 = 1e-10;

/// Below this smallest eigenvalue of `S` the conditional is treated as degenerate.
pub const DEGENERATE_S: f64 = 1e-12;

fn ln_2pi() -> f64 {
    (2.0 * PI).ln()
}

/// A linear generator together with the target data covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGenerator {
    b: RealMatrix,
    a: RealMatrix,
    sigma: SymMatrix,
}

impl LinearGenerator {
    pub fn new(b: RealMatrix, a: RealMatrix, sigma: SymMatrix) -> Result<Self> {
        let d = sigma.dim();
        if b.nrows() != d {
            return Err(Error::Shape(format!("B has {} rows, Σ is {d}x{d}", b.nrows())));
        }
        if b.ncols() == 0 || b.ncols() > d {
            return Err(Error::Shape(format!("need 1 <= r <= d, got r = {}", b.ncols())));
        }
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::Shape(format!(
                "A must be {d}x{d}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        ensure_positive_definite(&sigma)?;
        Ok(Self { b, a, sigma })
    }

    /// Builds the generator with `A = (Σ − BBᵀ)^{1/2}`, which matches the
    /// target distribution whenever `BBᵀ ⪯ Σ`.
    pub fn distribution_matched(b: RealMatrix, sigma: SymMatrix) -> Result<Self> {
        if b.nrows() != sigma.dim() {
            return Err(Error::Shape(format!(
                "B has {} rows, Σ is {}x{}",
                b.nrows(),
                sigma.dim(),
                sigma.dim()
            )));
        }
        let residual = SymMatrix::new(sigma.as_matrix() - &b * b.transpose())?;
        let a = spd_sqrt(&residual)?.into_matrix();
        Self::new(b, a, sigma)
    }

    /// The PCA generator `B = Σ_{i≤r} √σ_i u_i e_iᵀ`.
    pub fn pca_exact(sigma: SymMatrix, r: usize) -> Result<Self> {
        let d = sigma.dim();
        if r == 0 || r > d {
            return Err(Error::InvalidArgument(format!("need 1 <= r <= d, got r = {r}")));
        }
        let eig = eig_sym(&sigma)?;
        let mut b = DMatrix::zeros(d, r);
        for i in 0..r {
            let s = eig.values[i].max(0.0).sqrt();
            b.set_column(i, &(eig.vectors.column(i) * s));
        }
        Self::distribution_matched(b, sigma)
    }

    /// Data dimension.
    pub fn d(&self) -> usize {
        self.sigma.dim()
    }

    /// Latent-code dimension.
    pub fn r(&self) -> usize {
        self.b.ncols()
    }

    pub fn b(&self) -> &RealMatrix {
        &self.b
    }

    pub fn a(&self) -> &RealMatrix {
        &self.a
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn is_distribution_matched(&self) -> bool {
        let gen = &self.b * self.b.transpose() + &self.a * self.a.transpose();
        (gen - self.sigma.as_matrix()).norm() <= MATCH_TOL * self.sigma.frobenius_norm()
    }

    /// Maps codes and noise through the generator.
    pub fn generate(&self, c: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        &self.b * c + &self.a * z
    }

    /// Draws `c ~ N(0, I_r)`, `z ~ N(0, I_d)` and returns `(c, Bc + Az)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let c = standard_normal_vector(self.r(), rng);
        let z = standard_normal_vector(self.d(), rng);
        let x = self.generate(&c, &z);
        (c, x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GeneratorFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GeneratorFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

pub(crate) fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub(crate) fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// On-disk generator layout; matrices are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorFile {
    pub d: usize,
    pub r: usize,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub(crate) fn from_row_major(rows: usize, cols: usize, data: &[f64], name: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{name}: expected {} entries ({rows}x{cols}), got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

impl From<&LinearGenerator> for GeneratorFile {
    fn from(g: &LinearGenerator) -> Self {
        Self {
            d: g.d(),
            r: g.r(),
            b: row_major(&g.b),
            a: row_major(&g.a),
            sigma: row_major(g.sigma.as_matrix()),
        }
    }
}

impl TryFrom<GeneratorFile> for LinearGenerator {
    type Error = Error;

    fn try_from(f: GeneratorFile) -> Result<Self> {
        let b = from_row_major(f.d, f.r, &f.b, "B")?;
        let a = from_row_major(f.d, f.d, &f.a, "A")?;
        let sigma = SymMatrix::new(from_row_major(f.d, f.d, &f.sigma, "sigma")?)?;
        LinearGenerator::new(b, a, sigma)
    }
}

/// The map `x ↦ BᵀΣ⁻¹x`.
pub fn conditional_mean_map(gen: &LinearGenerator) -> Result<RealMatrix> {
    let inv = spd_inverse(&gen.sigma)?;
    Ok(gen.b.transpose() * inv.as_matrix())
}

/// `E[C | X = x] = BᵀΣ⁻¹x`.
pub fn conditional_mean(gen: &LinearGenerator, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != gen.d() {
        return Err(Error::Shape(format!("x has length {}, expected {}", x.len(), gen.d())));
    }
    Ok(conditional_mean_map(gen)? * DVector::from_column_slice(x))
}

/// `S = Cov(C | X) = I − BᵀΣ⁻¹B`.
pub fn conditional_covariance(gen: &LinearGenerator) -> Result<SymMatrix> {
    conditional_covariance_of(&gen.b, &gen.sigma)
}

fn conditional_covariance_of(b: &RealMatrix, sigma: &SymMatrix) -> Result<SymMatrix> {
    let inv = spd_inverse(sigma)?;
    let r = b.ncols();
    SymMatrix::new(DMatrix::identity(r, r) - b.transpose() * inv.as_matrix() * b)
}

/// `BBᵀ + AAᵀ`.
pub fn generated_covariance(gen: &LinearGenerator) -> SymMatrix {
    SymMatrix::new(&gen.b * gen.b.transpose() + &gen.a * gen.a.transpose())
        .expect("BBᵀ + AAᵀ is square")
}

/// `B̃ = Σ^{-1/2} B`.
pub fn whiten(b: &RealMatrix, sigma: &SymMatrix) -> Result<RealMatrix> {
    Ok(spd_inv_sqrt(sigma)?.as_matrix() * b)
}

/// InfoGAN regularizer maximized over unit-variance factorized Gaussian
/// posteriors: `(1/2)‖Σ^{-1/2}B‖_F² − (r/2)(1 + log 2π)`.
///
/// Cross-checked against `−(1/2) tr S − (r/2) log 2π`.
pub fn infogan_objective(gen: &LinearGenerator) -> Result<f64> {
    infogan_objective_of(&gen.b, &gen.sigma)
}

pub fn infogan_objective_of(b: &RealMatrix, sigma: &SymMatrix) -> Result<f64> {
    let r = b.ncols() as f64;
    let bt = whiten(b, sigma)?;
    let frob = 0.5 * bt.norm_squared() - 0.5 * r * (1.0 + ln_2pi());
    let s = conditional_covariance_of(b, sigma)?;
    let via_trace = -0.5 * s.trace() - 0.5 * r * ln_2pi();
    if (frob - via_trace).abs() > CROSS_CHECK_TOL * frob.abs().max(1.0) {
        return Err(Error::CrossCheck {
            what: "InfoGAN objective",
            first: frob,
            second: via_trace,
        });
    }
    Ok(frob)
}

/// Terms of `max_Q L_Info = I(c;x) − H(c) − bias`, all in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasDecomposition {
    /// `−(1/2) log det S`; `+∞` when `S` is (numerically) singular.
    pub mutual_information: f64,
    /// Differential entropy of `N(0, I_r)`.
    pub latent_entropy: f64,
    /// `(1/2)(tr S − r − log det S)`; `+∞` when `S` is singular.
    pub implicit_bias: f64,
    /// `max_Q L_Info = −(1/2) tr S − (r/2) log 2π`.
    pub info_loss: f64,
}

impl BiasDecomposition {
    /// Decomposition from the conditional covariance `S = Cov(c | x)`.
    pub fn from_conditional_covariance(s: &SymMatrix) -> Result<Self> {
        let r = s.dim() as f64;
        let eig = eig_sym(s)?;
        let min = eig.min_value();
        if min < -crate::linalg::PSD_CLAMP {
            return Err(Error::NotPsd {
                min_eigenvalue: min,
            });
        }
        let latent_entropy = 0.5 * r * (1.0 + ln_2pi());
        let info_loss = -0.5 * s.trace() - 0.5 * r * ln_2pi();
        if min < DEGENERATE_S {
            return Ok(Self {
                mutual_information: f64::INFINITY,
                latent_entropy,
                implicit_bias: f64::INFINITY,
                info_loss,
            });
        }
        let log_det: f64 = eig.values.iter().map(|v| v.ln()).sum();
        // Σ (s − 1 − ln s) over eigenvalues; each term is ≥ 0.
        let bias: f64 = eig.values.iter().map(|&v| v - 1.0 - v.ln()).sum::<f64>() * 0.5;
        Ok(Self {
            mutual_information: -0.5 * log_det,
            latent_entropy,
            implicit_bias: bias,
            info_loss,
        })
    }

    /// `I(c;x) − H(c) − bias − max L_Info`; zero up to round-off.
    pub fn identity_residual(&self) -> f64 {
        self.mutual_information - self.latent_entropy - self.implicit_bias - self.info_loss
    }
}

/// Implicit-bias decomposition of the InfoGAN loss for `gen`.
pub fn bias_decomposition(gen: &LinearGenerator) -> Result<BiasDecomposition> {
    let s = conditional_covariance(gen)?;
    let mut dec = BiasDecomposition::from_conditional_covariance(&s)?;
    let objective = infogan_objective(gen)?;
    if (objective - dec.info_loss).abs() > CROSS_CHECK_TOL * objective.abs().max(1.0) {
        return Err(Error::CrossCheck {
            what: "info loss",
            first: objective,
            second: dec.info_loss,
        });
    }
    dec.info_loss = objective;
    Ok(dec)
}

/// Covariance of the coupled pair `(X, X')` sharing code `c_i`:
/// `[[C, b bᵀ], [b bᵀ, C]]` with `C = BBᵀ + AAᵀ` and `b` column `i` of `B`.
pub fn paired_covariance(gen: &LinearGenerator, i: usize) -> Result<SymMatrix> {
    if i >= gen.r() {
        return Err(Error::IndexOutOfRange { index: i, len: gen.r() });
    }
    let d = gen.d();
    let cov = generated_covariance(gen);
    let b = gen.b.column(i);
    let cross = b * b.transpose();
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(cov.as_matrix());
    m.view_mut((d, d), (d, d)).copy_from(cov.as_matrix());
    m.view_mut((0, d), (d, d)).copy_from(&cross);
    m.view_mut((d, 0), (d, d)).copy_from(&cross);
    SymMatrix::new(m)
}

/// `Σ_i ‖b_i‖⁴ − (1/(r−1)) Σ_{i≠j} ⟨b_i, b_j⟩²`, which equals the
/// normalized Frobenius divergence between the pair covariances.
fn cr_frobenius_fast(b: &RealMatrix) -> f64 {
    let r = b.ncols();
    let gram = b.transpose() * b;
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..r {
        for j in 0..r {
            let g = gram[(i, j)];
            if i == j {
                diag += g * g;
            } else {
                off += g * g;
            }
        }
    }
    diag - off / (r as f64 - 1.0)
}

/// Gradient of [`cr_frobenius_fast`] with respect to `B`.
fn cr_frobenius_grad(b: &RealMatrix) -> RealMatrix {
    let r = b.ncols();
    let gram = b.transpose() * b;
    let mut coef = gram.scale(-4.0 / (r as f64 - 1.0));
    for i in 0..r {
        coef[(i, i)] = 4.0 * gram[(i, i)];
    }
    b * coef
}

/// `(1/(4(r−1))) Σ_{i≠j} ‖Σ^{(i)} − Σ^{(j)}‖_F²` through the identity
/// `‖Σ^{(i)} − Σ^{(j)}‖_F² = 2‖b_i b_iᵀ − b_j b_jᵀ‖_F²`, cross-checked against
/// explicit `2d×2d` pair covariances.
pub fn cr_frobenius_divergence(b: &RealMatrix) -> Result<f64> {
    let r = b.ncols();
    if r < 2 {
        return Err(Error::UndefinedDivergence { r });
    }
    let mut total = 0.0;
    for i in 0..r {
        let bi = b.column(i);
        let pi = bi * bi.transpose();
        for j in 0..r {
            if i == j {
                continue;
            }
            let bj = b.column(j);
            let pj = bj * bj.transpose();
            total += 2.0 * (&pi - pj).norm_squared();
        }
    }
    let value = total / (4.0 * (r as f64 - 1.0));
    let direct = cr_frobenius_divergence_blocks(b)?;
    if (value - direct).abs() > CROSS_CHECK_TOL * value.abs().max(1.0) {
        return Err(Error::CrossCheck {
            what: "CR Frobenius divergence",
            first: value,
            second: direct,
        });
    }
    Ok(value)
}

/// Same divergence evaluated on the explicit `2d×2d` pair covariances.
/// The diagonal blocks cancel, so any `Σ` works; `BBᵀ + I` is used.
pub fn cr_frobenius_divergence_blocks(b: &RealMatrix) -> Result<f64> {
    let r = b.ncols();
    if r < 2 {
        return Err(Error::UndefinedDivergence { r });
    }
    let d = b.nrows();
    let base = b * b.transpose() + DMatrix::identity(d, d);
    let block = |i: usize| {
        let bi = b.column(i);
        let cross = bi * bi.transpose();
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&base);
        m.view_mut((d, d), (d, d)).copy_from(&base);
        m.view_mut((0, d), (d, d)).copy_from(&cross);
        m.view_mut((d, 0), (d, d)).copy_from(&cross);
        m
    };
    let blocks: Vec<_> = (0..r).map(block).collect();
    let mut total = 0.0;
    for i in 0..r {
        for j in 0..r {
            if i != j {
                total += (&blocks[i] - &blocks[j]).norm_squared();
            }
        }
    }
    Ok(total / (4.0 * (r as f64 - 1.0)))
}

/// Best rank-`r` approximation `Σ_{i≤r} σ_i u_i u_iᵀ` of a PSD matrix.
pub fn rank_r_truncation(sigma: &SymMatrix, r: usize) -> Result<SymMatrix> {
    let d = sigma.dim();
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= d, got r = {r}")));
    }
    let eig = eig_sym(sigma)?;
    if eig.min_value() < -crate::linalg::PSD_CLAMP {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.min_value(),
        });
    }
    let weights: Vec<f64> = eig.values.iter().take(r).map(|v| v.max(0.0)).collect();
    SymMatrix::from_rank_one_sum(&weights, &eig.vectors)
}

/// Regularizer maximized by [`optimize_generator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Infogan,
    CrFrobenius,
    Combined,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Infogan => "infogan",
            Objective::CrFrobenius => "cr_frobenius",
            Objective::Combined => "combined",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "infogan" => Ok(Objective::Infogan),
            "cr" | "cr_frobenius" | "cr-frobenius" => Ok(Objective::CrFrobenius),
            "combined" => Ok(Objective::Combined),
            other => Err(Error::InvalidArgument(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub objective: Objective,
    /// Weight on the InfoGAN term (combined objective only).
    pub lambda: f64,
    /// Weight on the CR term (combined objective only).
    pub alpha: f64,
    /// Initial step of each backtracking line search.
    pub step_size: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Infogan,
            lambda: 1.0,
            alpha: 1.0,
            step_size: 0.1,
            max_iters: 100_000,
            rel_tol: 1e-10,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// `(λ, α)` actually used for the configured objective.
    pub fn weights(&self) -> (f64, f64) {
        match self.objective {
            Objective::Infogan => (1.0, 0.0),
            Objective::CrFrobenius => (0.0, 1.0),
            Objective::Combined => (self.lambda, self.alpha),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidArgument("step_size must be > 0".into()));
        }
        let (l, a) = self.weights();
        if !(l >= 0.0 && a >= 0.0) {
            return Err(Error::InvalidArgument("objective weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Outcome of a generator optimization, judged against both theorems.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub objective_value: f64,
    /// `‖B̃ᵀB̃ − I_r‖_F`.
    pub orthonormality_residual: f64,
    /// `‖BBᵀ − Σ_r‖_F`.
    pub truncation_residual: f64,
    /// `|cos|` between column `i` and eigenvector `u_{π(i)}`.
    pub pca_alignment: Vec<f64>,
    /// `|‖b_i‖² − σ_{π(i)}|`.
    pub norm_errors: Vec<f64>,
    /// `π(i)`: index of the eigenvector matched to column `i`.
    pub permutation: Vec<usize>,
    pub iterations: usize,
}

impl TheoremReport {
    /// Scores `gen` against the eigenstructure of its `Σ`.
    pub fn evaluate(gen: &LinearGenerator, objective_value: f64, iterations: usize) -> Result<Self> {
        let r = gen.r();
        let b = gen.b();
        let bt = whiten(b, gen.sigma())?;
        let orthonormality_residual = (bt.transpose() * &bt - DMatrix::identity(r, r)).norm();
        let truncation = rank_r_truncation(gen.sigma(), r)?;
        let truncation_residual = (b * b.transpose() - truncation.as_matrix()).norm();

        let eig = eig_sym(gen.sigma())?;
        let mut cosines = DMatrix::zeros(r, r);
        for i in 0..r {
            let col = b.column(i);
            let norm = col.norm();
            for j in 0..r {
                cosines[(i, j)] = if norm > 0.0 {
                    (col.dot(&eig.vectors.column(j)) / norm).abs().min(1.0)
                } else {
                    0.0
                };
            }
        }
        let permutation = greedy_assignment(&cosines);
        let pca_alignment = (0..r).map(|i| cosines[(i, permutation[i])]).collect();
        let norm_errors = (0..r)
            .map(|i| (b.column(i).norm_squared() - eig.values[permutation[i]]).abs())
            .collect();
        Ok(Self {
            objective_value,
            orthonormality_residual,
            truncation_residual,
            pca_alignment,
            norm_errors,
            permutation,
            iterations,
        })
    }

    pub fn csv_header(r: usize) -> String {
        let mut cols = vec![
            "seed".to_string(),
            "objective".into(),
            "objective_value".into(),
            "orthonormality_residual".into(),
            "truncation_residual".into(),
            "iterations".into(),
        ];
        cols.extend((1..=r).map(|i| format!("alignment_{i}")));
        cols.extend((1..=r).map(|i| format!("norm_error_{i}")));
        cols.extend((1..=r).map(|i| format!("pi_{i}")));
        cols.join(",")
    }

    pub fn csv_row(&self, seed: u64, objective: Objective) -> String {
        let mut cols = vec![
            seed.to_string(),
            objective.name().to_string(),
            fmt_num(self.objective_value),
            fmt_num(self.orthonormality_residual),
            fmt_num(self.truncation_residual),
            self.iterations.to_string(),
        ];
        cols.extend(self.pca_alignment.iter().map(|&v| fmt_num(v)));
        cols.extend(self.norm_errors.iter().map(|&v| fmt_num(v)));
        cols.extend(self.permutation.iter().map(|p| (p + 1).to_string()));
        cols.join(",")
    }
}

/// Greedy matching by descending score; ties go to the lowest row, then
/// the lowest column.
pub(crate) fn greedy_assignment(scores: &DMatrix<f64>) -> Vec<usize> {
    let (rows, cols) = scores.shape();
    let mut pairs: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .collect();
    pairs.sort_by(|&(i1, j1), &(i2, j2)| {
        scores[(i2, j2)]
            .total_cmp(&scores[(i1, j1)])
            .then(i1.cmp(&i2))
            .then(j1.cmp(&j2))
    });
    let mut assigned = vec![usize::MAX; rows];
    let mut taken = vec![false; cols];
    for (i, j) in pairs {
        if assigned[i] == usize::MAX && !taken[j] {
            assigned[i] = j;
            taken[j] = true;
        }
    }
    assigned
}

struct Problem<'a> {
    sigma_half: &'a RealMatrix,
    lambda: f64,
    alpha: f64,
    info_const: f64,
}

impl Problem<'_> {
    fn value(&self, bt: &RealMatrix) -> f64 {
        let mut f = 0.0;
        if self.lambda != 0.0 {
            f += self.lambda * (0.5 * bt.norm_squared() - self.info_const);
        }
        if self.alpha != 0.0 {
            let b = self.sigma_half * bt;
            f += self.alpha * cr_frobenius_fast(&b);
        }
        f
    }

    fn gradient(&self, bt: &RealMatrix) -> RealMatrix {
        let mut g = RealMatrix::zeros(bt.nrows(), bt.ncols());
        if self.lambda != 0.0 {
            g += bt * self.lambda;
        }
        if self.alpha != 0.0 {
            let b = self.sigma_half * bt;
            g += (self.sigma_half * cr_frobenius_grad(&b)) * self.alpha;
        }
        g
    }
}

/// Smallest step tried by the line search before declaring a stationary point.
const MIN_STEP: f64 = 1e-20;

/// Projected gradient ascent over `B̃ = Σ^{-1/2}B` with `B̃B̃ᵀ ⪯ I`.
///
/// Each iteration starts the backtracking search at `cfg.step_size` and
/// halves until the projected candidate does not decrease the objective,
/// so accepted iterates are monotone. Stops when the relative objective
/// change drops below `cfg.rel_tol`, when no ascent step exists, or after
/// `cfg.max_iters` iterations.
pub fn optimize_generator(
    sigma: &SymMatrix,
    r: usize,
    cfg: &OptimizerConfig,
) -> Result<(LinearGenerator, TheoremReport)> {
    cfg.validate()?;
    let d = sigma.dim();
    if r == 0 || r > d {
        return Err(Error::InvalidArgument(format!("need 1 <= r <= d, got r = {r}")));
    }
    ensure_positive_definite(sigma)?;
    let (lambda, alpha) = cfg.weights();
    if alpha != 0.0 && r < 2 {
        return Err(Error::UndefinedDivergence { r });
    }
    let sigma_half = spd_sqrt(sigma)?.into_matrix();
    let problem = Problem {
        sigma_half: &sigma_half,
        lambda,
        alpha,
        info_const: 0.5 * r as f64 * (1.0 + ln_2pi()),
    };

    let mut rng = rng_from_seed(cfg.seed);
    let init = DMatrix::from_fn(d, r, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v / (d as f64).sqrt()
    });
    let mut bt = project_contraction(&init);
    let mut value = problem.value(&bt);
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = problem.gradient(&bt);
        let mut step = cfg.step_size;
        let accepted = loop {
            let cand = project_contraction(&(&bt + &grad * step));
            let cand_value = problem.value(&cand);
            if cand_value >= value {
                break Some((cand, cand_value));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((cand, cand_value)) = accepted else {
            break;
        };
        let rel = (cand_value - value).abs() / value.abs().max(f64::MIN_POSITIVE);
        bt = cand;
        value = cand_value;
        if !value.is_finite() {
            return Err(Error::NumericFailure("objective became non-finite".into()));
        }
        if rel < cfg.rel_tol {
            break;
        }
    }

    let b = &sigma_half * &bt;
    let gen = LinearGenerator::distribution_matched(b, sigma.clone())?;
    let objective_value = match cfg.objective {
        Objective::Infogan => infogan_objective(&gen)?,
        Objective::CrFrobenius => cr_frobenius_divergence(gen.b())?,
        Objective::Combined => value,
    };
    let report = TheoremReport::evaluate(&gen, objective_value, iterations)?;
    Ok((gen, report))
}
