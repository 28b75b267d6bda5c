//! Numerical verification suites for the linear-Gaussian and contrastive
//! results: semi-orthonormal recovery under the InfoGAN objective, PCA
//! recovery under the CR objective, the discriminator / Jensen-Shannon
//! identity, and the implicit-bias decomposition.
//!
//! Every suite emits [`Check`] rows that compare a measured residual with a
//! configurable threshold.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::{
    cross_entropy_objective, js_divergence, optimal_discriminator, train_discriminator, DiscreteDistributionFamily,
};
use crate::error::Result;
use crate::linalg::{spd_sqrt, SymMatrix};
use crate::lingauss::{
    bias_decomposition, conditional_mean_map, optimize_generator, standard_normal_matrix, LinearGenerator, Objective,
    OptimizerConfig,
};
use crate::report::{fmt_num, CsvTable};
use crate::rng::{derive_seed, rng_from_seed, LabRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    SemiOrthonormal,
    PcaRecovery,
    JsIdentity,
    BiasIdentity,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::SemiOrthonormal => "semi_orthonormal",
            Suite::PcaRecovery => "pca_recovery",
            Suite::JsIdentity => "js_identity",
            Suite::BiasIdentity => "bias_identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: Suite,
    pub case: usize,
    pub seed: u64,
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub comparison: Comparison,
}

impl Check {
    pub fn passed(&self) -> bool {
        match self.comparison {
            Comparison::AtMost => self.value <= self.threshold,
            Comparison::AtLeast => self.value >= self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub orthonormality: f64,
    pub infogan_optimum: f64,
    pub pca_alignment: f64,
    /// Relative to the matched eigenvalue.
    pub pca_norm: f64,
    pub truncation: f64,
    pub js_identity: f64,
    pub js_training: f64,
    pub bias_identity: f64,
    pub bias_floor: f64,
    /// Maximum |z| of the Monte Carlo comparison.
    pub monte_carlo_z: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            orthonormality: 1e-4,
            infogan_optimum: 1e-4,
            pca_alignment: 0.999,
            pca_norm: 1e-3,
            truncation: 1e-3,
            js_identity: 1e-12,
            js_training: 1e-4,
            bias_identity: 1e-10,
            bias_floor: -1e-12,
            monte_carlo_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seeds: Vec<u64>,
    pub infogan_d: usize,
    pub infogan_r: usize,
    pub infogan_sigmas: usize,
    pub pca_eigenvalues: Vec<f64>,
    pub pca_r: usize,
    pub js_families: usize,
    pub js_max_k: usize,
    pub js_max_support: usize,
    pub js_train_iters: usize,
    pub js_step: f64,
    pub bias_cases: usize,
    pub bias_max_d: usize,
    pub bias_mc_samples: usize,
    /// Optimizer settings shared by both generator suites; the objective
    /// field is overridden per suite.
    pub optimizer: OptimizerConfig,
    pub thresholds: Thresholds,
    pub suites: Vec<Suite>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            infogan_d: 6,
            infogan_r: 3,
            infogan_sigmas: 10,
            pca_eigenvalues: vec![9.0, 4.0, 1.0, 0.25, 0.04],
            pca_r: 2,
            js_families: 100,
            js_max_k: 5,
            js_max_support: 8,
            js_train_iters: 20_000,
            js_step: 0.5,
            bias_cases: 100,
            bias_max_d: 6,
            bias_mc_samples: 100_000,
            optimizer: OptimizerConfig::default(),
            thresholds: Thresholds::default(),
            suites: vec![
                Suite::SemiOrthonormal,
                Suite::PcaRecovery,
                Suite::JsIdentity,
                Suite::BiasIdentity,
            ],
        }
    }
}

/// Random orthogonal matrix from the QR factors of a Gaussian matrix, with
/// column signs fixed so the distribution is Haar.
pub fn random_orthogonal(d: usize, rng: &mut LabRng) -> DMatrix<f64> {
    let qr = standard_normal_matrix(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// SPD matrix with eigenvalues drawn from `[0.2, 5]`, pairwise separated by
/// at least 0.05, and a Haar-random eigenbasis.
pub fn random_spd_distinct(d: usize, rng: &mut LabRng) -> SymMatrix {
    let eigenvalues = loop {
        let mut v: Vec<f64> = (0..d).map(|_| 0.2 + 4.8 * rng.random::<f64>()).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.windows(2).all(|w| w[0] - w[1] >= 0.05) {
            break v;
        }
    };
    let q = random_orthogonal(d, rng);
    SymMatrix::from_rank_one_sum(&eigenvalues, &q).expect("weights match the basis")
}

/// `k×m` family with Dirichlet(1) rows.
pub fn random_family(k: usize, m: usize, rng: &mut LabRng) -> DiscreteDistributionFamily {
    let w = DMatrix::from_fn(k, m, |_, _| {
        let e: f64 = Exp1.sample(rng);
        e.max(f64::MIN_POSITIVE)
    });
    DiscreteDistributionFamily::from_weights(w).expect("strictly positive weights")
}

/// Random `(B, Σ)` with `S = I − BᵀΣ⁻¹B ⪰ (1 − s_max²) I`, where the
/// singular values of `Σ^{-1/2}B` are drawn below `s_max = 0.999`.
pub fn random_bias_case(max_d: usize, rng: &mut LabRng) -> Result<LinearGenerator> {
    let d = rng.random_range(1..=max_d.max(1));
    let r = rng.random_range(1..=d);
    let sigma = random_spd_distinct(d, rng);
    let u = random_orthogonal(d, rng);
    let v = random_orthogonal(r, rng);
    let mut bt = DMatrix::zeros(d, r);
    for i in 0..r {
        let s = 0.999 * rng.random::<f64>();
        bt += u.column(i) * v.column(i).transpose() * s;
    }
    let b = spd_sqrt(&sigma)?.as_matrix() * bt;
    LinearGenerator::distribution_matched(b, sigma)
}

/// Monte Carlo mean and standard error of `log Q*(c | x)` where
/// `Q*(· | x) = N(BᵀΣ⁻¹x, I_r)`.
pub fn monte_carlo_info_loss(gen: &LinearGenerator, n: usize, seed: u64) -> Result<(f64, f64)> {
    let map = conditional_mean_map(gen)?;
    let r = gen.r() as f64;
    let mut rng = rng_from_seed(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 0..n {
        let (c, x) = gen.sample(&mut rng);
        let resid: DVector<f64> = c - &map * x;
        let v = -0.5 * resid.norm_squared() - 0.5 * r * (2.0 * PI).ln();
        let delta = v - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (v - mean);
    }
    let se = (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt();
    Ok((mean, se))
}

fn check(suite: Suite, case: usize, seed: u64, name: &'static str, value: f64, threshold: f64, comparison: Comparison) -> Check {
    Check {
        suite,
        case,
        seed,
        name,
        value,
        threshold,
        comparison,
    }
}

fn semi_orthonormal_suite(cfg: &VerifyConfig, base_seed: u64) -> Result<Vec<Check>> {
    let t = &cfg.thresholds;
    let r = cfg.infogan_r;
    let optimum = -0.5 * r as f64 * (2.0 * PI).ln();
    let jobs: Vec<(usize, u64)> = (0..cfg.infogan_sigmas)
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(case, seed)| {
            let sigma = random_spd_distinct(cfg.infogan_d, &mut rng_from_seed(derive_seed(base_seed, case as u64)));
            let opt = OptimizerConfig {
                objective: Objective::Infogan,
                seed,
                ..cfg.optimizer
            };
            let (_, report) = optimize_generator(&sigma, r, &opt)?;
            let s = Suite::SemiOrthonormal;
            Ok(vec![
                check(s, case, seed, "orthonormality_residual", report.orthonormality_residual, t.orthonormality, Comparison::AtMost),
                check(s, case, seed, "objective_gap", (report.objective_value - optimum).abs(), t.infogan_optimum, Comparison::AtMost),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn pca_suite(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let t = &cfg.thresholds;
    let sigma = SymMatrix::from_diagonal(&cfg.pca_eigenvalues);
    let rows = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let opt = OptimizerConfig {
                objective: Objective::CrFrobenius,
                seed,
                ..cfg.optimizer
            };
            let (_, report) = optimize_generator(&sigma, cfg.pca_r, &opt)?;
            let min_alignment = report.pca_alignment.iter().copied().fold(f64::INFINITY, f64::min);
            let mut eig = cfg.pca_eigenvalues.clone();
            eig.sort_by(|a, b| b.total_cmp(a));
            let rel_norm = report
                .norm_errors
                .iter()
                .zip(&report.permutation)
                .map(|(e, &p)| e / eig[p])
                .fold(0.0, f64::max);
            let s = Suite::PcaRecovery;
            Ok(vec![
                check(s, 0, seed, "min_alignment", min_alignment, t.pca_alignment, Comparison::AtLeast),
                check(s, 0, seed, "max_relative_norm_error", rel_norm, t.pca_norm, Comparison::AtMost),
                check(s, 0, seed, "truncation_residual", report.truncation_residual, t.truncation, Comparison::AtMost),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn js_suite(cfg: &VerifyConfig, base_seed: u64) -> Result<Vec<Check>> {
    let t = &cfg.thresholds;
    let rows = (0..cfg.js_families)
        .into_par_iter()
        .map(|case| {
            let seed = derive_seed(base_seed, case as u64);
            let mut rng = rng_from_seed(seed);
            let k = rng.random_range(2..=cfg.js_max_k.max(2));
            let m = rng.random_range(2..=cfg.js_max_support.max(2));
            let family = random_family(k, m, &mut rng);
            let target = js_divergence(&family) - (k as f64).ln();
            let at_optimum = cross_entropy_objective(&family, &optimal_discriminator(&family)?)?;
            let trained = train_discriminator(&family, cfg.js_train_iters, cfg.js_step)?;
            let trained_value = cross_entropy_objective(&family, &trained)?;
            let s = Suite::JsIdentity;
            Ok(vec![
                check(s, case, seed, "identity_residual", (at_optimum - target).abs(), t.js_identity, Comparison::AtMost),
                check(s, case, seed, "training_gap", target - trained_value, t.js_training, Comparison::AtMost),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn bias_suite(cfg: &VerifyConfig, base_seed: u64) -> Result<Vec<Check>> {
    let t = &cfg.thresholds;
    let rows = (0..cfg.bias_cases)
        .into_par_iter()
        .map(|case| {
            let seed = derive_seed(base_seed, case as u64);
            let gen = random_bias_case(cfg.bias_max_d, &mut rng_from_seed(seed))?;
            let dec = bias_decomposition(&gen)?;
            let s = Suite::BiasIdentity;
            let mut out = vec![
                check(s, case, seed, "identity_residual", dec.identity_residual().abs(), t.bias_identity, Comparison::AtMost),
                check(s, case, seed, "implicit_bias", dec.implicit_bias, t.bias_floor, Comparison::AtLeast),
            ];
            if cfg.bias_mc_samples >= 2 {
                let (mean, se) = monte_carlo_info_loss(&gen, cfg.bias_mc_samples, derive_seed(seed, 1))?;
                out.push(check(s, case, seed, "monte_carlo_z", (mean - dec.info_loss).abs() / se, t.monte_carlo_z, Comparison::AtMost));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Runs the configured suites. Random cases derive from `base_seed`;
/// optimizer runs use `cfg.seeds`.
pub fn run_verification(cfg: &VerifyConfig, base_seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &suite in &cfg.suites {
        let stream = derive_seed(base_seed, suite as u64);
        checks.extend(match suite {
            Suite::SemiOrthonormal => semi_orthonormal_suite(cfg, stream)?,
            Suite::PcaRecovery => pca_suite(cfg)?,
            Suite::JsIdentity => js_suite(cfg, stream)?,
            Suite::BiasIdentity => bias_suite(cfg, stream)?,
        });
    }
    Ok(checks)
}

pub fn checks_table(checks: &[Check]) -> CsvTable {
    let mut t = CsvTable::new(["suite", "case", "seed", "check", "value", "threshold", "comparison", "pass"]);
    for c in checks {
        t.push([
            c.suite.name().to_string(),
            c.case.to_string(),
            c.seed.to_string(),
            c.name.to_string(),
            fmt_num(c.value),
            fmt_num(c.threshold),
            match c.comparison {
                Comparison::AtMost => "<=".to_string(),
                Comparison::AtLeast => ">=".to_string(),
            },
            u8::from(c.passed()).to_string(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig_sym;

    #[test]
    fn random_spd_has_separated_spectrum() {
        let mut rng = rng_from_seed(3);
        let s = random_spd_distinct(5, &mut rng);
        let eig = eig_sym(&s).unwrap();
        for w in eig.values.as_slice().windows(2) {
            assert!(w[0] - w[1] >= 0.05 - 1e-9);
        }
        assert!(eig.min_value() >= 0.2 - 1e-9);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let q = random_orthogonal(4, &mut rng_from_seed(1));
        assert!((q.transpose() * &q - DMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn bias_cases_have_nonsingular_s() {
        let mut rng = rng_from_seed(8);
        for _ in 0..20 {
            let gen = random_bias_case(5, &mut rng).unwrap();
            let dec = bias_decomposition(&gen).unwrap();
            assert!(dec.mutual_information.is_finite());
        }
    }

    #[test]
    fn small_run_passes_and_broken_threshold_fails() {
        let cfg = VerifyConfig {
            seeds: vec![0],
            infogan_sigmas: 1,
            js_families: 3,
            bias_cases: 3,
            bias_mc_samples: 2000,
            ..Default::default()
        };
        let checks = run_verification(&cfg, 0).unwrap();
        assert!(checks.iter().all(Check::passed), "{:?}", checks.iter().find(|c| !c.passed()));
        let broken = VerifyConfig {
            thresholds: Thresholds {
                orthonormality: 0.0,
                ..Default::default()
            },
            optimizer: OptimizerConfig {
                rel_tol: 0.1,
                ..Default::default()
            },
            suites: vec![Suite::SemiOrthonormal],
            ..cfg
        };
        assert!(run_verification(&broken, 0).unwrap().iter().any(|c| !c.passed()));
    }
}
