//! Contrastive regularizer on finite spaces.
//!
//! Covers coupled latent sampling with a contrastive gap, progressive gap
//! schedules, the generalized Jensen-Shannon divergence of a finite family
//! `Q^{(1)}, …, Q^{(k)}`, and the k-way softmax discriminator whose
//! cross-entropy optimum equals `d_JS − log k`.
//!
//! Pairs `(x, x')` are represented by a joint support indexed `0..m`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::fmt_num;
use crate::rng::{rng_from_seed, LabRng};

/// How the two members of a coupled pair share randomness.
///
/// `*_random_rest`: one code is shared, all others are drawn independently
/// (with the gap). `*_shared_rest`: all codes but one are shared, and the
/// single differing code carries the gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    SharedNoiseSharedRest,
    #[default]
    SharedNoiseRandomRest,
    RandomNoiseSharedRest,
    RandomNoiseRandomRest,
}

impl CouplingMode {
    pub const ALL: [CouplingMode; 4] = [
        CouplingMode::SharedNoiseSharedRest,
        CouplingMode::SharedNoiseRandomRest,
        CouplingMode::RandomNoiseSharedRest,
        CouplingMode::RandomNoiseRandomRest,
    ];

    pub fn shares_noise(self) -> bool {
        matches!(
            self,
            CouplingMode::SharedNoiseSharedRest | CouplingMode::SharedNoiseRandomRest
        )
    }

    pub fn shares_rest(self) -> bool {
        matches!(
            self,
            CouplingMode::SharedNoiseSharedRest | CouplingMode::RandomNoiseSharedRest
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Number of latent codes.
    pub k: usize,
    /// Contrastive gap `g ∈ [0, 2]`.
    pub gap: f64,
    pub mode: CouplingMode,
    /// `(step_threshold, gap)` pairs, thresholds increasing, gaps non-increasing.
    pub schedule: Vec<(u64, f64)>,
    /// Length of the Gaussian noise vector drawn with each member of a pair.
    pub noise_dim: usize,
}

impl CouplingConfig {
    pub fn new(k: usize, gap: f64) -> Self {
        Self {
            k,
            gap,
            mode: CouplingMode::default(),
            schedule: vec![(0, gap)],
            noise_dim: 0,
        }
    }

    /// 1.9 until step 120 000, then 0.
    pub fn progressive(k: usize) -> Self {
        Self {
            schedule: vec![(0, 1.9), (120_000, 0.0)],
            ..Self::new(k, 1.9)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        check_gap(self.gap)?;
        for w in self.schedule.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidArgument(
                    "schedule thresholds must be strictly increasing".into(),
                ));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::InvalidArgument("schedule gaps must be non-increasing".into()));
            }
        }
        for &(_, g) in &self.schedule {
            check_gap(g)?;
        }
        Ok(())
    }
}

fn check_gap(g: f64) -> Result<()> {
    if !(0.0..=2.0).contains(&g) {
        return Err(Error::InfeasibleGap(g));
    }
    Ok(())
}

/// One coupled pair of latent codes (and noise).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedLatent {
    /// The distinguished index: shared in `*_random_rest` modes, the only
    /// differing code in `*_shared_rest` modes.
    pub fixed_index: usize,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

impl PairedLatent {
    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.c1.len()];
        v[self.fixed_index] = 1.0;
        v
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws a pair of values in `[−1, 1]` at distance at least `gap`: both
/// uniform on `[−1 + g/2, 1 − g/2]`, then the larger is pushed up by
/// `g/2` and the smaller down by `g/2`.
fn gapped_pair<R: Rng + ?Sized>(rng: &mut R, gap: f64) -> (f64, f64) {
    let half = gap / 2.0;
    let mut a = uniform(rng, -1.0 + half, 1.0 - half);
    let mut b = uniform(rng, -1.0 + half, 1.0 - half);
    if a > b {
        a += half;
        b -= half;
    } else {
        a -= half;
        b += half;
    }
    (a, b)
}

/// Samples one coupled pair with the configured gap and coupling mode.
pub fn sample_coupled_latents_with<R: Rng + ?Sized>(cfg: &CouplingConfig, rng: &mut R) -> Result<PairedLatent> {
    cfg.validate()?;
    let k = cfg.k;
    let fixed = rng.random_range(0..k);
    let mut c1 = vec![0.0; k];
    let mut c2 = vec![0.0; k];
    for j in 0..k {
        let shared = (j == fixed) != cfg.mode.shares_rest();
        if shared {
            let v = uniform(rng, -1.0, 1.0);
            c1[j] = v;
            c2[j] = v;
        } else {
            let (a, b) = gapped_pair(rng, cfg.gap);
            c1[j] = a;
            c2[j] = b;
        }
    }
    let z1: Vec<f64> = (0..cfg.noise_dim).map(|_| StandardNormal.sample(rng)).collect();
    let z2 = if cfg.mode.shares_noise() {
        z1.clone()
    } else {
        (0..cfg.noise_dim).map(|_| StandardNormal.sample(rng)).collect()
    };
    Ok(PairedLatent {
        fixed_index: fixed,
        c1,
        c2,
        z1,
        z2,
    })
}

pub fn sample_coupled_latents(cfg: &CouplingConfig, seed: u64) -> Result<PairedLatent> {
    sample_coupled_latents_with(cfg, &mut rng_from_seed(seed))
}

/// `n` pairs from one seeded stream.
pub fn sample_coupled_batch(cfg: &CouplingConfig, n: usize, seed: u64) -> Result<Vec<PairedLatent>> {
    let mut rng: LabRng = rng_from_seed(seed);
    (0..n).map(|_| sample_coupled_latents_with(cfg, &mut rng)).collect()
}

/// CSV with columns `I,c1_1..c1_k,c2_1..c2_k`; `I` is 1-based.
pub fn paired_batch_csv(batch: &[PairedLatent]) -> String {
    let k = batch.first().map_or(0, |p| p.c1.len());
    let mut out = String::from("I");
    for prefix in ["c1", "c2"] {
        for j in 1..=k {
            out.push_str(&format!(",{prefix}_{j}"));
        }
    }
    out.push('\n');
    for p in batch {
        out.push_str(&(p.fixed_index + 1).to_string());
        for v in p.c1.iter().chain(&p.c2) {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

/// Gap in force at `step`: the entry with the largest threshold `≤ step`
/// (the first entry before any threshold is reached).
pub fn gap_schedule(cfg: &CouplingConfig, step: u64) -> f64 {
    let Some(first) = cfg.schedule.first() else {
        return cfg.gap;
    };
    cfg.schedule
        .iter()
        .take_while(|&&(t, _)| t <= step)
        .last()
        .unwrap_or(first)
        .1
}

/// Row-stochastic `k×m` table; row `i` is `Q^{(i)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistributionFamily {
    probs: DMatrix<f64>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl DiscreteDistributionFamily {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        let (k, m) = probs.shape();
        if k == 0 || m == 0 {
            return Err(Error::Shape("family needs k >= 1 and m >= 1".into()));
        }
        for i in 0..k {
            let row = probs.row(i);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {i} has a negative or non-finite entry")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { probs })
    }

    /// Rows are normalized to sum to one.
    pub fn from_weights(weights: DMatrix<f64>) -> Result<Self> {
        let mut probs = weights;
        for i in 0..probs.nrows() {
            let s = probs.row(i).sum();
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!("row {i} has no mass")));
            }
            probs.row_mut(i).unscale_mut(s);
        }
        Self::new(probs)
    }

    pub fn k(&self) -> usize {
        self.probs.nrows()
    }

    pub fn support_size(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    /// `Z_x = Σ_i Q^{(i)}(x)`.
    fn total_mass(&self, x: usize) -> f64 {
        self.probs.column(x).sum()
    }

    /// Parses the `k,m` header followed by `k` rows of `m` probabilities.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty family CSV".into()))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("header {s:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [k, m] = dims[..] else {
            return Err(Error::Parse(format!("header must be `k,m`, got {header:?}")));
        };
        let mut data = Vec::with_capacity(k * m);
        for i in 0..k {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {}", i + 1)))?;
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {s:?}: {e}", i + 1))))
                .collect::<Result<_>>()?;
            if row.len() != m {
                return Err(Error::Parse(format!("row {} has {} entries, expected {m}", i + 1, row.len())));
            }
            data.extend(row);
        }
        Self::new(DMatrix::from_row_slice(k, m, &data))
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.k(), self.support_size());
        for i in 0..self.k() {
            let row: Vec<String> = self.probs.row(i).iter().map(|&p| fmt_num(p)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn xlogy_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// `(1/k) Σ_i KL(Q^{(i)} ‖ Q̄)` with `Q̄` the uniform mixture, `0 log 0 = 0`.
pub fn js_divergence(family: &DiscreteDistributionFamily) -> f64 {
    let k = family.k();
    let m = family.support_size();
    let kf = k as f64;
    let mut total = 0.0;
    for x in 0..m {
        let mix = family.total_mass(x) / kf;
        for i in 0..k {
            total += xlogy_ratio(family.probs[(i, x)], mix);
        }
    }
    total / kf
}

/// k-way discriminator over a finite pair support. `logits` is `m×k`;
/// `−∞` logits encode exact zeros of `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxDiscriminator {
    logits: DMatrix<f64>,
}

impl SoftmaxDiscriminator {
    pub fn from_logits(logits: DMatrix<f64>) -> Result<Self> {
        for x in 0..logits.nrows() {
            let row = logits.row(x);
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::InvalidArgument(format!("row {x} has NaN or +inf logits")));
            }
            if row.iter().all(|v| *v == f64::NEG_INFINITY) {
                return Err(Error::InvalidArgument(format!("row {x} has no finite logit")));
            }
        }
        Ok(Self { logits })
    }

    pub fn logits(&self) -> &DMatrix<f64> {
        &self.logits
    }

    pub fn support_size(&self) -> usize {
        self.logits.nrows()
    }

    pub fn k(&self) -> usize {
        self.logits.ncols()
    }

    /// `log H_i(x)` for every support point, via a stable log-sum-exp.
    pub fn log_output(&self) -> DMatrix<f64> {
        let mut out = self.logits.clone();
        for x in 0..out.nrows() {
            let mut row = out.row_mut(x);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.add_scalar_mut(-lse);
        }
        out
    }

    /// `H(x)`; every row sums to one.
    pub fn output(&self) -> DMatrix<f64> {
        self.log_output().map(f64::exp)
    }
}

/// `H_i(x) = Q^{(i)}(x) / Σ_j Q^{(j)}(x)`.
///
/// Support points with zero total mass do not enter the objective; they
/// get the uniform row.
pub fn optimal_discriminator(family: &DiscreteDistributionFamily) -> Result<SoftmaxDiscriminator> {
    let (k, m) = (family.k(), family.support_size());
    if (0..m).all(|x| family.total_mass(x) == 0.0) {
        return Err(Error::InvalidArgument("family has empty effective support".into()));
    }
    let logits = DMatrix::from_fn(m, k, |x, i| {
        if family.total_mass(x) == 0.0 {
            0.0
        } else {
            family.probs[(i, x)].ln()
        }
    });
    SoftmaxDiscriminator::from_logits(logits)
}

/// `(1/k) Σ_i Σ_x Q^{(i)}(x) log H_i(x)`; `−∞` when mass falls where `H_i = 0`.
pub fn cross_entropy_objective(family: &DiscreteDistributionFamily, h: &SoftmaxDiscriminator) -> Result<f64> {
    if h.support_size() != family.support_size() || h.k() != family.k() {
        return Err(Error::Shape(format!(
            "discriminator is {}x{}, family needs {}x{}",
            h.support_size(),
            h.k(),
            family.support_size(),
            family.k()
        )));
    }
    let log_h = h.log_output();
    let mut total = 0.0;
    for x in 0..family.support_size() {
        for i in 0..family.k() {
            let q = family.probs[(i, x)];
            if q > 0.0 {
                total += q * log_h[(x, i)];
            }
        }
    }
    Ok(total / family.k() as f64)
}

/// Consecutive decreasing iterations tolerated before declaring divergence.
const MAX_DECREASING_RUN: usize = 10;

/// Full-batch gradient ascent of the cross-entropy objective on the logits,
/// starting from all-zero logits with a fixed step.
pub fn train_discriminator(
    family: &DiscreteDistributionFamily,
    iters: usize,
    step: f64,
) -> Result<SoftmaxDiscriminator> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("step must be > 0".into()));
    }
    let (k, m) = (family.k(), family.support_size());
    let kf = k as f64;
    let mut logits = DMatrix::<f64>::zeros(m, k);
    let mut previous = f64::NEG_INFINITY;
    let mut decreasing = 0;
    for _ in 0..iters {
        let h = SoftmaxDiscriminator { logits: logits.clone() };
        let out = h.output();
        let value = cross_entropy_objective(family, &h)?;
        if value < previous {
            decreasing += 1;
            if decreasing >= MAX_DECREASING_RUN {
                return Err(Error::NumericFailure(
                    "discriminator ascent is decreasing the objective".into(),
                ));
            }
        } else {
            decreasing = 0;
        }
        previous = value;
        // ∂J/∂ℓ_{x,i} = (Q_i(x) − Z_x H_i(x)) / k
        let mut max_grad: f64 = 0.0;
        for x in 0..m {
            let z = family.total_mass(x);
            for i in 0..k {
                let g = (family.probs[(i, x)] - z * out[(x, i)]) / kf;
                max_grad = max_grad.max(g.abs());
                logits[(x, i)] += step * g;
            }
        }
        if !value.is_finite() || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure("non-finite discriminator logits".into()));
        }
        if max_grad == 0.0 {
            break;
        }
    }
    SoftmaxDiscriminator::from_logits(logits)
}
