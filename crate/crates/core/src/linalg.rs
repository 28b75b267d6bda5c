//! Dense symmetric-matrix kernels.
//!
//! Matrices here are small (dimension up to a few dozen), so the
//! eigensolver is a plain cyclic Jacobi iteration: slow in theory,
//! very accurate and very predictable in practice.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix, used for generator factors and encoder maps.
pub type RealMatrix = DMatrix<f64>;

/// Off-diagonal mass at which Jacobi sweeps stop, relative to `‖m‖_F`.
const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues in `[-PSD_CLAMP, 0)` are rounded up to zero.
pub const PSD_CLAMP: f64 = 1e-10;

/// Components smaller than this are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-12;

/// A symmetric matrix. Construction symmetrizes by averaging with the
/// transpose, so `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Shape("symmetric matrix must have dim >= 1".into()));
        }
        let n = m.nrows();
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(Self(s))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Builds `Σ_i w_i v_i v_iᵀ`.
    pub fn from_rank_one_sum(weights: &[f64], vectors: &DMatrix<f64>) -> Result<Self> {
        if weights.len() > vectors.ncols() {
            return Err(Error::Shape("more weights than vectors".into()));
        }
        let n = vectors.nrows();
        let mut m = DMatrix::zeros(n, n);
        for (i, &w) in weights.iter().enumerate() {
            let v = vectors.column(i);
            m += w * v * &v.transpose();
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// `Σ σ_i u_i u_iᵀ` with eigenvalues sorted descending and eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigendecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    /// `U f(Λ) Uᵀ`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let fj = f(self.values[j]);
            scaled.column_mut(j).scale_mut(fj);
        }
        scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_values(|v| v)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order; each eigenvector's first
/// non-negligible component is made positive.
pub fn eig_sym(m: &SymMatrix) -> Result<Eigendecomposition> {
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let target = JACOBI_TOL * scale;

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- Jᵀ A J
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > target {
        return Err(Error::NumericFailure(format!(
            "Jacobi eigensolver did not converge in {JACOBI_MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));

    let values = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).clone_owned();
        if let Some(first) = col.iter().copied().find(|x| x.abs() > SIGN_EPS) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Ok(Eigendecomposition { values, vectors })
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

fn checked_psd(m: &SymMatrix) -> Result<Eigendecomposition> {
    let eig = eig_sym(m)?;
    let min = eig.min_value();
    if min < -PSD_CLAMP {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(eig)
}

/// Principal square root of a PSD matrix.
pub fn spd_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = checked_psd(m)?;
    SymMatrix::new(eig.map_values(|v| v.max(0.0).sqrt()))
}

/// Smallest eigenvalue below which a covariance counts as singular,
/// relative to the largest one.
const SINGULAR_REL: f64 = 1e-13;

fn checked_pd(m: &SymMatrix) -> Result<Eigendecomposition> {
    let eig = eig_sym(m)?;
    let min = eig.min_value();
    if !(min > SINGULAR_REL * eig.max_value().abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularCovariance {
            min_eigenvalue: min,
        });
    }
    Ok(eig)
}

/// Inverse of a positive definite matrix.
pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = checked_pd(m)?;
    SymMatrix::new(eig.map_values(|v| 1.0 / v))
}

/// `m^{-1/2}` for a positive definite matrix.
pub fn spd_inv_sqrt(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = checked_pd(m)?;
    SymMatrix::new(eig.map_values(|v| 1.0 / v.sqrt()))
}

/// Errors unless every eigenvalue is strictly positive (relative to the largest).
pub fn ensure_positive_definite(m: &SymMatrix) -> Result<()> {
    checked_pd(m).map(|_| ())
}

/// Clips the singular values of `b` at 1, keeping singular vectors.
///
/// This is the Frobenius-nearest matrix with `XXᵀ ⪯ I`. Inputs that are
/// already contractions are returned unchanged.
pub fn project_contraction(b: &RealMatrix) -> RealMatrix {
    if b.ncols() == 0 || b.nrows() == 0 {
        return b.clone();
    }
    let gram = SymMatrix::new(b.transpose() * b).expect("Gram matrix is square");
    // Jacobi on a finite Gram matrix only fails on NaN input.
    let eig = match eig_sym(&gram) {
        Ok(e) => e,
        Err(_) => return b.clone(),
    };
    // gram = V S² Vᵀ; only directions with s > 1 are touched.
    let clip = |lambda: f64| {
        let s = lambda.max(0.0).sqrt();
        if s > 1.0 {
            1.0 / s
        } else {
            1.0
        }
    };
    if eig.values.iter().all(|&l| clip(l) == 1.0) {
        return b.clone();
    }
    let mut shrink = b.clone();
    for j in 0..eig.dim() {
        let f = clip(eig.values[j]);
        if f == 1.0 {
            continue;
        }
        let vj = eig.vectors.column(j);
        let bv = b * vj;
        // subtract (1 - f) (B v_j) v_jᵀ
        shrink -= (1.0 - f) * bv * vj.transpose();
    }
    shrink
}

/// Relative Frobenius distance `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_symmetric(n: usize, seed: u64) -> SymMatrix {
        let g = random_matrix(n, n, seed);
        SymMatrix::new(&g + g.transpose()).unwrap()
    }

    fn random_spd(n: usize, seed: u64) -> SymMatrix {
        let g = random_matrix(n, n, seed);
        SymMatrix::new(&g * g.transpose() + DMatrix::identity(n, n) * 0.1).unwrap()
    }

    #[test]
    fn construction_symmetrizes() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s[(0, 1)], 3.0);
        assert_eq!(s[(1, 0)], 3.0);
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eig_diagonal() {
        let e = eig_sym(&SymMatrix::from_diagonal(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 1.0]);
        assert_eq!(e.vectors.column(0).as_slice(), &[0.0, 1.0]);
        assert_eq!(e.vectors.column(1).as_slice(), &[1.0, 0.0]);
        let e = eig_sym(&SymMatrix::from_diagonal(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 1.0]);
        assert_eq!(e.vectors.column(0).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn eig_two_by_two() {
        // λ² − 4λ + 3 = 0 → λ ∈ {3, 1}
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let e = eig_sym(&m).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[(0, 0)] - h).abs() < 1e-14);
        assert!((e.vectors[(1, 0)] - h).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] - h).abs() < 1e-14);
        assert!((e.vectors[(1, 1)] + h).abs() < 1e-14);
    }

    #[test]
    fn eig_random_reconstructs() {
        for seed in 0..20 {
            let m = random_symmetric(6, seed);
            let e = eig_sym(&m).unwrap();
            let resid = (e.reconstruct() - m.as_matrix()).norm();
            assert!(resid <= 1e-10 * m.frobenius_norm(), "seed {seed}: {resid}");
            let ortho = (e.vectors.transpose() * &e.vectors - DMatrix::identity(6, 6)).norm();
            assert!(ortho <= 1e-10);
            for w in e.values.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn eig_zero_matrix() {
        let e = eig_sym(&SymMatrix::new(DMatrix::zeros(3, 3)).unwrap()).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sqrt_cases() {
        let i = SymMatrix::identity(3);
        assert!((spd_sqrt(&i).unwrap().as_matrix() - i.as_matrix()).norm() < 1e-15);
        let r = spd_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((r.as_matrix() - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).norm() < 1e-14);
        for seed in 0..10 {
            let m = random_spd(5, 100 + seed);
            let r = spd_sqrt(&m).unwrap();
            let rr = r.as_matrix() * r.as_matrix();
            assert!((rr - m.as_matrix()).norm() <= 1e-9 * m.frobenius_norm());
            let comm = r.as_matrix() * m.as_matrix() - m.as_matrix() * r.as_matrix();
            assert!(comm.norm() <= 1e-9 * m.frobenius_norm());
        }
    }

    #[test]
    fn sqrt_rejects_negative() {
        let err = spd_sqrt(&SymMatrix::from_diagonal(&[1.0, -1e-3])).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
        // round-off-sized negatives are clamped
        let r = spd_sqrt(&SymMatrix::from_diagonal(&[1.0, -1e-12])).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
    }

    #[test]
    fn inverse_and_singular() {
        let m = random_spd(4, 7);
        let inv = spd_inverse(&m).unwrap();
        assert!((inv.as_matrix() * m.as_matrix() - DMatrix::identity(4, 4)).norm() < 1e-10);
        assert!(matches!(
            spd_inverse(&SymMatrix::from_diagonal(&[1.0, 0.0])),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn contraction_clips_largest() {
        // singular values (2, 0.5)
        let b = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 0.5, 0.0, 0.0]);
        let p = project_contraction(&b);
        let sv = p.clone().svd(false, false).singular_values;
        assert!((sv[0] - 1.0).abs() < 1e-14);
        assert!((sv[1] - 0.5).abs() < 1e-14);
        assert_eq!(p[(1, 1)], 0.5);
    }

    #[test]
    fn contraction_fixed_point() {
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]);
        assert_eq!(project_contraction(&b), b);
    }

    #[test]
    fn contraction_random_against_svd() {
        for seed in 0..20 {
            let b = random_matrix(6, 3, 200 + seed) * 2.0;
            let p = project_contraction(&b);
            let sv_in = b.clone().svd(true, true);
            let sv_out = p.clone().svd(false, false).singular_values;
            assert!(sv_out.max() <= 1.0 + 1e-12);
            // clipped singular values, same singular vectors
            let clipped = sv_in.singular_values.map(|s| s.min(1.0));
            let u = sv_in.u.unwrap();
            let vt = sv_in.v_t.unwrap();
            let expect = &u * DMatrix::from_diagonal(&clipped) * &vt;
            assert!((expect - &p).norm() < 1e-10);
            let again = project_contraction(&p);
            assert!((again - &p).norm() < 1e-12);
        }
    }
}
