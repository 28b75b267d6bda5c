//! Sample-based checks of the closed forms for linear-Gaussian generators.
//! Samples are drawn here from first principles rather than through the
//! library's own sampler.

use dlab::datasets::gen_linear_gaussian_dataset;
use dlab::linalg::SymMatrix;
use dlab::lingauss::{conditional_mean_map, generated_covariance, paired_covariance, LinearGenerator};
use dlab::rng::rng_from_seed;
use dlab::verify::random_bias_case;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const N: usize = 100_000;

fn normal_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Entrywise sample covariance of zero-mean rows with standard errors of
/// each entry estimated from the products `x_p x_q`.
fn covariance_with_se(rows: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, d) = rows.shape();
    let mut mean = DMatrix::<f64>::zeros(d, d);
    let mut sq = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        for p in 0..d {
            for q in 0..d {
                let v = rows[(i, p)] * rows[(i, q)];
                mean[(p, q)] += v;
                sq[(p, q)] += v * v;
            }
        }
    }
    let nf = n as f64;
    mean /= nf;
    let se = DMatrix::from_fn(d, d, |p, q| ((sq[(p, q)] / nf - mean[(p, q)].powi(2)) / nf).sqrt());
    (mean, se)
}

fn assert_within_se(est: &DMatrix<f64>, se: &DMatrix<f64>, truth: &DMatrix<f64>, what: &str) {
    for p in 0..est.nrows() {
        for q in 0..est.ncols() {
            let dev = (est[(p, q)] - truth[(p, q)]).abs();
            assert!(
                dev <= 3.0 * se[(p, q)] + 1e-12,
                "{what} entry ({p},{q}): estimate {} vs {} (se {})",
                est[(p, q)],
                truth[(p, q)],
                se[(p, q)]
            );
        }
    }
}

#[test]
fn conditional_mean_matches_regression_of_codes_on_data() {
    let mut rng = rng_from_seed(1001);
    let gen = loop {
        let g = random_bias_case(5, &mut rng).unwrap();
        if g.d() >= 3 && g.r() >= 2 {
            break g;
        }
    };
    let (d, r) = (gen.d(), gen.r());
    let mut x = DMatrix::zeros(N, d);
    let mut c = DMatrix::zeros(N, r);
    for i in 0..N {
        let ci = normal_vec(&mut rng, r);
        let zi = normal_vec(&mut rng, d);
        let xi = gen.b() * &ci + gen.a() * zi;
        c.set_row(i, &ci.transpose());
        x.set_row(i, &xi.transpose());
    }
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx.clone().try_inverse().unwrap();
    let coef = (xtx.cholesky().unwrap().solve(&(x.transpose() * &c))).transpose();
    let resid = &c - &x * coef.transpose();
    let truth = conditional_mean_map(&gen).unwrap();
    let mut se = DMatrix::zeros(r, d);
    for a in 0..r {
        let s2 = resid.column(a).norm_squared() / (N - d) as f64;
        for j in 0..d {
            se[(a, j)] = (s2 * xtx_inv[(j, j)]).sqrt();
        }
    }
    assert_within_se(&coef, &se, &truth, "regression coefficient");
}

#[test]
fn generated_covariance_matches_samples_for_arbitrary_noise_map() {
    let mut rng = rng_from_seed(1002);
    let (d, r) = (4, 2);
    let b = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = DMatrix::from_fn(d, d, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let gen = LinearGenerator::new(b.clone(), a.clone(), SymMatrix::identity(d)).unwrap();
    let mut x = DMatrix::zeros(N, d);
    for i in 0..N {
        let xi = &b * normal_vec(&mut rng, r) + &a * normal_vec(&mut rng, d);
        x.set_row(i, &xi.transpose());
    }
    let (est, se) = covariance_with_se(&x);
    assert_within_se(&est, &se, generated_covariance(&gen).as_matrix(), "covariance");
}

#[test]
fn paired_covariance_matches_coupled_samples() {
    let mut rng = rng_from_seed(1003);
    let gen = loop {
        let g = random_bias_case(4, &mut rng).unwrap();
        if g.r() >= 2 {
            break g;
        }
    };
    let (d, r) = (gen.d(), gen.r());
    let shared = 1;
    let mut pairs = DMatrix::zeros(N, 2 * d);
    for i in 0..N {
        let c1 = normal_vec(&mut rng, r);
        let mut c2 = normal_vec(&mut rng, r);
        c2[shared] = c1[shared];
        let x1 = gen.b() * c1 + gen.a() * normal_vec(&mut rng, d);
        let x2 = gen.b() * c2 + gen.a() * normal_vec(&mut rng, d);
        pairs.view_mut((i, 0), (1, d)).copy_from(&x1.transpose());
        pairs.view_mut((i, d), (1, d)).copy_from(&x2.transpose());
    }
    let (est, se) = covariance_with_se(&pairs);
    assert_within_se(&est, &se, paired_covariance(&gen, shared).unwrap().as_matrix(), "paired covariance");
}

#[test]
fn linear_dataset_has_the_target_covariance() {
    let sigma = SymMatrix::new(DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.4, 0.5, -0.4, 2.0])).unwrap();
    let gen = LinearGenerator::pca_exact(sigma.clone(), 2).unwrap();
    let ds = gen_linear_gaussian_dataset(&gen, N, 17).unwrap();
    let (est, se) = covariance_with_se(ds.samples());
    assert_within_se(&est, &se, sigma.as_matrix(), "data covariance");
    let (fac, fac_se) = covariance_with_se(ds.factors());
    assert_within_se(&fac, &fac_se, &DMatrix::identity(2, 2), "factor covariance");
    for col in ds.samples().column_iter() {
        let mean = col.mean();
        let sd = (col.variance() / N as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sd, "sample mean {mean} (se {sd})");
    }
}
