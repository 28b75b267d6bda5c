use dlab::datasets::gen_linear_gaussian_dataset;
use dlab::linalg::SymMatrix;
use dlab::lingauss::LinearGenerator;
use dlab::metrics::{FactorVaeConfig, LinearEncoder};
use dlab::rng::rng_from_seed;
use dlab::selection::{
    cross_score, model_centrality, noise_ladder_pool, noisy_encoder, subsampled_centrality, udr_relevance, udr_score,
    udr_select, ModelEntry, ModelPool, UdrVariant,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn sigma() -> SymMatrix {
    SymMatrix::from_diagonal(&[12.0, 8.0, 5.0, 3.0, 2.0, 1.0, 0.6, 0.3])
}

fn quick_cfg() -> FactorVaeConfig {
    FactorVaeConfig {
        groups_per_factor: 50,
        group_size: 50,
        reference_samples: 5000,
        ..FactorVaeConfig::default()
    }
}

#[test]
fn exact_encoder_cross_scores_its_own_generator_highly() {
    let gen = LinearGenerator::pca_exact(sigma(), 5).unwrap();
    let exact = LinearEncoder::from_generator(&gen).unwrap();
    assert!(cross_score(&exact, &gen, &FactorVaeConfig::default()).unwrap() >= 0.99);
}

#[test]
fn random_projection_of_high_dimensional_data_is_near_chance() {
    // five weak codes among 200 dimensions, so a random projection carries
    // almost none of their variance
    let mut eig = vec![1.2; 5];
    eig.extend(vec![1.0; 195]);
    let gen = LinearGenerator::pca_exact(SymMatrix::from_diagonal(&eig), 5).unwrap();
    let mut rng = rng_from_seed(90);
    let w = DMatrix::from_fn(5, 200, |_, _| rng.sample::<f64, _>(StandardNormal));
    let score = cross_score(&LinearEncoder::new(w).unwrap(), &gen, &FactorVaeConfig::default()).unwrap();
    assert!(score <= 0.3, "random encoder scored {score}");
}

#[test]
fn identical_perfect_models_tie_and_the_first_is_selected() {
    let gen = LinearGenerator::pca_exact(sigma(), 3).unwrap();
    let entries = (0..4)
        .map(|i| ModelEntry::with_exact_encoder(format!("m{i}"), gen.clone()).unwrap())
        .collect();
    let pool = ModelPool::new(entries).unwrap();
    let (sim, report) = model_centrality(&pool, &quick_cfg()).unwrap();
    for &s in &sim.scores {
        assert!(s >= 0.99);
        assert_eq!(s, sim.scores[0]);
    }
    assert_eq!(report.selected, 0);
}

#[test]
fn noise_model_scores_strictly_lowest() {
    let pool = noise_ladder_pool(&sigma(), 3, &[0.0, 0.1, 1.0, 0.2], 4).unwrap();
    let (sim, report) = model_centrality(&pool, &quick_cfg()).unwrap();
    for (i, &s) in sim.scores.iter().enumerate() {
        if i != 2 {
            assert!(s > sim.scores[2], "model {i} score {s} vs noise {}", sim.scores[2]);
        }
    }
    assert_ne!(report.selected, 2);
}

#[test]
fn subsampled_scores_track_full_scores() {
    let pool = noise_ladder_pool(&sigma(), 3, &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0], 6).unwrap();
    let (sim, _) = model_centrality(&pool, &quick_cfg()).unwrap();
    let rep = subsampled_centrality(&sim, 0.8, 100, 11).unwrap();
    let se = rep.stderr.unwrap();
    for i in 0..sim.len() {
        assert!(se[i] > 0.0);
        assert!((rep.scores[i] - sim.scores[i]).abs() <= 3.0 * se[i]);
    }
}

#[test]
fn udr_self_regression_is_diagonal() {
    let gen = LinearGenerator::pca_exact(sigma(), 3).unwrap();
    let enc = LinearEncoder::from_generator(&gen).unwrap();
    // distinct code variances
    let mut w = enc.weights().clone();
    for (i, s) in [1.0, 2.5, 0.4].iter().enumerate() {
        w.row_mut(i).scale_mut(*s);
    }
    let enc = LinearEncoder::new(w).unwrap();
    let samples = gen_linear_gaussian_dataset(&gen, 3000, 2).unwrap().samples().clone();
    let r = udr_relevance(&enc, &enc, &samples, UdrVariant::Lasso { lambda: 1e-4 }).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((r[(i, j)] - target).abs() <= 0.05, "R = {r}");
        }
    }
    assert!(udr_score(&r) > 0.95);
}

#[test]
fn udr_spearman_recovers_a_permutation() {
    let gen = LinearGenerator::pca_exact(sigma(), 3).unwrap();
    let enc = LinearEncoder::from_generator(&gen).unwrap();
    let perm = [2, 0, 1];
    let w = enc.weights();
    let permuted = DMatrix::from_fn(3, w.ncols(), |i, j| w[(perm[i], j)]);
    let enc_p = LinearEncoder::new(permuted).unwrap();
    let n = 4000;
    let samples = gen_linear_gaussian_dataset(&gen, n, 5).unwrap().samples().clone();
    let r = udr_relevance(&enc, &enc_p, &samples, UdrVariant::Spearman).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if perm[j] == i {
                assert!((r[(i, j)] - 1.0).abs() <= 1e-6);
            } else {
                // independent codes: sample rank correlation of order 1/sqrt(n)
                assert!(r[(i, j)] <= 4.0 / (n as f64).sqrt(), "R = {r}");
            }
        }
    }
}

#[test]
fn udr_null_relevance_shrinks_with_sample_size() {
    let mut rng = rng_from_seed(21);
    let d = 6;
    let a = DMatrix::from_fn(3, d, |i, j| if j == i { 1.0 } else { 0.0 });
    let b = DMatrix::from_fn(3, d, |i, j| if j == i + 3 { 1.0 } else { 0.0 });
    let (ea, eb) = (LinearEncoder::new(a).unwrap(), LinearEncoder::new(b).unwrap());
    let mut previous = f64::INFINITY;
    for n in [200, 2000, 20000] {
        let samples = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = udr_relevance(&ea, &eb, &samples, UdrVariant::Spearman).unwrap();
        let worst = r.amax();
        assert!(worst <= 4.0 / (n as f64).sqrt(), "n={n}: {worst}");
        assert!(worst < previous || n == 200);
        previous = worst;
    }
}

#[test]
fn udr_prefers_consistent_models() {
    let pool = noise_ladder_pool(&sigma(), 3, &[0.0, 0.05, 0.1, 0.9], 8).unwrap();
    let samples = gen_linear_gaussian_dataset(&pool.entries()[0].generator, 2000, 3).unwrap().samples().clone();
    for variant in [UdrVariant::Lasso { lambda: UdrVariant::DEFAULT_LAMBDA }, UdrVariant::Spearman] {
        let (u, report) = udr_select(&pool, &samples, variant).unwrap();
        assert_eq!(u.shape(), (4, 4));
        let worst = report.scores.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(worst, report.scores[3], "{variant:?}: {:?}", report.scores);
        assert_ne!(report.selected, 3);
    }
}

#[test]
fn manifest_round_trip_preserves_models() {
    let pool = noise_ladder_pool(&sigma(), 2, &[0.0, 0.5, 1.0], 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = pool.write_manifest(dir.path()).unwrap();
    let back = ModelPool::load_manifest(&manifest).unwrap();
    assert_eq!(back.labels(), pool.labels());
    for (a, b) in pool.entries().iter().zip(back.entries()) {
        assert_eq!(a.encoder.weights(), b.encoder.weights());
        assert_eq!(a.generator.b(), b.generator.b());
    }
    let gen = &pool.entries()[0].generator;
    let enc = noisy_encoder(gen, 0.0, 0).unwrap();
    let exact = LinearEncoder::from_generator(gen).unwrap();
    assert!((enc.weights() - exact.weights()).amax() < 1e-12);
}
