//! PCA checked against an independent dense eigensolver (nalgebra) and against
//! its own alternate (Gram vs covariance) route.

use nalgebra::{DMatrix, SymmetricEigen};
use pairnet::pca::{fit_pca, PcaModel, PcaOptions, Route};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = pairnet::rng::stream(seed, &[0xda7a]);
    (0..n).map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * (1.0 + (seed % 3) as f64)).collect()).collect()
}

fn covariance(x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let d = x[0].len();
    let data = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    centered.transpose() * &centered / (n as f64 - 1.0)
}

/// Largest sine of the principal angles between the row spaces of `a` and `b`
/// (both with orthonormal rows).
fn max_principal_sine(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = a[0].len();
    let am = DMatrix::from_fn(a.len(), d, |i, j| a[i][j]);
    let bm = DMatrix::from_fn(b.len(), d, |i, j| b[i][j]);
    let residual = &am - &am * bm.transpose() * &bm;
    residual.singular_values().max()
}

fn opts(route: Route) -> PcaOptions {
    PcaOptions { standardize: true, route }
}

#[test]
fn matches_dense_eigensolver_on_covariance() {
    let x = random_points(5, 8, 42);
    let model = fit_pca(&x, 3, opts(Route::Auto)).unwrap();
    let eig = SymmetricEigen::new(covariance(&x));
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    for (k, &idx) in order.iter().take(3).enumerate() {
        let want = eig.eigenvalues[idx];
        assert!((model.eigenvalues[k] - want).abs() < 1e-8, "eigenvalue {k}: {} vs {want}", model.eigenvalues[k]);
        let col = eig.eigenvectors.column(idx);
        let dotp: f64 = (0..8).map(|i| col[i] * model.components[k][i]).sum();
        let sign = dotp.signum();
        for i in 0..8 {
            assert!((model.components[k][i] - sign * col[i]).abs() < 1e-8, "component {k} entry {i}");
        }
    }
}

#[test]
fn gram_and_covariance_routes_span_the_same_subspace() {
    for seed in 0..50u64 {
        let mut rng = pairnet::rng::stream(seed, &[7]);
        let n = rng.random_range(3..=20);
        let d = rng.random_range(n + 1..=50);
        let m = rng.random_range(1..n.min(4) + 1).min(n - 1);
        let x = random_points(n, d, seed);
        let gram = fit_pca(&x, m, opts(Route::Gram)).unwrap();
        let cov = fit_pca(&x, m, opts(Route::Covariance)).unwrap();
        let s = max_principal_sine(&gram.components, &cov.components);
        assert!(s < 1e-6, "seed {seed} (n={n}, d={d}, m={m}): sin angle {s}");
        for (a, b) in gram.eigenvalues.iter().zip(&cov.eigenvalues) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}

fn assert_orthonormal(model: &PcaModel) {
    for (i, a) in model.components.iter().enumerate() {
        for (j, b) in model.components.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            let got: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            assert!((got - want).abs() <= 1e-8, "<w{i}, w{j}> = {got}");
        }
    }
}

#[test]
fn components_orthonormal_and_sorted() {
    for (n, d, m) in [(30, 5, 4), (10, 40, 9), (12, 12, 6)] {
        let model = fit_pca(&random_points(n, d, (n * d) as u64), m, opts(Route::Auto)).unwrap();
        assert_orthonormal(&model);
        assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(model.eigenvalues.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn standardized_training_coordinates_have_unit_variance() {
    let x = random_points(40, 6, 3);
    let model = fit_pca(&x, 4, opts(Route::Auto)).unwrap();
    let coords = model.project_all(&x).unwrap();
    for k in 0..4 {
        let vals: Vec<f64> = coords.iter().map(|c| c[k]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0);
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-6, "coordinate {k} variance {var}");
    }
}

#[test]
fn projection_is_idempotent_through_reconstruction() {
    let x = random_points(15, 25, 9);
    let model = fit_pca(&x, 5, opts(Route::Auto)).unwrap();
    for sample in &x {
        let coords = model.project(sample).unwrap();
        let back = model.project(&model.reconstruct(&coords).unwrap()).unwrap();
        for (a, b) in coords.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn reconstruction_error_non_increasing_in_m() {
    let x = random_points(12, 20, 5);
    let mut last = f64::INFINITY;
    for m in 1..=11 {
        let model = fit_pca(&x, m, opts(Route::Auto)).unwrap();
        let err: f64 = x
            .iter()
            .map(|s| {
                let r = model.reconstruct(&model.project(s).unwrap()).unwrap();
                s.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / x.len() as f64;
        assert!(err <= last + 1e-12, "m={m}: {err} > {last}");
        last = err;
    }
    assert!(last < 1e-18, "full rank reconstruction should be exact, got {last}");
}

#[test]
fn explained_variance_is_one_on_rank_m_data() {
    // 3-dimensional data embedded in 10 dimensions.
    let basis = random_points(3, 10, 77);
    let coeffs = random_points(25, 3, 78);
    let x: Vec<Vec<f64>> = coeffs
        .iter()
        .map(|c| (0..10).map(|j| (0..3).map(|k| c[k] * basis[k][j]).sum::<f64>() + 4.0).collect())
        .collect();
    let model = fit_pca(&x, 3, opts(Route::Auto)).unwrap();
    assert!((model.explained_variance(3).unwrap() - 1.0).abs() < 1e-8);
    let model = fit_pca(&x, 3, opts(Route::Gram)).unwrap();
    assert!((model.explained_variance(3).unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn isotropic_first_component_explains_a_third() {
    let x: Vec<Vec<f64>> = {
        let mut rng = pairnet::rng::stream(5, &[1]);
        (0..100_000).map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect()
    };
    let model = fit_pca(&x, 3, opts(Route::Auto)).unwrap();
    let ev = model.explained_variance(1).unwrap();
    // Largest of three sample variances each with sd about sqrt(2/n): well within 0.01 of 1/3.
    assert!((ev - 1.0 / 3.0).abs() < 0.01, "{ev}");
}
