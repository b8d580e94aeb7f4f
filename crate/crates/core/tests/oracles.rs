use ctvae::clustering::{relabel_majority, RelabelConfig};
use ctvae::data::{make_blobs, BlobSpec, Dataset};
use ctvae::models::ArchSpec;
use ctvae::nn::Matrix;
use ctvae::priors::{fit_pca, fixed_means, ClassStats, DEFAULT_SCALE};
use ctvae::rng::seeded;
use rand::Rng;
use rand_distr::StandardNormal;

/// Sample covariance by explicit loops.
fn covariance(x: &Matrix) -> Vec<Vec<f64>> {
    let (n, d) = x.shape();
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            c[a][b] = (0..n).map(|i| (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b])).sum::<f64>() / (n - 1) as f64;
        }
    }
    c
}

/// Top eigenpairs by power iteration with deflation.
fn power_eigen(mut c: Vec<Vec<f64>>, k: usize) -> Vec<(f64, Vec<f64>)> {
    let d = c.len();
    let mut out = Vec::new();
    for _ in 0..k {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..20_000 {
            let w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| c[i][j] * v[j]).sum()).collect();
            let len = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let next: Vec<f64> = w.iter().map(|x| x / len).collect();
            let diff: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = next;
            lambda = len;
            if diff < 1e-15 {
                break;
            }
        }
        for i in 0..d {
            for j in 0..d {
                c[i][j] -= lambda * v[i] * v[j];
            }
        }
        out.push((lambda, v));
    }
    out
}

#[test]
fn pca_matches_power_iteration() {
    let mut rng = seeded(5);
    // anisotropic data so eigenvalues are well separated
    let scales = [5.0, 3.0, 1.5, 0.7, 0.2];
    let rows: Vec<Vec<f64>> = (0..50)
        .map(|_| scales.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mix = Matrix::from_rows(&[
        [0.8, 0.2, 0.1, 0.0, 0.3],
        [-0.1, 0.9, 0.2, 0.1, 0.0],
        [0.3, -0.2, 0.7, 0.4, 0.1],
        [0.0, 0.1, -0.3, 0.8, 0.2],
        [0.2, 0.0, 0.1, -0.2, 0.9],
    ])
    .unwrap();
    let x = Matrix::from_rows(&rows).unwrap().matmul(&mix).unwrap();
    let pca = fit_pca(&x, 2).unwrap();
    let oracle = power_eigen(covariance(&x), 2);
    let projected = pca.project(&x).unwrap();
    for (k, (lambda, v)) in oracle.iter().enumerate() {
        assert!((pca.explained_variance[k] - lambda).abs() < 1e-8 * lambda, "eigenvalue {k}");
        let dot: f64 = pca.components.row(k).iter().zip(v).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8, "eigenvector {k}");
        let col = projected.column(k);
        let var = col.iter().map(|v| v * v).sum::<f64>() / (col.len() - 1) as f64;
        assert!((var - lambda).abs() < 1e-8 * lambda, "projected variance {k}");
    }
}

#[test]
fn reference_architecture_widths() {
    let a = ArchSpec::nbaiot();
    assert_eq!((a.d_input, a.h1, a.d_z, a.h2, a.h3), (115, 50, 10, 50, 50));
    assert_eq!(ArchSpec::auto(115).d_z, 10);
}

#[test]
fn simulation_settings() {
    let s = BlobSpec::simulation(0);
    assert_eq!((s.n_classes, s.n_train, s.n_test, s.d), (3, 3500, 1500, 10));
    assert_eq!(s.std, 0.2);
    assert_eq!(s.center_box, (0.0, 1.0));
    let (train, test) = make_blobs(&s).unwrap();
    assert_eq!((train.len(), test.len(), train.dim()), (3500, 1500, 10));
}

#[test]
fn fixed_prior_origin_at_default_scale() {
    let stats = ClassStats {
        mu: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        sigma: vec![vec![1.0, 1.0]; 2],
        center: vec![0.5, 0.5],
    };
    let p = fixed_means(&stats, DEFAULT_SCALE).unwrap();
    assert_eq!(p.mu_hat[0], vec![0.0, 0.0]);
    assert_eq!(p.mu_hat[1], vec![20.0, 20.0]);
}

#[test]
fn binary_split_into_six_gives_seven_classes() {
    // six tight, distant benign blobs plus one attack class
    let mut rng = seeded(3);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for b in 0..6 {
        let angle = b as f64 * std::f64::consts::TAU / 6.0;
        for _ in 0..40 {
            let e: f64 = rng.sample(StandardNormal);
            let f: f64 = rng.sample(StandardNormal);
            rows.push(vec![20.0 * angle.cos() + 0.3 * e, 20.0 * angle.sin() + 0.3 * f]);
            labels.push(0);
        }
    }
    for _ in 0..30 {
        rows.push(vec![rng.random::<f64>(), rng.random::<f64>()]);
        labels.push(1);
    }
    let data = Dataset::new(Matrix::from_rows(&rows).unwrap(), labels, vec!["benign".into(), "attack".into()]).unwrap();
    let out = relabel_majority(&data, 0, &RelabelConfig::default()).unwrap();
    assert_eq!(out.k_star, 6);
    assert_eq!(out.data.n_classes(), 7);
}
