use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::*;
use crate::data::{make_blobs, BlobSpec};
use crate::nn::Activation;
use crate::priors::{fit_priors, PriorVariant};
use crate::rng::{seeded, Rng};

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn toy_priors(n_classes: usize, d_z: usize, rng: &mut Rng) -> ClassPriors {
    let mu_hat: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..d_z).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    ClassPriors {
        variant: PriorVariant::Transform,
        mu_raw: mu_hat.clone(),
        sigma: (0..n_classes)
            .map(|_| (0..d_z).map(|_| rng.random_range(0.05..0.5)).collect())
            .collect(),
        mu_hat,
        center: vec![0.0; d_z],
        scale: 1.0,
    }
}

// Term-by-term oracle written with explicit loops over samples and components.
fn oracle_loss(
    x: &Matrix,
    xh: &Matrix,
    z: &Matrix,
    zh: &Matrix,
    mu: &Matrix,
    lv: &Matrix,
    labels: Option<(&[usize], &ClassPriors)>,
    b: [f64; 4],
) -> f64 {
    let n = x.rows();
    let mut total = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..x.cols() {
            s += (x[(i, j)] - xh[(i, j)]).powi(2);
        }
        for j in 0..z.cols() {
            s += b[0] * (z[(i, j)] - zh[(i, j)]).powi(2);
            let var = lv[(i, j)].exp();
            s += b[1] / 2.0 * (-1.0 - var.ln() + mu[(i, j)].powi(2) + var);
            if let Some((labels, p)) = labels {
                let m = p.mu_hat[labels[i]][j];
                s += b[2] * (z[(i, j)] - m).powi(2);
                s += b[3] * (zh[(i, j)] - m).powi(2);
            }
        }
        total += s;
    }
    total / n as f64
}

#[test]
fn ae_loss_examples() {
    let x = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
    assert_eq!(ae_loss(&x, &x).unwrap(), 0.0);
    assert_eq!(ae_loss(&x, &Matrix::zeros(1, 2)).unwrap(), 1.0);
    assert!(ae_loss(&x, &Matrix::zeros(1, 3)).is_err());

    let mut rng = seeded(4);
    let a = random_matrix(7, 5, &mut rng);
    let b = random_matrix(7, 5, &mut rng);
    let mut expect = 0.0;
    for i in 0..7 {
        for j in 0..5 {
            expect += (a[(i, j)] - b[(i, j)]).powi(2);
        }
    }
    expect /= 7.0;
    assert!((ae_loss(&a, &b).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn kl_examples() {
    assert_eq!(kl_std_normal(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    assert_eq!(kl_std_normal(&[1.0], &[0.0]), 0.5);
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = seeded(21);
    for _ in 0..3 {
        let mu: f64 = rng.random_range(-1.5..1.5);
        let sd: f64 = rng.random_range(0.3..2.0);
        let q = Normal::new(mu, sd).unwrap();
        let draws = 200_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let v: f64 = q.sample(&mut rng);
            let log_q = -0.5 * ((v - mu) / sd).powi(2) - sd.ln();
            let log_p = -0.5 * v * v;
            acc += log_q - log_p;
        }
        let mc = acc / draws as f64;
        let closed = kl_std_normal(&[mu], &[(sd * sd).ln()]);
        assert!((mc - closed).abs() < 2e-2, "mu={mu} sd={sd} mc={mc} closed={closed}");
    }
}

#[test]
fn vae_reparam_contracts() {
    let mut rng = seeded(2);
    let mu = [0.3, -1.0];
    assert_eq!(reparameterize_vae(&mu, &[0.0, 0.0], &mut rng).unwrap(), mu.to_vec());
    assert!(reparameterize_vae(&mu, &[-1.0, 0.0], &mut rng).is_err());

    let a = reparameterize_vae(&mu, &[1.0, 1.0], &mut seeded(9)).unwrap();
    let b = reparameterize_vae(&mu, &[1.0, 1.0], &mut seeded(9)).unwrap();
    assert_eq!(a, b);

    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| reparameterize_vae(&[0.0], &[1.0], &mut rng).unwrap()[0])
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!(mean.abs() < 3.0 / (n as f64).sqrt());
    assert!((sd - 1.0).abs() < 0.02);
}

#[test]
fn ctvae_reparam_contracts() {
    let mut rng = seeded(5);
    let mut priors = toy_priors(2, 2, &mut rng);
    let mu = [0.4, 0.1];
    // zero encoder spread: z = μ regardless of the class noise
    assert_eq!(reparameterize_ctvae(&mu, &[0.0, 0.0], 1, &priors, &mut rng).unwrap(), mu.to_vec());
    assert!(reparameterize_ctvae(&mu, &[1.0, 1.0], 2, &priors, &mut rng).is_err());

    priors.sigma[0] = vec![0.0, 0.0];
    let z = reparameterize_ctvae(&[0.0, 0.0], &[1.0, 1.0], 0, &priors, &mut rng).unwrap();
    assert_eq!(z, priors.mu_hat[0]);

    priors.sigma[1] = vec![0.1, 0.7];
    let n = 100_000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for _ in 0..n {
        let z = reparameterize_ctvae(&[0.0, 0.0], &[1.0, 1.0], 1, &priors, &mut rng).unwrap();
        for j in 0..2 {
            sum[j] += z[j];
            sq[j] += z[j] * z[j];
        }
    }
    for j in 0..2 {
        let m = sum[j] / n as f64;
        let sd = (sq[j] / n as f64 - m * m).sqrt();
        let target = priors.mu_hat[1][j];
        assert!((m - target).abs() <= 0.01 * target.abs().max(1e-9) || (m - target).abs() < 3.0 * priors.sigma[1][j] / (n as f64).sqrt());
        assert!((sd - priors.sigma[1][j]).abs() < 0.02 * priors.sigma[1][j], "sd {sd}");
    }
}

#[test]
fn tvae_and_ctvae_loss_oracles() {
    let mut rng = seeded(77);
    let (n, d, dz) = (6, 4, 3);
    let x = random_matrix(n, d, &mut rng);
    let xh = random_matrix(n, d, &mut rng);
    let z = random_matrix(n, dz, &mut rng);
    let zh = random_matrix(n, dz, &mut rng);
    let mu = random_matrix(n, dz, &mut rng);
    let lv = random_matrix(n, dz, &mut rng);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let priors = toy_priors(3, dz, &mut rng);

    let t = tvae_loss(&x, &xh, &z, &zh, &mu, &lv, 1.0, 1.0).unwrap();
    assert!((t - oracle_loss(&x, &xh, &z, &zh, &mu, &lv, None, [1.0, 1.0, 0.0, 0.0])).abs() < 1e-12);

    let t0 = tvae_loss(&x, &xh, &z, &zh, &mu, &lv, 0.0, 0.0).unwrap();
    assert!((t0 - ae_loss(&x, &xh).unwrap()).abs() < 1e-15);

    let b = Betas::new(0.7, 1.3, 0.4, 2.1);
    let c = ctvae_loss(&x, &xh, &z, &zh, &mu, &lv, &labels, &priors, &b).unwrap();
    let o = oracle_loss(&x, &xh, &z, &zh, &mu, &lv, Some((&labels, &priors)), [0.7, 1.3, 0.4, 2.1]);
    assert!((c - o).abs() < 1e-12);

    let c_no_pull = ctvae_loss(&x, &xh, &z, &zh, &mu, &lv, &labels, &priors, &Betas::new(0.7, 1.3, 0.0, 0.0)).unwrap();
    let t_same = tvae_loss(&x, &xh, &z, &zh, &mu, &lv, 0.7, 1.3).unwrap();
    assert!((c_no_pull - t_same).abs() < 1e-15);

    assert!(ctvae_loss(&x, &xh, &z, &zh, &mu, &lv, &[0, 1, 2, 3, 0, 1], &priors, &b).is_err());
}

#[test]
fn losses_vanish_at_targets() {
    let mut rng = seeded(3);
    let priors = toy_priors(2, 2, &mut rng);
    let x = random_matrix(2, 3, &mut rng);
    let zeros = Matrix::zeros(2, 2);
    assert_eq!(tvae_loss(&x, &x, &zeros, &zeros, &zeros, &zeros, 1.0, 1.0).unwrap(), 0.0);
    let labels = [0, 1];
    let z = Matrix::from_rows(&[priors.mu_hat[0].clone(), priors.mu_hat[1].clone()]).unwrap();
    let c = ctvae_loss(&x, &x, &z, &z, &zeros, &zeros, &labels, &priors, &Betas::default()).unwrap();
    assert_eq!(c, 0.0);
}

#[test]
fn each_beta_toggles_one_term() {
    let mut rng = seeded(8);
    let (n, d, dz) = (5, 3, 2);
    let x = random_matrix(n, d, &mut rng);
    let xh = random_matrix(n, d, &mut rng);
    let z = random_matrix(n, dz, &mut rng);
    let zh = random_matrix(n, dz, &mut rng);
    let mu = random_matrix(n, dz, &mut rng);
    let lv = random_matrix(n, dz, &mut rng);
    let labels = [0, 1, 0, 1, 1];
    let priors = toy_priors(2, dz, &mut rng);
    let terms = ctvae_terms(&x, &xh, &z, &zh, &mu, &lv, &labels, &priors).unwrap();
    let base = ctvae_loss(&x, &xh, &z, &zh, &mu, &lv, &labels, &priors, &Betas::new(0.0, 0.0, 0.0, 0.0)).unwrap();
    assert_eq!(base, ae_loss(&x, &xh).unwrap());
    let probes = [
        (Betas::new(1.0, 0.0, 0.0, 0.0), terms.latent_recon),
        (Betas::new(0.0, 1.0, 0.0, 0.0), terms.kl),
        (Betas::new(0.0, 0.0, 1.0, 0.0), terms.latent_pull),
        (Betas::new(0.0, 0.0, 0.0, 1.0), terms.repr_pull),
    ];
    for (b, term) in probes {
        let l = ctvae_loss(&x, &xh, &z, &zh, &mu, &lv, &labels, &priors, &b).unwrap();
        assert!((l - base - term).abs() < 1e-12);
        assert!(term > 0.0);
    }
}

/// Central-difference check of every parameter; returns the worst relative error.
pub(crate) fn max_grad_error(model: &mut Model, x: &Matrix, labels: Option<&[usize]>, eta: &Matrix) -> f64 {
    let (_, grads) = model.loss_and_grads(x, labels, eta).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let lens = model.tensor_lens();
    for (t, &len) in lens.iter().enumerate() {
        for j in 0..len {
            let orig = model.params_mut()[t][j];
            model.params_mut()[t][j] = orig + h;
            let up = model.batch_loss(x, labels, eta).unwrap();
            model.params_mut()[t][j] = orig - h;
            let down = model.batch_loss(x, labels, eta).unwrap();
            model.params_mut()[t][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[t][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

/// Moves every parameter (biases included) to a random point.
pub(crate) fn randomize(model: &mut Model, rng: &mut Rng) {
    for p in model.params_mut() {
        p.iter_mut().for_each(|v| *v = rng.random_range(-0.8..0.8));
    }
}

#[test]
fn gradients_match_finite_differences_all_kinds() {
    let arch = ArchSpec {
        d_input: 6,
        h1: 3,
        d_z: 2,
        h2: 3,
        h3: 3,
    };
    for (k, kind) in [ModelKind::Ae, ModelKind::Vae, ModelKind::Tvae, ModelKind::Ctvae].into_iter().enumerate() {
        for act in [Activation::Tanh, Activation::Relu] {
            let mut rng = seeded(100 + k as u64);
            let betas = Betas::new(0.8, 1.2, 0.6, 1.5);
            let mut model = Model::with_activation(kind, arch, betas, act, &mut rng).unwrap();
            model.priors = Some(toy_priors(3, 2, &mut rng));
            randomize(&mut model, &mut rng);
            let x = random_matrix(5, 6, &mut rng);
            let labels = [0, 1, 2, 1, 0];
            let eta = model.sample_noise(5, &mut rng);
            let err = max_grad_error(&mut model, &x, Some(&labels), &eta);
            assert!(err < 1e-4, "{kind} {act:?}: relative error {err}");
        }
    }
}

#[test]
fn ctvae_requires_priors_and_labels() {
    let arch = ArchSpec::auto(4);
    let model = Model::new(ModelKind::Ctvae, arch, Betas::default(), &mut seeded(1)).unwrap();
    let x = Matrix::zeros(2, 4);
    let eta = Matrix::zeros(2, arch.d_z);
    assert!(model.batch_loss(&x, Some(&[0, 1]), &eta).is_err());
    let mut with = model.clone();
    with.priors = Some(toy_priors(2, arch.d_z, &mut seeded(2)));
    assert!(with.batch_loss(&x, None, &eta).is_err());
    assert!(with.batch_loss(&x, Some(&[0, 2]), &eta).is_err());
    assert!(with.batch_loss(&x, Some(&[0, 1]), &eta).is_ok());
}

fn small_blobs(seed: u64) -> (Dataset, Dataset) {
    let spec = BlobSpec {
        n_train: 300,
        n_test: 90,
        ..BlobSpec::simulation(seed)
    };
    let (tr, te) = make_blobs(&spec).unwrap();
    let stats = crate::data::fit_normalizer(&tr).unwrap();
    (
        crate::data::apply_normalizer(&stats, &tr).unwrap(),
        crate::data::apply_normalizer(&stats, &te).unwrap(),
    )
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let (tr, _) = small_blobs(1);
    let arch = ArchSpec { d_z: 2, ..ArchSpec::auto(10) };
    let (_, priors) = fit_priors(&tr, 2, 20.0, PriorVariant::Transform).unwrap();
    let spec = ModelSpec {
        kind: ModelKind::Ctvae,
        arch,
        betas: Betas::default(),
    };
    let cfg = TrainConfig {
        epochs: 200,
        lr: 1e-3,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = train(&spec, &tr, Some(priors.clone()), &cfg).unwrap();
    assert_eq!(a.history.len(), 200);
    assert!(a.history.last().unwrap() < a.history.first().unwrap());
    let b = train(&spec, &tr, Some(priors), &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
}

#[test]
fn parameter_trajectory_bit_identical() {
    let (tr, _) = small_blobs(2);
    let spec = ModelSpec {
        kind: ModelKind::Tvae,
        arch: ArchSpec::auto(10),
        betas: Betas::default(),
    };
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 30,
        seed: 11,
        ..TrainConfig::default()
    };
    // 300 rows / 30 per batch = 10 Adam steps
    let a = train(&spec, &tr, None, &cfg).unwrap().model;
    let b = train(&spec, &tr, None, &cfg).unwrap().model;
    let mut a = a;
    let mut b = b;
    let pa: Vec<u64> = a.params_mut().iter().flat_map(|s| s.iter().map(|v| v.to_bits())).collect();
    let pb: Vec<u64> = b.params_mut().iter().flat_map(|s| s.iter().map(|v| v.to_bits())).collect();
    assert_eq!(pa, pb);
}

#[test]
fn ae_memorises_single_point() {
    let row = [0.2, 0.9, 0.4, 0.7, 0.1];
    let x = Matrix::from_rows(&vec![row; 10]).unwrap();
    let data = Dataset::new(x.clone(), vec![0; 10], vec!["a".into()]).unwrap();
    let spec = ModelSpec {
        kind: ModelKind::Ae,
        arch: ArchSpec { d_z: 2, ..ArchSpec::auto(5) },
        betas: Betas::default(),
    };
    let cfg = TrainConfig {
        epochs: 500,
        lr: 1e-2,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&spec, &data, None, &cfg).unwrap();
    let xh = out.model.hermaphrodite.predict(&out.model.encode_mean(&x).unwrap()).unwrap();
    let err = ae_loss(&x, &xh).unwrap();
    assert!(err < 1e-3, "reconstruction error {err}");
}

#[test]
fn train_rejects_bad_inputs() {
    let (tr, _) = small_blobs(3);
    let spec = ModelSpec {
        kind: ModelKind::Ctvae,
        arch: ArchSpec::auto(10),
        betas: Betas::default(),
    };
    assert!(train(&spec, &tr, None, &TrainConfig::default()).is_err());
    let empty = tr.subset(&[]);
    let ae = ModelSpec { kind: ModelKind::Ae, ..spec };
    assert!(train(&ae, &empty, None, &TrainConfig::default()).is_err());
    let bad_cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    assert!(train(&ae, &tr, None, &bad_cfg).is_err());
}

#[test]
fn extraction_is_deterministic_and_sized() {
    let mut rng = seeded(6);
    let model = Model::new(ModelKind::Ctvae, ArchSpec::nbaiot(), Betas::default(), &mut rng).unwrap();
    let x = random_matrix(4, 115, &mut rng);
    let a = model.extract(&x).unwrap();
    let b = model.extract(&x).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.matrix.cols(), 10);
    assert_eq!(a.source, RepresentationSource::ReconstructionZhat);
    assert!(model.extract(&Matrix::zeros(1, 114)).is_err());

    let vae = Model::new(ModelKind::Vae, ArchSpec::auto(9), Betas::default(), &mut rng).unwrap();
    assert_eq!(vae.extract(&Matrix::zeros(2, 9)).unwrap().source, RepresentationSource::LatentMu);
}

#[test]
fn mc_samples_average_draws() {
    let (tr, _) = small_blobs(4);
    let spec = ModelSpec {
        kind: ModelKind::Vae,
        arch: ArchSpec::auto(10),
        betas: Betas::default(),
    };
    let cfg = TrainConfig {
        epochs: 3,
        mc_samples: 3,
        ..TrainConfig::default()
    };
    let out = train(&spec, &tr, None, &cfg).unwrap();
    assert!(out.history.iter().all(|l| l.is_finite()));
}

#[test]
fn model_file_round_trip_and_corruption() {
    let (tr, _) = small_blobs(5);
    let (_, priors) = fit_priors(&tr, 3, 20.0, PriorVariant::Fixed).unwrap();
    let mut model = Model::new(ModelKind::Ctvae, ArchSpec::auto(10), Betas::new(1.0, 0.5, 2.0, 1.0), &mut seeded(1)).unwrap();
    model.priors = Some(priors);
    model.normalizer = Some(crate::data::fit_normalizer(&tr).unwrap());
    let mut buf = Vec::new();
    write_model(&model, &mut buf).unwrap();
    assert_eq!(&buf[..8], MAGIC);
    assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), FORMAT_VERSION);
    let back = read_model(buf.as_slice()).unwrap();
    assert_eq!(back, model);

    assert!(read_model(&buf[..buf.len() - 3]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_model(bad.as_slice()).is_err());
    let mut bad = buf.clone();
    bad[8] = 9;
    assert!(read_model(bad.as_slice()).is_err());
    let mut extra = buf;
    extra.push(0);
    assert!(read_model(extra.as_slice()).is_err());

    let ae = Model::new(ModelKind::Ae, ArchSpec::auto(4), Betas::default(), &mut seeded(2)).unwrap();
    let mut buf = Vec::new();
    write_model(&ae, &mut buf).unwrap();
    assert_eq!(read_model(buf.as_slice()).unwrap(), ae);
}

#[test]
fn arch_rules() {
    let a = ArchSpec::auto(115);
    assert_eq!(a.d_z, 10);
    assert_eq!(ArchSpec::auto(10).d_z, 3);
    assert!(ArchSpec { h2: 0, ..a }.validate().is_err());
    assert!(Betas::new(-1.0, 1.0, 1.0, 1.0).validate().is_err());
    assert_eq!("CTVAE".parse::<ModelKind>().unwrap(), ModelKind::Ctvae);
    assert!("mae".parse::<ModelKind>().is_err());
}

#[test]
fn standard_normal_noise_shape() {
    let m = Model::new(ModelKind::Vae, ArchSpec::auto(9), Betas::default(), &mut seeded(1)).unwrap();
    let eta = m.sample_noise(4, &mut seeded(2));
    assert_eq!(eta.shape(), (4, 3));
    let _: f64 = StandardNormal.sample(&mut seeded(0));
}
