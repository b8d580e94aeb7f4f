//! Per-class latent targets.
//!
//! Training data is projected onto its top `d_z` principal directions, the
//! per-class mean and population standard deviation are measured there, and
//! each class mean is then pushed outward from the center of class means to
//! radius `(c + 1) · S` along its own direction. The fixed variant instead
//! places class `c` at the constant vector `S · c`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::nn::{norm, sym_eigen, Matrix};

/// Lower bound applied to every per-class standard deviation component.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Default dispersal scale.
pub const DEFAULT_SCALE: f64 = 20.0;

/// Projection onto the top principal directions of the training features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaProjector {
    pub mean: Vec<f64>,
    /// `d_z × d_input`, rows ordered by descending eigenvalue.
    pub components: Matrix,
    /// Eigenvalues of the sample covariance (divisor `n − 1`) for the kept rows.
    pub explained_variance: Vec<f64>,
}

impl PcaProjector {
    pub fn d_z(&self) -> usize {
        self.components.rows()
    }

    pub fn d_input(&self) -> usize {
        self.components.cols()
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d_input() {
            return Err(invalid(format!(
                "PCA fitted on {} features, data has {}",
                self.d_input(),
                x.cols()
            )));
        }
        let mut centered = x.clone();
        for i in 0..centered.rows() {
            for (v, m) in centered.row_mut(i).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centered.matmul_t(&self.components)
    }

    /// Maps latent coordinates back to (centered + mean) input space.
    pub fn back_project(&self, z: &Matrix) -> Result<Matrix> {
        let mut x = z.matmul(&self.components)?;
        for i in 0..x.rows() {
            for (v, m) in x.row_mut(i).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(x)
    }
}

pub fn fit_pca(features: &Matrix, d_z: usize) -> Result<PcaProjector> {
    let (n, d) = features.shape();
    if d_z == 0 || d_z > d {
        return Err(invalid(format!(
            "latent dimension {d_z} must lie in [1, {d}]"
        )));
    }
    if n < 2 {
        return Err(invalid("PCA needs at least two samples"));
    }
    let mean = features.column_means();
    let mut centered = features.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = centered.t_matmul(&centered)?;
    let denom = (n - 1) as f64;
    cov.as_mut_slice().iter_mut().for_each(|v| *v /= denom);
    // exact symmetry; t_matmul accumulates both triangles identically but be explicit
    for i in 0..d {
        for j in i + 1..d {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    let eig = sym_eigen(&cov)?;
    let mut components = Matrix::zeros(d_z, d);
    for k in 0..d_z {
        for j in 0..d {
            components[(k, j)] = eig.vectors[(j, k)];
        }
    }
    Ok(PcaProjector {
        mean,
        components,
        explained_variance: eig.values[..d_z].to_vec(),
    })
}

/// Per-class mean and population standard deviation plus the unweighted
/// center of class means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub center: Vec<f64>,
}

impl ClassStats {
    pub fn n_classes(&self) -> usize {
        self.mu.len()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

pub fn class_stats(points: &Matrix, labels: &[usize], n_classes: usize) -> Result<ClassStats> {
    if labels.len() != points.rows() {
        return Err(invalid(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    let d = points.cols();
    let mut sums = vec![vec![0.0; d]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (row, &c) in points.iter_rows().zip(labels) {
        if c >= n_classes {
            return Err(invalid(format!("label {c} outside [0, {n_classes})")));
        }
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(invalid(format!("class {c} has no samples")));
    }
    let mu: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let mut sq = vec![vec![0.0; d]; n_classes];
    for (row, &c) in points.iter_rows().zip(labels) {
        for ((s, v), m) in sq[c].iter_mut().zip(row).zip(&mu[c]) {
            *s += (v - m) * (v - m);
        }
    }
    let sigma = sq
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| (v / n as f64).sqrt()).collect())
        .collect();
    let mut center = vec![0.0; d];
    for m in &mu {
        for (a, v) in center.iter_mut().zip(m) {
            *a += v;
        }
    }
    center.iter_mut().for_each(|v| *v /= n_classes as f64);
    Ok(ClassStats { mu, sigma, center })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorVariant {
    /// Class means dispersed along rays from the center of means.
    Transform,
    /// Class `c` placed at the constant vector `S · c`.
    Fixed,
}

/// Per-class Gaussian targets in latent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPriors {
    pub variant: PriorVariant,
    pub mu_raw: Vec<Vec<f64>>,
    /// Floored at [`SIGMA_FLOOR`].
    pub sigma: Vec<Vec<f64>>,
    pub mu_hat: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub scale: f64,
}

impl ClassPriors {
    pub fn n_classes(&self) -> usize {
        self.mu_hat.len()
    }

    pub fn d_z(&self) -> usize {
        self.center.len()
    }

    pub fn target(&self, class: usize) -> Result<&[f64]> {
        self.mu_hat
            .get(class)
            .map(Vec::as_slice)
            .ok_or_else(|| invalid(format!("no prior for class {class} (have {})", self.n_classes())))
    }
}

fn floored(sigma: &[Vec<f64>]) -> Vec<Vec<f64>> {
    sigma
        .iter()
        .map(|s| s.iter().map(|v| v.max(SIGMA_FLOOR)).collect())
        .collect()
}

fn direction(stats: &ClassStats, c: usize) -> Option<Vec<f64>> {
    let v: Vec<f64> = stats.mu[c]
        .iter()
        .zip(&stats.center)
        .map(|(m, g)| m - g)
        .collect();
    let len = norm(&v);
    let tol = 1e-12 * (1.0 + norm(&stats.center));
    (len > tol).then(|| v.into_iter().map(|x| x / len).collect())
}

fn dispersed(stats: &ClassStats, scale: f64, fallback: bool) -> Result<ClassPriors> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid(format!("dispersal scale must be positive, got {scale}")));
    }
    let d = stats.dim();
    let mut mu_hat = Vec::with_capacity(stats.n_classes());
    for c in 0..stats.n_classes() {
        let dir = match direction(stats, c) {
            Some(u) => u,
            None if fallback => {
                log::warn!(
                    "class {c} mean coincides with the center of class means; using basis axis {}",
                    c % d
                );
                let mut e = vec![0.0; d];
                e[c % d] = 1.0;
                e
            }
            None => return Err(Error::DegenerateDirection { class: c }),
        };
        let radius = (c + 1) as f64 * scale;
        mu_hat.push(
            stats
                .center
                .iter()
                .zip(&dir)
                .map(|(g, u)| g + radius * u)
                .collect(),
        );
    }
    Ok(ClassPriors {
        variant: PriorVariant::Transform,
        mu_raw: stats.mu.clone(),
        sigma: floored(&stats.sigma),
        mu_hat,
        center: stats.center.clone(),
        scale,
    })
}

/// `μ̂⁽ᶜ⁾ = μ̄ + (c+1)·S·(μ⁽ᶜ⁾ − μ̄)/‖μ⁽ᶜ⁾ − μ̄‖`; fails when a class mean sits on μ̄.
pub fn transform_means(stats: &ClassStats, scale: f64) -> Result<ClassPriors> {
    dispersed(stats, scale, false)
}

/// Like [`transform_means`], but a class whose mean sits on μ̄ is pushed along
/// the basis axis `c mod d_z` instead.
pub fn transform_means_with_fallback(stats: &ClassStats, scale: f64) -> Result<ClassPriors> {
    dispersed(stats, scale, true)
}

/// Class `c` gets the constant target `(S·c, …, S·c)`; σ still comes from `stats`.
pub fn fixed_means(stats: &ClassStats, scale: f64) -> Result<ClassPriors> {
    if stats.n_classes() < 2 {
        return Err(invalid("fixed means need at least 2 classes"));
    }
    let d = stats.dim();
    Ok(ClassPriors {
        variant: PriorVariant::Fixed,
        mu_raw: stats.mu.clone(),
        sigma: floored(&stats.sigma),
        mu_hat: (0..stats.n_classes())
            .map(|c| vec![scale * c as f64; d])
            .collect(),
        center: stats.center.clone(),
        scale,
    })
}

/// PCA projection, class statistics and the chosen mean placement, in one go.
pub fn fit_priors(train: &Dataset, d_z: usize, scale: f64, variant: PriorVariant) -> Result<(PcaProjector, ClassPriors)> {
    let pca = fit_pca(&train.features, d_z)?;
    let projected = pca.project(&train.features)?;
    let stats = class_stats(&projected, &train.labels, train.n_classes())?;
    let priors = match variant {
        PriorVariant::Transform => transform_means_with_fallback(&stats, scale)?,
        PriorVariant::Fixed => fixed_means(&stats, scale)?,
    };
    Ok((pca, priors))
}
