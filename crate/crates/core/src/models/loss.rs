//! Batch losses. Squared errors are summed over components and averaged
//! over the batch.

use crate::error::{invalid, Result};
use crate::nn::{sq_dist, Matrix};
use crate::priors::ClassPriors;

use super::Betas;

/// Mean over rows of `‖x − x̂‖²`.
pub fn ae_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    x.check_same_shape(x_hat)?;
    Ok(mean_sq_dist(x, x_hat))
}

fn mean_sq_dist(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows().max(1) as f64;
    a.iter_rows().zip(b.iter_rows()).map(|(u, v)| sq_dist(u, v)).sum::<f64>() / n
}

/// `KL(N(μ, σ²) ‖ N(0, I)) = ½ Σ_j (−1 − log σ_j² + μ_j² + σ_j²)` with `logvar = log σ²`.
pub fn kl_std_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| -1.0 - lv + m * m + lv.exp())
        .sum::<f64>()
}

/// Batch-averaged loss components, unweighted.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    /// `‖x − x̂‖²`
    pub input_recon: f64,
    /// `‖z − ẑ‖²`
    pub latent_recon: f64,
    /// closed-form KL to the standard normal
    pub kl: f64,
    /// `‖z − μ̂⁽ᶜ⁾‖²`
    pub latent_pull: f64,
    /// `‖ẑ − μ̂⁽ᶜ⁾‖²`
    pub repr_pull: f64,
}

impl LossTerms {
    pub fn weighted(&self, b: &Betas) -> f64 {
        self.input_recon + b.b1 * self.latent_recon + b.b2 * self.kl + b.b3 * self.latent_pull + b.b4 * self.repr_pull
    }
}

fn check_latents(z: &Matrix, z_hat: &Matrix, mu: &Matrix, logvar: &Matrix) -> Result<()> {
    z.check_same_shape(z_hat)?;
    z.check_same_shape(mu)?;
    z.check_same_shape(logvar)
}

/// Input reconstruction, latent reconstruction and KL terms.
pub fn tvae_terms(x: &Matrix, x_hat: &Matrix, z: &Matrix, z_hat: &Matrix, mu: &Matrix, logvar: &Matrix) -> Result<LossTerms> {
    x.check_same_shape(x_hat)?;
    check_latents(z, z_hat, mu, logvar)?;
    if x.rows() != z.rows() {
        return Err(invalid(format!(
            "batch sizes differ: {} inputs, {} latents",
            x.rows(),
            z.rows()
        )));
    }
    let n = x.rows().max(1) as f64;
    let kl = mu
        .iter_rows()
        .zip(logvar.iter_rows())
        .map(|(m, lv)| kl_std_normal(m, lv))
        .sum::<f64>()
        / n;
    Ok(LossTerms {
        input_recon: mean_sq_dist(x, x_hat),
        latent_recon: mean_sq_dist(z, z_hat),
        kl,
        ..LossTerms::default()
    })
}

/// `mean_i[‖x−x̂‖² + β₁‖z−ẑ‖² + (β₂/2) Σ_j(−1 − log σ² + μ² + σ²)]`.
pub fn tvae_loss(
    x: &Matrix,
    x_hat: &Matrix,
    z: &Matrix,
    z_hat: &Matrix,
    mu: &Matrix,
    logvar: &Matrix,
    b1: f64,
    b2: f64,
) -> Result<f64> {
    let t = tvae_terms(x, x_hat, z, z_hat, mu, logvar)?;
    Ok(t.input_recon + b1 * t.latent_recon + b2 * t.kl)
}

/// All five terms of the constrained loss; `f(·)` maps each sample to the
/// target mean of its own label.
pub fn ctvae_terms(
    x: &Matrix,
    x_hat: &Matrix,
    z: &Matrix,
    z_hat: &Matrix,
    mu: &Matrix,
    logvar: &Matrix,
    labels: &[usize],
    priors: &ClassPriors,
) -> Result<LossTerms> {
    let mut t = tvae_terms(x, x_hat, z, z_hat, mu, logvar)?;
    if labels.len() != z.rows() {
        return Err(invalid(format!("{} labels for batch of {}", labels.len(), z.rows())));
    }
    if z.cols() != priors.d_z() {
        return Err(invalid(format!(
            "latent width {} does not match priors of width {}",
            z.cols(),
            priors.d_z()
        )));
    }
    let n = z.rows().max(1) as f64;
    let (mut lp, mut rp) = (0.0, 0.0);
    for ((zr, zh), &c) in z.iter_rows().zip(z_hat.iter_rows()).zip(labels) {
        let target = priors.target(c)?;
        lp += sq_dist(zr, target);
        rp += sq_dist(zh, target);
    }
    t.latent_pull = lp / n;
    t.repr_pull = rp / n;
    Ok(t)
}

pub fn ctvae_loss(
    x: &Matrix,
    x_hat: &Matrix,
    z: &Matrix,
    z_hat: &Matrix,
    mu: &Matrix,
    logvar: &Matrix,
    labels: &[usize],
    priors: &ClassPriors,
    betas: &Betas,
) -> Result<f64> {
    ctvae_terms(x, x_hat, z, z_hat, mu, logvar, labels, priors).map(|t| t.weighted(betas))
}
