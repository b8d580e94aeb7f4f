use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::priors::ClassPriors;
use crate::rng::Rng;

/// `z = μ + σ ⊙ ε`, `ε ~ N(0, I)`.
pub fn reparameterize_vae(mu: &[f64], sigma: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    check(mu, sigma)?;
    Ok(mu
        .iter()
        .zip(sigma)
        .map(|(&m, &s)| {
            let e: f64 = StandardNormal.sample(rng);
            m + s * e
        })
        .collect())
}

/// Class-conditional noise `ε = μ̂⁽ᶜ⁾ + σ⁽ᶜ⁾ ⊙ η` for a standard-normal draw `η`.
pub fn class_noise(priors: &ClassPriors, class: usize, eta: &[f64]) -> Result<Vec<f64>> {
    let target = priors.target(class)?;
    let spread = &priors.sigma[class];
    if eta.len() != target.len() {
        return Err(invalid(format!(
            "noise width {} does not match prior width {}",
            eta.len(),
            target.len()
        )));
    }
    Ok(target
        .iter()
        .zip(spread)
        .zip(eta)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// `z = μ + σ ⊙ ε`, `ε ~ N(μ̂⁽ᶜ⁾, diag(σ⁽ᶜ⁾)²)`.
pub fn reparameterize_ctvae(
    mu: &[f64],
    sigma: &[f64],
    class: usize,
    priors: &ClassPriors,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check(mu, sigma)?;
    let eta: Vec<f64> = (0..mu.len()).map(|_| StandardNormal.sample(rng)).collect();
    let eps = class_noise(priors, class, &eta)?;
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

fn check(mu: &[f64], sigma: &[f64]) -> Result<()> {
    if mu.len() != sigma.len() {
        return Err(invalid(format!(
            "μ has {} components, σ has {}",
            mu.len(),
            sigma.len()
        )));
    }
    if sigma.iter().any(|&s| s < 0.0) {
        return Err(invalid("σ must be non-negative"));
    }
    Ok(())
}
